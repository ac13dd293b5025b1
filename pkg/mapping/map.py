"""Map data model: keyframes, anchored inverse-depth map points, covisibility, snapshots."""
import threading
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Deque, Dict, Iterable, List, Optional, Set, Tuple

import numpy as np

from geometry import CameraModel, Se3Pose
from imgproc import ImagePyramid

if TYPE_CHECKING:
    from frontend.frame import Keypoint

MAX_POINT_DESCRIPTORS = 10


@dataclass(eq=False)
class Keyframe:
    id: int
    timestamp: float
    pose_wc: Se3Pose
    keypoints: Dict[int, 'Keypoint']
    pyramid: Optional[ImagePyramid] = None
    right_pyramid: Optional[ImagePyramid] = None
    # map point id -> keypoint id, maintained by SlamMap
    point_to_keypoint: Dict[int, int] = field(default_factory=dict)
    bow: Dict[int, float] = field(default_factory=dict)
    tombstoned: bool = False

    @property
    def pose_cw(self) -> Se3Pose:
        return self.pose_wc.inverse()

    def observed_points(self) -> Set[int]:
        return set(self.point_to_keypoint)

    def keypoints_2d(self) -> List['Keypoint']:
        return [kp for kp in self.keypoints.values() if kp.map_point_id is None]

    def keypoints_3d(self) -> List['Keypoint']:
        return [kp for kp in self.keypoints.values() if kp.map_point_id is not None]


@dataclass(eq=False)
class MapPoint:
    """3D landmark anchored in its first observing keyframe with an inverse depth."""
    id: int
    anchor_kf: int
    anchor_px: np.ndarray
    inv_depth: float
    position: np.ndarray
    descriptors: Deque[np.ndarray] = field(default_factory=lambda: deque(maxlen=MAX_POINT_DESCRIPTORS))
    observers: Set[int] = field(default_factory=set)

    def anchor_bearing(self, camera: CameraModel) -> np.ndarray:
        return camera.unproject(self.anchor_px)

    def world_position(self, anchor_pose_wc: Se3Pose, camera: CameraModel) -> np.ndarray:
        return anchor_pose_wc.act(self.anchor_bearing(camera) / self.inv_depth)


class CovisibilityGraph:
    """Keyframe adjacency weighted by the number of shared map-point observations."""

    def __init__(self):
        self._edges: Dict[int, Counter] = defaultdict(Counter)

    def add_shared(self, kf_id: int, others: Iterable[int]) -> None:
        for other in others:
            if other == kf_id:
                continue
            self._edges[kf_id][other] += 1
            self._edges[other][kf_id] += 1

    def remove_shared(self, kf_id: int, others: Iterable[int]) -> None:
        for other in others:
            if other == kf_id:
                continue
            for a, b in ((kf_id, other), (other, kf_id)):
                self._edges[a][b] -= 1
                if self._edges[a][b] <= 0:
                    del self._edges[a][b]

    def remove_keyframe(self, kf_id: int) -> None:
        for other in list(self._edges.get(kf_id, ())):
            self._edges[other].pop(kf_id, None)
        self._edges.pop(kf_id, None)

    def neighbors(self, kf_id: int, min_shared: int = 1) -> Dict[int, int]:
        return {k: v for k, v in self._edges.get(kf_id, {}).items() if v >= min_shared}

    def count(self, a: int, b: int) -> int:
        return self._edges.get(a, {}).get(b, 0)

    def as_dict(self) -> Dict[int, Dict[int, int]]:
        return {k: dict(v) for k, v in self._edges.items() if v}

    @staticmethod
    def from_observers(observer_sets: Iterable[Set[int]]) -> 'CovisibilityGraph':
        """Brute-force recomputation from per-point observer sets."""
        graph = CovisibilityGraph()
        for observers in observer_sets:
            observers = sorted(observers)
            for i, a in enumerate(observers):
                for b in observers[i + 1:]:
                    graph._edges[a][b] += 1
                    graph._edges[b][a] += 1
        return graph


@dataclass(frozen=True, eq=False)
class MapSnapshot:
    """Immutable view of the map published to the front-end after each commit."""
    positions: Dict[int, np.ndarray]
    aliases: Dict[int, int]
    keyframe_poses: Dict[int, Se3Pose]
    correction_epoch: int = 0
    # product of every world correction recorded so far, newest on the left
    correction: Optional[Se3Pose] = None

    @classmethod
    def empty(cls) -> 'MapSnapshot':
        return cls({}, {}, {})

    def resolve(self, kp_id: int) -> Optional[int]:
        """Map point observed through a keypoint id, if any."""
        target = self.aliases.get(kp_id, kp_id)
        if target in self.positions:
            return target
        if kp_id in self.positions:
            return kp_id
        return None


class SlamMap:
    def __init__(self, camera: CameraModel, max_descriptors: int = MAX_POINT_DESCRIPTORS):
        """Initialize an empty map.

        Args:
            camera: Left camera, used to evaluate anchored points
            max_descriptors: Cap on descriptors kept per map point
        """
        self.camera = camera
        self.max_descriptors = max_descriptors
        self.lock = threading.RLock()
        self.keyframes: Dict[int, Keyframe] = {}
        self.points: Dict[int, MapPoint] = {}
        self.covisibility = CovisibilityGraph()
        self.aliases: Dict[int, int] = {}
        self.loop_closures = 0
        self._pins: Counter = Counter()
        self._snapshot = MapSnapshot.empty()
        self._correction_epoch = 0
        self._correction: Optional[Se3Pose] = None

    # --- keyframes ----------------------------------------------------------------

    def add_keyframe(self, kf: Keyframe) -> None:
        """Register a keyframe and the observations of its already-3D keypoints."""
        with self.lock:
            self.keyframes[kf.id] = kf
            for kp in list(kf.keypoints.values()):
                mp_id = kp.map_point_id
                kp.map_point_id = None
                if mp_id is not None and mp_id in self.points:
                    self.add_observation(mp_id, kf.id, kp.id)

    def keyframe(self, kf_id: int) -> Optional[Keyframe]:
        return self.keyframes.get(kf_id)

    def last_keyframe(self) -> Optional[Keyframe]:
        with self.lock:
            return self.keyframes[max(self.keyframes)] if self.keyframes else None

    def set_keyframe_pose(self, kf_id: int, pose_wc: Se3Pose) -> None:
        """Move a keyframe; every point anchored in it moves rigidly with it."""
        with self.lock:
            kf = self.keyframes[kf_id]
            kf.pose_wc = pose_wc
            for mp in self.points.values():
                if mp.anchor_kf == kf_id:
                    mp.position = mp.world_position(pose_wc, self.camera)

    def remove_keyframe(self, kf_id: int) -> bool:
        """Remove a keyframe, re-anchoring its points; deferred while the keyframe is pinned."""
        with self.lock:
            kf = self.keyframes.get(kf_id)
            if kf is None:
                return False
            if self._pins[kf_id] > 0:
                kf.tombstoned = True
                return False
            for mp_id in list(kf.point_to_keypoint):
                self.remove_observation(mp_id, kf_id)
            self.covisibility.remove_keyframe(kf_id)
            del self.keyframes[kf_id]
            return True

    def pin(self, kf_ids: Iterable[int]) -> None:
        with self.lock:
            for kf_id in kf_ids:
                self._pins[kf_id] += 1

    def unpin(self, kf_ids: Iterable[int]) -> None:
        with self.lock:
            for kf_id in kf_ids:
                self._pins[kf_id] -= 1
                if self._pins[kf_id] <= 0:
                    del self._pins[kf_id]
                    kf = self.keyframes.get(kf_id)
                    if kf is not None and kf.tombstoned:
                        kf.tombstoned = False
                        self.remove_keyframe(kf_id)

    def is_pinned(self, kf_id: int) -> bool:
        return self._pins[kf_id] > 0

    def covisible_keyframes(self, kf_id: int, min_shared: int = 1) -> List[int]:
        """Neighbors sorted by shared count (descending), then id."""
        with self.lock:
            neighbors = self.covisibility.neighbors(kf_id, min_shared)
        return [k for k, _ in sorted(neighbors.items(), key=lambda item: (-item[1], item[0]))]

    def local_map_points(self, kf_id: int) -> Set[int]:
        """Points observed by the keyframe or any covisible keyframe."""
        with self.lock:
            ids = {kf_id, *self.covisibility.neighbors(kf_id, 1)}
            points: Set[int] = set()
            for k in ids:
                kf = self.keyframes.get(k)
                if kf is not None:
                    points.update(kf.point_to_keypoint)
            return points

    # --- map points -----------------------------------------------------------------

    def create_point(self, point_id: int, anchor_kf: int, anchor_px: np.ndarray, inv_depth: float,
                     descriptors: Iterable[np.ndarray] = ()) -> MapPoint:
        with self.lock:
            if inv_depth <= 0.0:
                raise ValueError("inverse depth must be positive")
            anchor = self.keyframes[anchor_kf]
            mp = MapPoint(
                id=point_id, anchor_kf=anchor_kf, anchor_px=np.asarray(anchor_px, dtype=float).copy(),
                inv_depth=float(inv_depth), position=np.zeros(3),
                descriptors=deque(maxlen=self.max_descriptors),
            )
            mp.position = mp.world_position(anchor.pose_wc, self.camera)
            for desc in descriptors:
                if desc is not None:
                    mp.descriptors.append(desc)
            self.points[point_id] = mp
            self.aliases.pop(point_id, None)
            return mp

    def add_observation(self, point_id: int, kf_id: int, kp_id: int) -> bool:
        """Record that keypoint `kp_id` of keyframe `kf_id` observes the point.

        Returns:
            False when the keyframe already observes the point through another keypoint,
            or the keypoint already observes another point.
        """
        with self.lock:
            mp = self.points[point_id]
            kf = self.keyframes[kf_id]
            kp = kf.keypoints[kp_id]
            if point_id in kf.point_to_keypoint or kp.map_point_id not in (None, point_id):
                return kf.point_to_keypoint.get(point_id) == kp_id
            self.covisibility.add_shared(kf_id, mp.observers)
            mp.observers.add(kf_id)
            kf.point_to_keypoint[point_id] = kp_id
            kp.map_point_id = point_id
            if kp.descriptor is not None:
                mp.descriptors.append(kp.descriptor)
            if kp_id != point_id:
                self.aliases[kp_id] = point_id
            return True

    def remove_observation(self, point_id: int, kf_id: int) -> None:
        """Drop one observation; re-anchors or deletes the point as needed."""
        with self.lock:
            mp = self.points.get(point_id)
            kf = self.keyframes.get(kf_id)
            if mp is None or kf is None or kf_id not in mp.observers:
                return
            mp.observers.discard(kf_id)
            self.covisibility.remove_shared(kf_id, mp.observers)
            kp_id = kf.point_to_keypoint.pop(point_id, None)
            if kp_id is not None and kp_id in kf.keypoints:
                kf.keypoints[kp_id].map_point_id = None
            if not mp.observers:
                self._delete_point(point_id)
            elif mp.anchor_kf == kf_id:
                self.reanchor(point_id, min(mp.observers))

    def remove_point(self, point_id: int) -> None:
        with self.lock:
            mp = self.points.get(point_id)
            if mp is None:
                return
            for kf_id in sorted(mp.observers):
                mp.observers.discard(kf_id)
                self.covisibility.remove_shared(kf_id, mp.observers)
                kf = self.keyframes.get(kf_id)
                if kf is not None:
                    kp_id = kf.point_to_keypoint.pop(point_id, None)
                    if kp_id is not None and kp_id in kf.keypoints:
                        kf.keypoints[kp_id].map_point_id = None
            self._delete_point(point_id)

    def _delete_point(self, point_id: int) -> None:
        self.points.pop(point_id, None)
        for kp_id in [k for k, v in self.aliases.items() if v == point_id]:
            del self.aliases[kp_id]

    def reanchor(self, point_id: int, new_anchor: int) -> None:
        """Switch a point's anchor keeping its world position unchanged."""
        with self.lock:
            mp = self.points[point_id]
            anchor = self.keyframes[new_anchor]
            p_c = anchor.pose_cw.act(mp.position)
            if p_c[2] <= 0.0:
                self.remove_point(point_id)
                return
            mp.anchor_kf = new_anchor
            mp.anchor_px = np.array([self.camera.fx * p_c[0] / p_c[2] + self.camera.cx,
                                     self.camera.fy * p_c[1] / p_c[2] + self.camera.cy])
            mp.inv_depth = 1.0 / p_c[2]

    def set_point_inv_depth(self, point_id: int, inv_depth: float) -> None:
        with self.lock:
            mp = self.points[point_id]
            mp.inv_depth = float(inv_depth)
            mp.position = mp.world_position(self.keyframes[mp.anchor_kf].pose_wc, self.camera)

    def merge_points(self, keep_id: int, drop_id: int) -> None:
        """Fold `drop_id` into `keep_id`: observers and descriptors are united."""
        with self.lock:
            keep = self.points.get(keep_id)
            drop = self.points.get(drop_id)
            if keep is None or drop is None or keep_id == drop_id:
                return
            moved = []
            for kf_id in sorted(drop.observers):
                kf = self.keyframes[kf_id]
                moved.append((kf_id, kf.point_to_keypoint.get(drop_id)))
            for desc in drop.descriptors:
                keep.descriptors.append(desc)
            self.remove_point(drop_id)
            for kf_id, kp_id in moved:
                if kp_id is not None and kf_id in self.keyframes and kp_id in self.keyframes[kf_id].keypoints:
                    self.add_observation(keep_id, kf_id, kp_id)
            self.aliases[drop_id] = keep_id
            for kp_id, target in list(self.aliases.items()):
                if target == drop_id:
                    self.aliases[kp_id] = keep_id

    # --- snapshots ------------------------------------------------------------------

    def record_correction(self, correction: Se3Pose) -> None:
        """Fold a world correction into the cumulative one the front-end applies to its own pose state."""
        with self.lock:
            self._correction_epoch += 1
            self._correction = correction if self._correction is None else correction.compose(self._correction)

    def publish_snapshot(self) -> MapSnapshot:
        with self.lock:
            snapshot = MapSnapshot(
                positions={pid: mp.position.copy() for pid, mp in self.points.items()},
                aliases=dict(self.aliases),
                keyframe_poses={kid: kf.pose_wc for kid, kf in self.keyframes.items()},
                correction_epoch=self._correction_epoch,
                correction=self._correction,
            )
            self._snapshot = snapshot
            return snapshot

    @property
    def snapshot(self) -> MapSnapshot:
        return self._snapshot

    @property
    def correction_epoch(self) -> int:
        return self._correction_epoch

    def summary(self) -> Dict[str, int]:
        with self.lock:
            return {
                "keyframes": len(self.keyframes),
                "map_points": len(self.points),
                "loop_closures": self.loop_closures,
            }

    def observation_pairs(self) -> List[Tuple[int, int]]:
        with self.lock:
            return [(kf_id, pid) for pid, mp in self.points.items() for kf_id in mp.observers]
