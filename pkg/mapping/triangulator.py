"""Creation of new map points from stereo matches and temporal tracks."""
import logging
from typing import List, Optional

import numpy as np

from geometry import MIN_DEPTH, Se3Pose, StereoRig, triangulate
from mapping.map import Keyframe, SlamMap

logger = logging.getLogger(__name__)


def _triangulate_stereo(kf: Keyframe, slam_map: SlamMap, rig: StereoRig, min_parallax_deg: float) -> List[int]:
    created = []
    for kp in list(kf.keypoints.values()):
        if kp.map_point_id is not None or kp.right_undist_px is None:
            continue
        if slam_map.aliases.get(kp.id) in slam_map.points or kp.id in slam_map.points:
            continue
        point_l = triangulate(Se3Pose.identity(), rig.t_rl, rig.left.unproject(kp.undist_px),
                              rig.right.unproject(kp.right_undist_px), min_parallax_deg)
        if point_l is None or point_l[2] <= MIN_DEPTH:
            continue
        slam_map.create_point(kp.id, kf.id, kp.undist_px, 1.0 / point_l[2])
        slam_map.add_observation(kp.id, kf.id, kp.id)
        created.append(kp.id)
    return created


def _triangulate_temporal(kf: Keyframe, slam_map: SlamMap, min_parallax_deg: float) -> List[int]:
    camera = slam_map.camera
    created = []
    for kp in list(kf.keypoints.values()):
        if kp.map_point_id is not None or kp.first_kf_id is None or kp.first_kf_id == kf.id:
            continue
        if slam_map.aliases.get(kp.id) in slam_map.points or kp.id in slam_map.points:
            continue
        first = slam_map.keyframes.get(kp.first_kf_id)
        if first is None or kp.id not in first.keypoints:
            continue
        first_kp = first.keypoints[kp.id]
        if first_kp.map_point_id is not None:
            continue
        point_w = triangulate(first.pose_cw, kf.pose_cw, camera.unproject(first_kp.undist_px),
                              camera.unproject(kp.undist_px), min_parallax_deg)
        if point_w is None:
            continue

        observers = []
        for kf_id in sorted(slam_map.keyframes):
            if not first.id <= kf_id <= kf.id:
                continue
            other = slam_map.keyframes[kf_id]
            other_kp = other.keypoints.get(kp.id)
            if other_kp is None or other_kp.map_point_id is not None:
                continue
            if other.pose_cw.act(point_w)[2] > MIN_DEPTH:
                observers.append(kf_id)
        if first.id not in observers or kf.id not in observers:
            continue

        depth_in_anchor = first.pose_cw.act(point_w)[2]
        slam_map.create_point(kp.id, first.id, first_kp.undist_px, 1.0 / depth_in_anchor)
        for kf_id in observers:
            slam_map.add_observation(kp.id, kf_id, kp.id)
        created.append(kp.id)
    return created


def triangulate_new_points(kf: Keyframe, slam_map: SlamMap, rig: Optional[StereoRig] = None,
                           min_parallax_deg: float = 1.0, stereo_min_parallax_deg: float = 0.1) -> List[int]:
    """Triangulate the keyframe's 2D keypoints.

    Stereo-matched keypoints are triangulated across the rig and anchored in `kf`. The
    remaining ones are triangulated between the keyframe that first saw them and `kf`,
    anchored in that first keyframe and observed by every keyframe in between that still
    holds the keypoint in front of it. Degenerate cases stay 2D.

    Args:
        kf: Keyframe already registered in the map
        slam_map: Map receiving the points
        rig: Stereo rig, None in monocular mode
        min_parallax_deg: Parallax bound for temporal triangulation
        stereo_min_parallax_deg: Parallax bound for stereo triangulation

    Returns:
        Ids of the created map points.
    """
    with slam_map.lock:
        created = []
        if rig is not None:
            created += _triangulate_stereo(kf, slam_map, rig, stereo_min_parallax_deg)
        created += _triangulate_temporal(kf, slam_map, min_parallax_deg)
    logger.debug("keyframe %d: %d new map points", kf.id, len(created))
    return created


def point_depths(slam_map: SlamMap, point_id: int) -> np.ndarray:
    """Camera-frame depth of a point in each of its observers."""
    mp = slam_map.points[point_id]
    return np.array([slam_map.keyframes[k].pose_cw.act(mp.position)[2] for k in sorted(mp.observers)])
