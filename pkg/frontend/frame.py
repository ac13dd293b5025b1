from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np

from geometry import CameraModel, Se3Pose
from imgproc import ImagePyramid


@dataclass(eq=False)
class Keypoint:
    """A tracked feature; raw and undistorted positions are always kept in sync."""
    id: int
    raw_px: np.ndarray
    undist_px: np.ndarray
    map_point_id: Optional[int] = None
    descriptor: Optional[np.ndarray] = None
    first_kf_id: Optional[int] = None
    right_raw_px: Optional[np.ndarray] = None
    right_undist_px: Optional[np.ndarray] = None

    @classmethod
    def from_raw(cls, kp_id: int, raw_px: np.ndarray, camera: CameraModel, **kwargs) -> 'Keypoint':
        raw_px = np.asarray(raw_px, dtype=float)
        return cls(id=kp_id, raw_px=raw_px, undist_px=camera.undistort(raw_px), **kwargs)

    @property
    def is_3d(self) -> bool:
        return self.map_point_id is not None

    @property
    def is_stereo(self) -> bool:
        return self.right_undist_px is not None

    def moved_to(self, raw_px: np.ndarray, camera: CameraModel) -> 'Keypoint':
        """Copy at a new raw position; per-keyframe right-view data does not carry over."""
        raw_px = np.asarray(raw_px, dtype=float)
        return replace(self, raw_px=raw_px, undist_px=camera.undistort(raw_px),
                       right_raw_px=None, right_undist_px=None)

    def copy(self) -> 'Keypoint':
        return replace(self)


@dataclass(eq=False)
class Frame:
    id: int
    timestamp: float
    pyramid: ImagePyramid
    keypoints: Dict[int, Keypoint] = field(default_factory=dict)
    pose_wc: Se3Pose = field(default_factory=Se3Pose.identity)
    pose_valid: bool = False
    right_pyramid: Optional[ImagePyramid] = None

    def keypoint_list(self) -> List[Keypoint]:
        return list(self.keypoints.values())

    def keypoints_3d(self) -> List[Keypoint]:
        return [kp for kp in self.keypoints.values() if kp.is_3d]

    def keypoints_2d(self) -> List[Keypoint]:
        return [kp for kp in self.keypoints.values() if not kp.is_3d]
