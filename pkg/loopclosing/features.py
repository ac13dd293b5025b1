from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from geometry import CameraModel
from imgproc import brief_descriptors, detect_fast
from mapping.map import Keyframe


@dataclass
class LcFeatures:
    """Descriptors used for loop detection: the keyframe's SLAM keypoints, then extra FAST corners.

    `point_ids[i]` is the map point observed through feature i, `keypoint_ids[i]` the SLAM
    keypoint it comes from; both are None for the extra corners.
    """
    kf_id: int
    undist_px: np.ndarray
    descriptors: np.ndarray
    keypoint_ids: List[Optional[int]] = field(default_factory=list)
    point_ids: List[Optional[int]] = field(default_factory=list)
    num_extra: int = 0

    def __len__(self) -> int:
        return len(self.descriptors)


def extract_lc_features(kf: Keyframe, camera: CameraModel, max_features: int = 300,
                        fast_threshold: int = 20) -> LcFeatures:
    """FAST + BRIEF over the whole image (best `max_features`) merged with the SLAM keypoints."""
    px, descs, kp_ids, pt_ids = [], [], [], []
    point_of_kp = {kp_id: pid for pid, kp_id in kf.point_to_keypoint.items()}
    for kp_id in sorted(kf.keypoints):
        kp = kf.keypoints[kp_id]
        if kp.descriptor is None:
            continue
        px.append(kp.undist_px)
        descs.append(kp.descriptor)
        kp_ids.append(kp_id)
        pt_ids.append(point_of_kp.get(kp_id))

    num_extra = 0
    if kf.pyramid is not None:
        corners = detect_fast(kf.pyramid.image, fast_threshold, max_features)
        if corners:
            raw = np.array([c.px for c in corners])
            extra = brief_descriptors(kf.pyramid.smoothed, raw)
            px.extend(camera.undistort(raw))
            descs.extend(extra)
            kp_ids.extend([None] * len(corners))
            pt_ids.extend([None] * len(corners))
            num_extra = len(corners)
    return LcFeatures(
        kf_id=kf.id,
        undist_px=np.array(px, dtype=float).reshape(-1, 2),
        descriptors=np.array(descs, dtype=np.uint8).reshape(-1, 32),
        keypoint_ids=kp_ids,
        point_ids=pt_ids,
        num_extra=num_extra,
    )
