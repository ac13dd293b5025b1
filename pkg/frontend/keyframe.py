import logging
from enum import Enum

import numpy as np

from frontend.frame import Frame
from geometry import CameraModel
from mapping.map import Keyframe

logger = logging.getLogger(__name__)


class KeyframeDecision(Enum):
    CREATE = "create"
    SKIP = "skip"


def tracked_3d_ratio(cur: Frame, last_kf: Keyframe) -> float:
    """Share of the last keyframe's 3D keypoints still tracked as 3D in `cur`."""
    kf_3d = [kp.id for kp in last_kf.keypoints.values() if kp.map_point_id is not None]
    if not kf_3d:
        return 0.0
    tracked = sum(1 for kp_id in kf_3d if kp_id in cur.keypoints and cur.keypoints[kp_id].is_3d)
    return tracked / len(kf_3d)


def unrotated_parallax(cur: Frame, last_kf: Keyframe, camera: CameraModel) -> float:
    """Mean pixel motion of shared keypoints once the relative rotation is removed."""
    shared = [kp_id for kp_id in cur.keypoints if kp_id in last_kf.keypoints]
    if not shared:
        return 0.0
    R_cur_kf = cur.pose_wc.rotation.T @ last_kf.pose_wc.rotation
    bearings = camera.unproject_many([last_kf.keypoints[k].undist_px for k in shared]) @ R_cur_kf.T
    px, valid = camera.project_camera(bearings)
    if not valid.any():
        return 0.0
    cur_px = np.array([cur.keypoints[k].undist_px for k in shared])
    return float(np.mean(np.linalg.norm(px[valid] - cur_px[valid], axis=1)))


def keyframe_decision(cur: Frame, last_kf: Keyframe, camera: CameraModel, n_cells: int,
                      min_tracked_ratio: float = 0.85, max_parallax_px: float = 15.0,
                      min_cell_ratio: float = 0.5) -> KeyframeDecision:
    """Decide whether `cur` becomes a keyframe.

    Args:
        cur: Frame with a valid pose
        last_kf: Most recent keyframe
        camera: Left camera
        n_cells: Number of detection grid cells in the image
        min_tracked_ratio: Create below this share of the last keyframe's 3D keypoints
        max_parallax_px: Create above this mean rotation-compensated motion
        min_cell_ratio: Create when live keypoints fall below this share of the cells
    """
    ratio = tracked_3d_ratio(cur, last_kf)
    if ratio < min_tracked_ratio:
        logger.debug("keyframe: tracked 3D ratio %.3f", ratio)
        return KeyframeDecision.CREATE
    parallax = unrotated_parallax(cur, last_kf, camera)
    if parallax > max_parallax_px:
        logger.debug("keyframe: parallax %.2f px", parallax)
        return KeyframeDecision.CREATE
    if len(cur.keypoints) < min_cell_ratio * n_cells:
        logger.debug("keyframe: %d live keypoints", len(cur.keypoints))
        return KeyframeDecision.CREATE
    return KeyframeDecision.SKIP
