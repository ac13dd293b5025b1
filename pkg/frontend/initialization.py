"""Two-view monocular bootstrap."""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Union

import cv2
import numpy as np

from frontend.frame import Frame
from frontend.outliers import find_essential
from geometry import CameraModel, Se3Pose, triangulate_many
from mapping.map import Keyframe
from utils.rng import SeedSequencer

logger = logging.getLogger(__name__)

View = Union[Frame, Keyframe]


@dataclass
class MonoInitResult:
    """kf1's pose with kf0 at the origin (unit baseline) and the triangulated inliers."""
    pose_wc: Se3Pose
    inlier_ids: List[int] = field(default_factory=list)
    points_w: Dict[int, np.ndarray] = field(default_factory=dict)


def init_monocular(kf0: View, kf1: View, camera: CameraModel, min_matches: int = 50,
                   min_parallax_deg: float = 1.0, threshold_px: float = 3.0, confidence: float = 0.99,
                   max_iters: int = 200, seeds: Optional[SeedSequencer] = None) -> Optional[MonoInitResult]:
    """Relative pose of two views from shared keypoint ids; None means retry later.

    Args:
        kf0: First view, placed at the world origin
        kf1: Second view
        camera: Left camera
        min_matches: Minimum number of shared keypoints and triangulated inliers
        min_parallax_deg: Median parallax required over the inliers
        threshold_px: Essential RANSAC threshold
        confidence: RANSAC confidence
        max_iters: RANSAC iteration cap
        seeds: Seed stream for reproducible RANSAC
    """
    shared = [kp_id for kp_id in kf1.keypoints if kp_id in kf0.keypoints]
    if len(shared) < min_matches:
        logger.debug("init: %d matches", len(shared))
        return None
    b0 = camera.unproject_many([kf0.keypoints[k].undist_px for k in shared])
    b1 = camera.unproject_many([kf1.keypoints[k].undist_px for k in shared])
    E, inliers = find_essential(b0, b1, camera, threshold_px, confidence, max_iters, seeds)
    if E is None or inliers.sum() < min_matches:
        return None

    mask = inliers.astype(np.uint8).reshape(-1, 1)
    # picks the decomposition with the most points in front of both cameras
    n_good, R, t, mask = cv2.recoverPose(E, np.ascontiguousarray(b0[:, :2]), np.ascontiguousarray(b1[:, :2]),
                                         np.eye(3), mask=mask)
    if n_good < min_matches:
        return None
    t = np.asarray(t, dtype=float).reshape(3)
    norm = np.linalg.norm(t)
    if norm < 1e-12:
        return None
    pose_10 = Se3Pose.from_rt(R, t / norm)

    good = mask.reshape(-1).astype(bool) & inliers
    points, valid = triangulate_many(Se3Pose.identity(), pose_10, b0[good], b1[good], min_parallax_deg=0.0)
    if valid.sum() < min_matches:
        return None
    rays0 = b0[good][valid]
    rays1 = b1[good][valid] @ pose_10.rotation
    cos = np.sum(rays0 * rays1, axis=1) / (np.linalg.norm(rays0, axis=1) * np.linalg.norm(rays1, axis=1))
    median_parallax = float(np.degrees(np.median(np.arccos(np.clip(cos, -1.0, 1.0)))))
    if median_parallax < min_parallax_deg:
        logger.debug("init: median parallax %.3f deg", median_parallax)
        return None

    ids = [k for k, g in zip(shared, good) if g]
    kept = [k for k, v in zip(ids, valid) if v]
    return MonoInitResult(
        pose_wc=pose_10.inverse(),
        inlier_ids=kept,
        points_w={k: p for k, p, v in zip(ids, points, valid) if v},
    )
