"""Essential-matrix outlier filtering of tracked keypoints."""
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import cv2
import numpy as np

from frontend.frame import Frame, Keypoint
from geometry import CameraModel, epipolar_distance
from utils.rng import SeedSequencer

logger = logging.getLogger(__name__)

MIN_MODEL_POINTS = 5


@dataclass
class EpipolarFilterResult:
    keypoints: Dict[int, Keypoint]
    essential: Optional[np.ndarray] = None
    passthrough: bool = False
    ransac_failed: bool = False


def find_essential(bearings_a: np.ndarray, bearings_b: np.ndarray, camera: CameraModel,
                   threshold_px: float = 3.0, confidence: float = 0.99, max_iters: int = 200,
                   seeds: Optional[SeedSequencer] = None) -> Tuple[Optional[np.ndarray], np.ndarray]:
    """5-point RANSAC on normalized bearings; E satisfies b^T E a = 0.

    Returns:
        The essential matrix (None on failure) and the inlier mask.
    """
    n = len(bearings_a)
    if n < MIN_MODEL_POINTS:
        return None, np.zeros(n, dtype=bool)
    if seeds is not None:
        seeds.seed_opencv()
    pts_a = np.ascontiguousarray(bearings_a[:, :2], dtype=np.float64)
    pts_b = np.ascontiguousarray(bearings_b[:, :2], dtype=np.float64)
    E, mask = cv2.findEssentialMat(pts_a, pts_b, np.eye(3), cv2.RANSAC, confidence,
                                   threshold_px / camera.focal, max_iters)
    if E is None or mask is None or E.shape[0] < 3:
        return None, np.zeros(n, dtype=bool)
    inliers = mask.reshape(-1).astype(bool)
    if inliers.sum() < MIN_MODEL_POINTS:
        return None, np.zeros(n, dtype=bool)
    return E[:3].astype(float), inliers


def filter_epipolar(prev: Frame, keypoints: Dict[int, Keypoint], camera: CameraModel,
                    threshold_px: float = 3.0, confidence: float = 0.99, max_iters: int = 200,
                    seeds: Optional[SeedSequencer] = None) -> EpipolarFilterResult:
    """Estimate E from 3D keypoints only and use it to filter every tracked keypoint.

    Args:
        prev: Frame the keypoints were tracked from
        keypoints: Tracked keypoints of the current frame
        camera: Left camera
        threshold_px: Inlier threshold in pixels
        confidence: RANSAC confidence
        max_iters: RANSAC iteration cap
        seeds: Seed stream for reproducible RANSAC

    Returns:
        EpipolarFilterResult; with fewer than five 3D keypoints everything passes through.
    """
    kps_3d = [kp for kp in keypoints.values() if kp.is_3d and kp.id in prev.keypoints]
    if len(kps_3d) < MIN_MODEL_POINTS:
        logger.warning("epipolar filter skipped: only %d 3D keypoints", len(kps_3d))
        return EpipolarFilterResult(keypoints=dict(keypoints), passthrough=True)

    bearings_prev = camera.unproject_many([prev.keypoints[kp.id].undist_px for kp in kps_3d])
    bearings_cur = camera.unproject_many([kp.undist_px for kp in kps_3d])
    E, inliers = find_essential(bearings_prev, bearings_cur, camera, threshold_px, confidence, max_iters, seeds)
    if E is None:
        logger.info("essential RANSAC failed; keeping 3D keypoints only")
        kept = {kp.id: kp for kp in keypoints.values() if kp.is_3d}
        return EpipolarFilterResult(keypoints=kept, ransac_failed=True)

    kept = {kp.id: kp for kp, ok in zip(kps_3d, inliers) if ok}
    kps_2d = [kp for kp in keypoints.values() if not kp.is_3d and kp.id in prev.keypoints]
    if kps_2d:
        a = camera.unproject_many([prev.keypoints[kp.id].undist_px for kp in kps_2d])
        b = camera.unproject_many([kp.undist_px for kp in kps_2d])
        dist = epipolar_distance(E, a, b, camera)
        kept.update({kp.id: kp for kp, d in zip(kps_2d, dist) if d <= threshold_px})
    ordered = {kp_id: keypoints[kp_id] for kp_id in keypoints if kp_id in kept}
    return EpipolarFilterResult(keypoints=ordered, essential=E)
