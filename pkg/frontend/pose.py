"""Robust motion-only pose estimation and the P3P-RANSAC fallback."""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence

import cv2
import numpy as np
from scipy.spatial.transform import Rotation

from frontend.frame import Keypoint
from geometry import CameraModel, Se3Pose, skew
from mapping.map import MapSnapshot
from solver.robust import CHI2_2DOF_95, HuberLoss
from utils.rng import SeedSequencer

logger = logging.getLogger(__name__)

MIN_POSE_POINTS = 4
MAX_REJECTED_STEPS = 5
STEP_TOLERANCE = 1e-10


class PoseStatus(Enum):
    OK = "ok"
    INSUFFICIENT_POINTS = "insufficient_points"
    DIVERGED = "diverged"


@dataclass
class PoseEstimate:
    status: PoseStatus
    pose_wc: Se3Pose
    inlier_ids: List[int] = field(default_factory=list)
    outlier_ids: List[int] = field(default_factory=list)
    iterations: int = 0
    cost: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == PoseStatus.OK


def _residuals(pose_wc: Se3Pose, points_w: np.ndarray, pixels: np.ndarray,
               camera: CameraModel) -> np.ndarray:
    px, _ = camera.project_camera(pose_wc.inverse().act(points_w))
    return px - pixels


def _lm(pose_wc: Se3Pose, points_w: np.ndarray, pixels: np.ndarray, camera: CameraModel,
        max_iters: int, loss: HuberLoss):
    """Levenberg-Marquardt over a right perturbation T_wc * exp(xi), Huber-reweighted."""
    errors = _residuals(pose_wc, points_w, pixels, camera)
    cost = loss.cost(np.linalg.norm(errors, axis=1))
    damping = None
    rejected = 0
    accepted_any = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        points_c = pose_wc.inverse().act(points_w)
        if np.any(points_c[:, 2] <= 0.0):
            return pose_wc, cost, iterations, False
        J_pi = camera.projection_jacobian(points_c)
        dP = np.zeros((len(points_c), 3, 6))
        dP[:, :, :3] = -np.eye(3)
        dP[:, :, 3:] = np.stack([skew(p) for p in points_c])
        J = J_pi @ dP
        w = loss.weights(np.linalg.norm(errors, axis=1))
        H = np.einsum('n,nij,nik->jk', w, J, J)
        g = np.einsum('n,nij,ni->j', w, J, errors)
        if damping is None:
            damping = 1e-4 * float(np.max(np.diag(H)))
        while True:
            try:
                step = -np.linalg.solve(H + damping * np.eye(6), g)
            except np.linalg.LinAlgError:
                return pose_wc, cost, iterations, False
            if np.linalg.norm(step) < STEP_TOLERANCE:
                return pose_wc, cost, iterations, True
            candidate = pose_wc.retract(step)
            cand_errors = _residuals(candidate, points_w, pixels, camera)
            cand_cost = loss.cost(np.linalg.norm(cand_errors, axis=1))
            if cand_cost < cost:
                pose_wc, errors, cost = candidate, cand_errors, cand_cost
                damping /= 3.0
                rejected = 0
                accepted_any = True
                break
            damping *= 10.0
            rejected += 1
            if rejected >= MAX_REJECTED_STEPS:
                # no further descent after progress means convergence
                return pose_wc, cost, iterations, accepted_any or cost < 1e-12
    return pose_wc, cost, iterations, True


def optimize_pose(points_w: np.ndarray, pixels: np.ndarray, initial_wc: Se3Pose, camera: CameraModel,
                  ids: Optional[Sequence[int]] = None, max_iters: int = 20,
                  chi2_threshold: float = CHI2_2DOF_95) -> PoseEstimate:
    """Minimize Huber reprojection error of 3D-2D correspondences, cull by chi2, re-optimize once.

    Args:
        points_w: (N, 3) world points
        pixels: (N, 2) undistorted observations
        initial_wc: Initial camera-to-world pose
        camera: Camera model
        ids: Identifiers reported back in the inlier/outlier lists (defaults to indices)
        max_iters: LM iteration cap per optimization
        chi2_threshold: Squared-pixel culling bound

    Returns:
        PoseEstimate with status OK, INSUFFICIENT_POINTS or DIVERGED.
    """
    points_w = np.atleast_2d(np.asarray(points_w, dtype=float))
    pixels = np.atleast_2d(np.asarray(pixels, dtype=float))
    ids = list(range(len(points_w))) if ids is None else list(ids)
    if len(points_w) < MIN_POSE_POINTS:
        return PoseEstimate(PoseStatus.INSUFFICIENT_POINTS, initial_wc, outlier_ids=ids)

    loss = HuberLoss(float(np.sqrt(chi2_threshold)))
    pose, cost, iters, converged = _lm(initial_wc, points_w, pixels, camera, max_iters, loss)
    if not converged:
        logger.debug("pose optimization diverged after %d iterations", iters)
        return PoseEstimate(PoseStatus.DIVERGED, initial_wc, iterations=iters, cost=cost)

    sq = np.sum(_residuals(pose, points_w, pixels, camera) ** 2, axis=1)
    inliers = sq <= chi2_threshold
    if not inliers.all():
        if inliers.sum() < MIN_POSE_POINTS:
            return PoseEstimate(PoseStatus.INSUFFICIENT_POINTS, pose, outlier_ids=ids, iterations=iters)
        pose, cost, more, converged = _lm(pose, points_w[inliers], pixels[inliers], camera, max_iters, loss)
        iters += more
        if not converged:
            return PoseEstimate(PoseStatus.DIVERGED, initial_wc, iterations=iters, cost=cost)
    return PoseEstimate(
        status=PoseStatus.OK,
        pose_wc=pose,
        inlier_ids=[i for i, ok in zip(ids, inliers) if ok],
        outlier_ids=[i for i, ok in zip(ids, inliers) if not ok],
        iterations=iters,
        cost=cost,
    )


def _gather(keypoints: Sequence[Keypoint], snapshot: MapSnapshot):
    ids, points, pixels = [], [], []
    for kp in keypoints:
        mp_id = snapshot.resolve(kp.id)
        if mp_id is None:
            continue
        ids.append(kp.id)
        points.append(snapshot.positions[mp_id])
        pixels.append(kp.undist_px)
    return ids, np.array(points).reshape(-1, 3), np.array(pixels).reshape(-1, 2)


def estimate_pose(keypoints: Sequence[Keypoint], snapshot: MapSnapshot, initial_wc: Se3Pose,
                  camera: CameraModel, max_iters: int = 20,
                  chi2_threshold: float = CHI2_2DOF_95) -> PoseEstimate:
    """Pose of a frame from its 3D keypoints; inlier/outlier lists hold keypoint ids."""
    ids, points, pixels = _gather(keypoints, snapshot)
    return optimize_pose(points, pixels, initial_wc, camera, ids, max_iters, chi2_threshold)


def is_degenerate_for_pnp(points_w: np.ndarray, tol: float = 1e-6) -> bool:
    """True when the points are (close to) collinear."""
    centered = points_w - points_w.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    return s[0] <= 0.0 or s[1] <= tol * s[0]


def solve_p3p_ransac(points_w: np.ndarray, pixels: np.ndarray, camera: CameraModel,
                     threshold_px: float = 3.0, confidence: float = 0.99, max_iters: int = 100,
                     seeds: Optional[SeedSequencer] = None) -> Optional[Se3Pose]:
    """P3P hypotheses inside RANSAC; returns T_wc or None."""
    points_w = np.atleast_2d(np.asarray(points_w, dtype=float))
    pixels = np.atleast_2d(np.asarray(pixels, dtype=float))
    if len(points_w) < MIN_POSE_POINTS or is_degenerate_for_pnp(points_w):
        return None
    if seeds is not None:
        seeds.seed_opencv()
    ok, rvec, tvec, inliers = cv2.solvePnPRansac(
        np.ascontiguousarray(points_w), np.ascontiguousarray(pixels), camera.K, None,
        iterationsCount=max_iters, reprojectionError=threshold_px, confidence=confidence,
        flags=cv2.SOLVEPNP_P3P,
    )
    if not ok or inliers is None or len(inliers) < MIN_POSE_POINTS:
        return None
    pose_cw = Se3Pose(Rotation.from_rotvec(np.asarray(rvec, dtype=float).reshape(3)).as_quat(),
                      np.asarray(tvec, dtype=float).reshape(3))
    return pose_cw.inverse()


def p3p_fallback(keypoints: Sequence[Keypoint], snapshot: MapSnapshot, camera: CameraModel,
                 threshold_px: float = 3.0, confidence: float = 0.99, max_iters: int = 100,
                 seeds: Optional[SeedSequencer] = None,
                 chi2_threshold: float = CHI2_2DOF_95) -> Optional[PoseEstimate]:
    """Recover a pose without the motion prior: P3P-RANSAC, then robust refinement."""
    ids, points, pixels = _gather(keypoints, snapshot)
    hypothesis = solve_p3p_ransac(points, pixels, camera, threshold_px, confidence, max_iters, seeds)
    if hypothesis is None:
        logger.info("P3P fallback found no model among %d points", len(ids))
        return None
    estimate = optimize_pose(points, pixels, hypothesis, camera, ids, chi2_threshold=chi2_threshold)
    return estimate if estimate.ok else None
