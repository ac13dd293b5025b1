"""Two-view linear triangulation with cheirality and parallax checks."""
from typing import Optional, Tuple

import cv2
import numpy as np

from geometry.camera import MIN_DEPTH
from geometry.se3 import Se3Pose

DEFAULT_MIN_PARALLAX_DEG = 1.0
_PARALLAX_TOL_DEG = 1e-9


def _projection_matrix(pose_cw: Se3Pose) -> np.ndarray:
    return np.hstack([pose_cw.rotation, pose_cw.translation[:, None]])


def parallax_angles(pose_a_cw: Se3Pose, pose_b_cw: Se3Pose,
                    bearings_a: np.ndarray, bearings_b: np.ndarray) -> np.ndarray:
    """Angle (degrees) between the two viewing rays of each correspondence."""
    rays_a = np.atleast_2d(bearings_a) @ pose_a_cw.rotation
    rays_b = np.atleast_2d(bearings_b) @ pose_b_cw.rotation
    cos = np.sum(rays_a * rays_b, axis=1) / (np.linalg.norm(rays_a, axis=1) * np.linalg.norm(rays_b, axis=1))
    return np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))


def triangulate_many(pose_a_cw: Se3Pose, pose_b_cw: Se3Pose,
                     bearings_a: np.ndarray, bearings_b: np.ndarray,
                     min_parallax_deg: float = DEFAULT_MIN_PARALLAX_DEG) -> Tuple[np.ndarray, np.ndarray]:
    """Triangulate N correspondences given normalized-plane bearings.

    Args:
        pose_a_cw: World-to-camera pose of view a
        pose_b_cw: World-to-camera pose of view b
        bearings_a: (N, 3) bearings (x, y, 1) in view a
        bearings_b: (N, 3) bearings (x, y, 1) in view b
        min_parallax_deg: Minimum angle between viewing rays

    Returns:
        (N, 3) world points and the (N,) validity mask (cheirality and parallax).
    """
    bearings_a = np.atleast_2d(np.asarray(bearings_a, dtype=float))
    bearings_b = np.atleast_2d(np.asarray(bearings_b, dtype=float))
    if len(bearings_a) == 0:
        return np.zeros((0, 3)), np.zeros(0, dtype=bool)

    homogeneous = cv2.triangulatePoints(
        _projection_matrix(pose_a_cw), _projection_matrix(pose_b_cw),
        np.ascontiguousarray(bearings_a[:, :2].T), np.ascontiguousarray(bearings_b[:, :2].T),
    )
    w = homogeneous[3]
    finite = np.abs(w) > 1e-12
    points = (homogeneous[:3] / np.where(finite, w, 1.0)).T

    depth_a = pose_a_cw.act(points)[:, 2]
    depth_b = pose_b_cw.act(points)[:, 2]
    parallax = parallax_angles(pose_a_cw, pose_b_cw, bearings_a, bearings_b)
    valid = (finite & (depth_a > MIN_DEPTH) & (depth_b > MIN_DEPTH)
             & (parallax >= min_parallax_deg - _PARALLAX_TOL_DEG))
    return points, valid


def triangulate(pose_a_cw: Se3Pose, pose_b_cw: Se3Pose, bearing_a: np.ndarray, bearing_b: np.ndarray,
                min_parallax_deg: float = DEFAULT_MIN_PARALLAX_DEG) -> Optional[np.ndarray]:
    """World point of one correspondence, or None when degenerate."""
    points, valid = triangulate_many(pose_a_cw, pose_b_cw, np.reshape(bearing_a, (1, 3)),
                                     np.reshape(bearing_b, (1, 3)), min_parallax_deg)
    return points[0] if valid[0] else None
