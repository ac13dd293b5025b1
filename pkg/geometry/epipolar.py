"""Epipolar primitives on normalized-plane bearings."""
import numpy as np

from geometry.camera import CameraModel
from geometry.se3 import Se3Pose, skew


def essential_from_pose(pose_ba: Se3Pose) -> np.ndarray:
    """E such that bearing_b^T E bearing_a = 0, for the b-from-a transform."""
    return skew(pose_ba.translation) @ pose_ba.rotation


def epipolar_distance(essential: np.ndarray, bearings_a: np.ndarray, bearings_b: np.ndarray,
                      camera: CameraModel) -> np.ndarray:
    """Point-to-epipolar-line distance in pixels.

    The distance is measured in both images and the larger of the two is returned,
    scaled from the normalized plane by the mean focal length.

    Args:
        essential: 3x3 matrix with bearing_b^T E bearing_a = 0
        bearings_a: (3,) or (N, 3) bearings in view a
        bearings_b: (3,) or (N, 3) bearings in view b
        camera: Camera whose focal length converts normalized distances to pixels

    Returns:
        Scalar or (N,) distances in pixels.
    """
    a = np.asarray(bearings_a, dtype=float)
    single = a.ndim == 1
    a = np.atleast_2d(a)
    b = np.atleast_2d(np.asarray(bearings_b, dtype=float))
    a = a / a[:, 2:3]
    b = b / b[:, 2:3]

    lines_b = a @ essential.T          # epipolar lines in view b
    lines_a = b @ essential            # epipolar lines in view a
    algebraic = np.sum(b * lines_b, axis=1)
    dist_b = np.abs(algebraic) / np.maximum(np.hypot(lines_b[:, 0], lines_b[:, 1]), 1e-15)
    dist_a = np.abs(algebraic) / np.maximum(np.hypot(lines_a[:, 0], lines_a[:, 1]), 1e-15)
    dist = np.maximum(dist_a, dist_b) * camera.focal
    return float(dist[0]) if single else dist
