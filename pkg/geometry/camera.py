"""Pinhole camera with radial-tangential or fisheye distortion, and the stereo rig."""
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from geometry.se3 import Se3Pose, skew

MIN_DEPTH = 1e-6
UNDISTORT_MAX_ITERS = 20
UNDISTORT_TOL_PX = 1e-8


class DistortionModel(Enum):
    NONE = "none"
    RADTAN = "radtan"
    FISHEYE = "fisheye"


@dataclass(frozen=True, eq=False)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    distortion_model: DistortionModel = DistortionModel.NONE
    distortion: Tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        expected = {DistortionModel.NONE: 0, DistortionModel.RADTAN: 4, DistortionModel.FISHEYE: 4}
        coeffs = tuple(float(c) for c in self.distortion)
        if self.distortion_model == DistortionModel.NONE and any(coeffs):
            raise ValueError("distortion coefficients given for an undistorted camera")
        if self.distortion_model != DistortionModel.NONE and len(coeffs) != expected[self.distortion_model]:
            raise ValueError(f"{self.distortion_model.value} distortion needs {expected[self.distortion_model]} coefficients")
        object.__setattr__(self, 'distortion', coeffs if self.distortion_model != DistortionModel.NONE else ())

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def focal(self) -> float:
        return 0.5 * (self.fx + self.fy)

    # --- pinhole --------------------------------------------------------------------

    def project_camera(self, points_c: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Undistorted pixels of camera-frame points (N, 3) and the positive-depth mask."""
        points_c = np.atleast_2d(np.asarray(points_c, dtype=float))
        z = points_c[:, 2]
        valid = z > MIN_DEPTH
        safe_z = np.where(valid, z, 1.0)
        px = np.stack([
            self.fx * points_c[:, 0] / safe_z + self.cx,
            self.fy * points_c[:, 1] / safe_z + self.cy,
        ], axis=1)
        return px, valid

    def project(self, pose_cw: Se3Pose, point_w: np.ndarray) -> Optional[np.ndarray]:
        """Undistorted pixel of a world point, or None when it is behind the camera."""
        px, valid = self.project_camera(pose_cw.act(point_w))
        return px[0] if valid[0] else None

    def project_many(self, pose_cw: Se3Pose, points_w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return self.project_camera(pose_cw.act(np.atleast_2d(points_w)))

    def project_distorted(self, pose_cw: Se3Pose, point_w: np.ndarray) -> Optional[np.ndarray]:
        px = self.project(pose_cw, point_w)
        return None if px is None else self.distort(px)

    def unproject(self, pixel_undist: np.ndarray) -> np.ndarray:
        """Bearing ((u - cx) / fx, (v - cy) / fy, 1)."""
        u, v = np.asarray(pixel_undist, dtype=float).reshape(2)
        return np.array([(u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0])

    def unproject_many(self, pixels_undist: np.ndarray) -> np.ndarray:
        px = np.atleast_2d(np.asarray(pixels_undist, dtype=float))
        return np.stack([
            (px[:, 0] - self.cx) / self.fx,
            (px[:, 1] - self.cy) / self.fy,
            np.ones(len(px)),
        ], axis=1)

    def projection_jacobian(self, points_c: np.ndarray) -> np.ndarray:
        """d pi / d P for camera-frame points, shape (N, 2, 3)."""
        points_c = np.atleast_2d(points_c)
        x, y, z = points_c[:, 0], points_c[:, 1], points_c[:, 2]
        inv_z = 1.0 / z
        J = np.zeros((len(points_c), 2, 3))
        J[:, 0, 0] = self.fx * inv_z
        J[:, 0, 2] = -self.fx * x * inv_z ** 2
        J[:, 1, 1] = self.fy * inv_z
        J[:, 1, 2] = -self.fy * y * inv_z ** 2
        return J

    def in_image(self, px: np.ndarray, border: float = 0.0) -> np.ndarray:
        px = np.atleast_2d(px)
        return ((px[:, 0] >= border) & (px[:, 0] <= self.width - 1 - border)
                & (px[:, 1] >= border) & (px[:, 1] <= self.height - 1 - border))

    # --- distortion -----------------------------------------------------------------

    def _to_normalized(self, px: np.ndarray) -> np.ndarray:
        return np.stack([(px[:, 0] - self.cx) / self.fx, (px[:, 1] - self.cy) / self.fy], axis=1)

    def _to_pixels(self, xy: np.ndarray) -> np.ndarray:
        return np.stack([self.fx * xy[:, 0] + self.cx, self.fy * xy[:, 1] + self.cy], axis=1)

    def _distort_normalized(self, xy: np.ndarray) -> np.ndarray:
        x, y = xy[:, 0], xy[:, 1]
        if self.distortion_model == DistortionModel.RADTAN:
            k1, k2, p1, p2 = self.distortion
            r2 = x * x + y * y
            radial = 1.0 + k1 * r2 + k2 * r2 * r2
            xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
            yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
            return np.stack([xd, yd], axis=1)
        if self.distortion_model == DistortionModel.FISHEYE:
            r = np.hypot(x, y)
            theta = np.arctan(r)
            theta_d = self._fisheye_theta_d(theta)
            scale = np.where(r > 1e-12, theta_d / np.where(r > 1e-12, r, 1.0), 1.0)
            return xy * scale[:, None]
        return xy.copy()

    def _fisheye_theta_d(self, theta: np.ndarray) -> np.ndarray:
        k1, k2, k3, k4 = self.distortion
        t2 = theta * theta
        return theta * (1.0 + k1 * t2 + k2 * t2 ** 2 + k3 * t2 ** 3 + k4 * t2 ** 4)

    def _radtan_jacobian(self, xy: np.ndarray) -> np.ndarray:
        k1, k2, p1, p2 = self.distortion
        x, y = xy[:, 0], xy[:, 1]
        r2 = x * x + y * y
        radial = 1.0 + k1 * r2 + k2 * r2 * r2
        d_radial = 2.0 * (k1 + 2.0 * k2 * r2)
        J = np.empty((len(xy), 2, 2))
        J[:, 0, 0] = radial + x * d_radial * x + 2.0 * p1 * y + 6.0 * p2 * x
        J[:, 0, 1] = x * d_radial * y + 2.0 * p1 * x + 2.0 * p2 * y
        J[:, 1, 0] = y * d_radial * x + 2.0 * p1 * x + 2.0 * p2 * y
        J[:, 1, 1] = radial + y * d_radial * y + 6.0 * p1 * y + 2.0 * p2 * x
        return J

    def distort(self, pixels_undist: np.ndarray) -> np.ndarray:
        """Raw (distorted) pixel positions of undistorted pixels; accepts (2,) or (N, 2)."""
        px = np.asarray(pixels_undist, dtype=float)
        single = px.ndim == 1
        px = np.atleast_2d(px)
        if self.distortion_model == DistortionModel.NONE:
            out = px.copy()
        else:
            out = self._to_pixels(self._distort_normalized(self._to_normalized(px)))
        return out[0] if single else out

    def undistort(self, pixels_raw: np.ndarray) -> np.ndarray:
        """Iteratively invert the distortion model; accepts (2,) or (N, 2)."""
        px = np.asarray(pixels_raw, dtype=float)
        single = px.ndim == 1
        px = np.atleast_2d(px)
        if self.distortion_model == DistortionModel.NONE:
            out = px.copy()
        elif self.distortion_model == DistortionModel.RADTAN:
            out = self._to_pixels(self._undistort_radtan(self._to_normalized(px)))
        else:
            out = self._to_pixels(self._undistort_fisheye(self._to_normalized(px)))
        return out[0] if single else out

    def _undistort_radtan(self, xy_d: np.ndarray) -> np.ndarray:
        # Newton iterations on distort(xy) = xy_d, started at the distorted point
        tol = UNDISTORT_TOL_PX / self.focal
        xy = xy_d.copy()
        for _ in range(UNDISTORT_MAX_ITERS):
            err = self._distort_normalized(xy) - xy_d
            step = np.linalg.solve(self._radtan_jacobian(xy), err[:, :, None])[:, :, 0]
            xy -= step
            if np.max(np.abs(step), initial=0.0) < tol:
                break
        return xy

    def _undistort_fisheye(self, xy_d: np.ndarray) -> np.ndarray:
        tol = UNDISTORT_TOL_PX / self.focal
        k1, k2, k3, k4 = self.distortion
        theta_d = np.hypot(xy_d[:, 0], xy_d[:, 1])
        theta = theta_d.copy()
        for _ in range(UNDISTORT_MAX_ITERS):
            t2 = theta * theta
            f = self._fisheye_theta_d(theta) - theta_d
            df = 1.0 + 3.0 * k1 * t2 + 5.0 * k2 * t2 ** 2 + 7.0 * k3 * t2 ** 3 + 9.0 * k4 * t2 ** 4
            step = f / df
            theta -= step
            if np.max(np.abs(step), initial=0.0) < tol:
                break
        r = np.tan(theta)
        scale = np.where(theta_d > 1e-12, r / np.where(theta_d > 1e-12, theta_d, 1.0), 1.0)
        return xy_d * scale[:, None]


@dataclass(frozen=True, eq=False)
class StereoRig:
    left: CameraModel
    right: CameraModel
    t_rl: Se3Pose

    @property
    def baseline(self) -> float:
        return float(np.linalg.norm(self.t_rl.translation))

    def essential(self) -> np.ndarray:
        """E such that bearing_r^T E bearing_l = 0."""
        return skew(self.t_rl.translation) @ self.t_rl.rotation
