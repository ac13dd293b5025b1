"""Rigid-body transforms in SE(3).

Rotations are stored as unit quaternions (scipy's x, y, z, w order) and exposed as
3x3 matrices at the API boundary. Tangent vectors are ordered (rho, phi):
translational part first, rotational part second.
"""
from dataclasses import dataclass
from functools import cached_property
from typing import Union

import numpy as np
from scipy.spatial.transform import Rotation

_SMALL_ANGLE = 1e-8


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix [v]x."""
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def _v_matrix(phi: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(phi)
    K = skew(phi)
    if theta < _SMALL_ANGLE:
        return np.eye(3) + 0.5 * K + K @ K / 6.0
    return (np.eye(3)
            + (1.0 - np.cos(theta)) / theta ** 2 * K
            + (theta - np.sin(theta)) / theta ** 3 * K @ K)


def _v_matrix_inverse(phi: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(phi)
    K = skew(phi)
    if theta < _SMALL_ANGLE:
        return np.eye(3) - 0.5 * K + K @ K / 12.0
    coeff = (1.0 - theta * np.sin(theta) / (2.0 * (1.0 - np.cos(theta)))) / theta ** 2
    return np.eye(3) - 0.5 * K + coeff * K @ K


def se3_ad(xi: np.ndarray) -> np.ndarray:
    """Adjoint operator ad(xi) of the Lie algebra, so that [xi, d] = ad(xi) @ d."""
    xi = np.asarray(xi, dtype=float)
    ad = np.zeros((6, 6))
    ad[:3, :3] = skew(xi[3:])
    ad[:3, 3:] = skew(xi[:3])
    ad[3:, 3:] = skew(xi[3:])
    return ad


@dataclass(frozen=True, eq=False)
class Se3Pose:
    quaternion: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.quaternion, dtype=float).reshape(4)
        q = q / np.linalg.norm(q)
        if q[3] < 0.0:
            q = -q
        t = np.array(self.translation, dtype=float).reshape(3)
        q.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, 'quaternion', q)
        object.__setattr__(self, 'translation', t)

    @classmethod
    def identity(cls) -> 'Se3Pose':
        return cls(np.array([0.0, 0.0, 0.0, 1.0]), np.zeros(3))

    @classmethod
    def from_rt(cls, rotation: np.ndarray, translation: np.ndarray) -> 'Se3Pose':
        return cls(Rotation.from_matrix(np.asarray(rotation, dtype=float)).as_quat(), translation)

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> 'Se3Pose':
        matrix = np.asarray(matrix, dtype=float).reshape(4, 4)
        return cls.from_rt(matrix[:3, :3], matrix[:3, 3])

    @classmethod
    def exp(cls, xi: np.ndarray) -> 'Se3Pose':
        """Exponential map of a tangent vector (rho, phi)."""
        xi = np.asarray(xi, dtype=float).reshape(6)
        rho, phi = xi[:3], xi[3:]
        return cls(Rotation.from_rotvec(phi).as_quat(), _v_matrix(phi) @ rho)

    @cached_property
    def rotation(self) -> np.ndarray:
        R = Rotation.from_quat(self.quaternion).as_matrix()
        R.setflags(write=False)
        return R

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def compose(self, other: 'Se3Pose') -> 'Se3Pose':
        """self * other; quaternion product is renormalized on construction."""
        q = (Rotation.from_quat(self.quaternion) * Rotation.from_quat(other.quaternion)).as_quat()
        return Se3Pose(q, self.rotation @ other.translation + self.translation)

    def __mul__(self, other: 'Se3Pose') -> 'Se3Pose':
        return self.compose(other)

    def inverse(self) -> 'Se3Pose':
        q = self.quaternion * np.array([-1.0, -1.0, -1.0, 1.0])
        return Se3Pose(q, -self.rotation.T @ self.translation)

    def act(self, points: np.ndarray) -> np.ndarray:
        """Transform a point (3,) or points (N, 3)."""
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def log(self) -> np.ndarray:
        phi = Rotation.from_quat(self.quaternion).as_rotvec()
        rho = _v_matrix_inverse(phi) @ self.translation
        return np.concatenate([rho, phi])

    def adjoint(self) -> np.ndarray:
        """Ad(T) such that T * exp(d) * T^-1 = exp(Ad(T) @ d)."""
        R = self.rotation
        ad = np.zeros((6, 6))
        ad[:3, :3] = R
        ad[:3, 3:] = skew(self.translation) @ R
        ad[3:, 3:] = R
        return ad

    def retract(self, xi: np.ndarray) -> 'Se3Pose':
        """Right-multiplicative update T * exp(xi)."""
        return self.compose(Se3Pose.exp(xi))

    def rotation_angle(self) -> float:
        return float(np.linalg.norm(Rotation.from_quat(self.quaternion).as_rotvec()))

    def interpolate(self, ratio: float) -> 'Se3Pose':
        """exp(ratio * log(T)), used to rescale a motion increment."""
        return Se3Pose.exp(ratio * self.log())

    def __repr__(self) -> str:
        return f"Se3Pose(q={np.round(self.quaternion, 6).tolist()}, t={np.round(self.translation, 6).tolist()})"


def rotation_error(a: Union[Se3Pose, np.ndarray], b: Union[Se3Pose, np.ndarray]) -> float:
    """Angle (rad) of the rotation taking a to b."""
    Ra = a.rotation if isinstance(a, Se3Pose) else np.asarray(a)
    Rb = b.rotation if isinstance(b, Se3Pose) else np.asarray(b)
    return float(np.linalg.norm(Rotation.from_matrix(Ra.T @ Rb).as_rotvec()))
