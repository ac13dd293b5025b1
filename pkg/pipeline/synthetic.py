"""Rendered random-dot sequences with exact ground truth."""
import logging
from dataclasses import asdict, dataclass, fields
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import cv2
import numpy as np
import yaml
from scipy.spatial.transform import Rotation

from geometry import CameraModel, Se3Pose
from pipeline.config import parse_flat_mapping
from pipeline.evaluation import TrajectoryEstimate
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

SUBPIXEL_SHIFT = 4
BACKGROUND = 128


class TrajectoryShape(Enum):
    STATIC = "static"
    ORBIT = "orbit"
    CORRIDOR = "corridor"
    SQUARE_LOOP = "square_loop"


@dataclass
class SyntheticSpec:
    trajectory: TrajectoryShape = TrajectoryShape.CORRIDOR
    num_frames: int = 200
    rate_hz: float = 20.0
    seed: int = 0
    width: int = 640
    height: int = 480
    fx: float = 450.0
    fy: float = 450.0
    cx: float = 319.5
    cy: float = 239.5
    stereo: bool = True
    baseline: float = 0.12
    num_dots: int = 4000
    dot_radius: float = 0.04
    scene_size: float = 4.0
    path_length: float = 10.0
    orbit_arc_deg: float = 40.0
    noise_sigma: float = 0.0
    brightness_drift: float = 0.0

    def camera(self) -> CameraModel:
        return CameraModel(self.fx, self.fy, self.cx, self.cy, self.width, self.height)

    def t_rl(self) -> Se3Pose:
        """Right camera displaced by `baseline` along the left camera's x axis."""
        return Se3Pose.identity() if not self.stereo else Se3Pose(np.array([0.0, 0.0, 0.0, 1.0]),
                                                                  np.array([-self.baseline, 0.0, 0.0]))

    def calibration(self) -> Dict[str, Any]:
        calib: Dict[str, Any] = {
            'width': self.width, 'height': self.height, 'fx': self.fx, 'fy': self.fy,
            'cx': self.cx, 'cy': self.cy, 'distortion_model': 'none',
        }
        if self.stereo:
            calib['t_rl'] = [float(v) for v in self.t_rl().matrix().reshape(-1)]
        return calib


def load_synthetic_spec(path: Union[str, Path]) -> SyntheticSpec:
    """Flat `key: value` or `key=value` file; unknown keys are an error."""
    try:
        data = parse_flat_mapping(Path(path).read_text(encoding='utf-8')) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read synthetic spec {path}: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a key: value mapping")
    return synthetic_spec_from_dict(data)


def synthetic_spec_from_dict(data: Dict[str, Any]) -> SyntheticSpec:
    known = {f.name: f for f in fields(SyntheticSpec)}
    kwargs: Dict[str, Any] = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown synthetic spec key '{key}'")
        try:
            if key == 'trajectory':
                kwargs[key] = TrajectoryShape(value)
            elif known[key].type in (bool, 'bool'):
                kwargs[key] = bool(value)
            elif known[key].type in (int, 'int'):
                kwargs[key] = int(value)
            else:
                kwargs[key] = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"invalid value '{value}' for '{key}'")
    spec = SyntheticSpec(**kwargs)
    if spec.num_frames < 1 or spec.rate_hz <= 0:
        raise ConfigError("num_frames and rate_hz must be positive")
    return spec


# --- trajectories ------------------------------------------------------------------

def _yaw_pose(yaw: float, position: np.ndarray) -> Se3Pose:
    """Camera (x right, y down, z forward) turned by `yaw` about the world y axis."""
    return Se3Pose(Rotation.from_euler('y', yaw).as_quat(), position)


def _rounded_square(s: float, side: float, corner: float) -> Tuple[np.ndarray, float]:
    """Point at arc length fraction `s` in [0, 1) on a square with rounded corners, and its heading."""
    straight = side - 2.0 * corner
    arc = 0.5 * np.pi * corner
    perimeter = 4.0 * (straight + arc)
    half = 0.5 * side
    # start mid-way along the first edge (x = -half) heading +z
    d = ((s % 1.0) * perimeter + 0.5 * straight) % perimeter
    start = [np.array([-half, 0.0, -half + corner]), np.array([-half + corner, 0.0, half]),
             np.array([half, 0.0, half - corner]), np.array([half - corner, 0.0, -half])]
    seg = min(int(d // (straight + arc)), 3)
    r = d - seg * (straight + arc)
    yaw = 0.5 * np.pi * seg
    direction = np.array([np.sin(yaw), 0.0, np.cos(yaw)])
    if r <= straight:
        return start[seg] + r * direction, yaw
    theta = (r - straight) / corner
    corner_start = start[seg] + straight * direction
    right = np.array([np.cos(yaw), 0.0, -np.sin(yaw)])
    center = corner_start + corner * right
    new_yaw = yaw + theta
    position = center - corner * np.array([np.cos(new_yaw), 0.0, -np.sin(new_yaw)])
    return position, new_yaw


def trajectory_pose(spec: SyntheticSpec, k: int) -> Se3Pose:
    """Ground-truth camera-to-world pose of frame k."""
    t = k / max(spec.num_frames - 1, 1)
    if spec.trajectory == TrajectoryShape.STATIC:
        return Se3Pose.identity()
    if spec.trajectory == TrajectoryShape.ORBIT:
        radius = spec.scene_size
        yaw = np.radians(spec.orbit_arc_deg) * (t - 0.5)
        center = np.array([0.0, 0.0, radius])
        position = center - radius * np.array([np.sin(yaw), 0.0, np.cos(yaw)])
        return _yaw_pose(yaw, position)
    if spec.trajectory == TrajectoryShape.CORRIDOR:
        sway = 0.05 * spec.scene_size * np.sin(2.0 * np.pi * t)
        return _yaw_pose(0.05 * np.sin(2.0 * np.pi * t), np.array([sway, 0.0, spec.path_length * t]))
    side = spec.path_length / 4.0
    position, yaw = _rounded_square(t % 1.0, side, 0.25 * side)
    return _yaw_pose(yaw, position)


# --- scenes ------------------------------------------------------------------------

def scene_points(spec: SyntheticSpec) -> np.ndarray:
    """Seeded 3D dot positions suited to the trajectory shape."""
    rng = np.random.default_rng([spec.seed, 0])
    n = spec.num_dots
    size = spec.scene_size
    if spec.trajectory in (TrajectoryShape.STATIC, TrajectoryShape.ORBIT):
        return np.column_stack([rng.uniform(-size, size, n), rng.uniform(-0.75 * size, 0.75 * size, n),
                                rng.uniform(1.5 * size, 2.5 * size, n) - (size if spec.trajectory == TrajectoryShape.ORBIT else 0.0)])
    if spec.trajectory == TrajectoryShape.CORRIDOR:
        z = rng.uniform(-size, spec.path_length + 3.0 * size, n)
        wall = rng.integers(0, 4, n)
        u = rng.uniform(-1.0, 1.0, n)
        half_w, half_h = 0.6 * size, 0.4 * size
        x = np.where(wall < 2, np.where(wall == 0, -half_w, half_w), u * half_w)
        y = np.where(wall < 2, u * half_h, np.where(wall == 2, -half_h, half_h))
        return np.column_stack([x, y, z])
    half = spec.path_length / 8.0 + size
    wall = rng.integers(0, 4, n)
    u = rng.uniform(-half, half, n)
    y = rng.uniform(-0.4 * size, 0.4 * size, n)
    x = np.select([wall == 0, wall == 1], [-half, half], default=u)
    z = np.select([wall == 2, wall == 3], [-half, half], default=u)
    return np.column_stack([x, y, z])


@dataclass
class SyntheticSequence:
    spec: SyntheticSpec
    points: np.ndarray
    intensities: np.ndarray

    @property
    def camera(self) -> CameraModel:
        return self.spec.camera()

    def __len__(self) -> int:
        return self.spec.num_frames

    def timestamp(self, k: int) -> float:
        return k / self.spec.rate_hz

    def pose(self, k: int) -> Se3Pose:
        return trajectory_pose(self.spec, k)

    def ground_truth(self) -> TrajectoryEstimate:
        traj = TrajectoryEstimate()
        for k in range(len(self)):
            traj.append(self.timestamp(k), self.pose(k))
        return traj

    def projected_dots(self, k: int, right: bool = False) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Pixel positions, depths and indices of the dots visible in frame k."""
        pose_cw = self.pose(k).inverse()
        if right:
            pose_cw = self.spec.t_rl().compose(pose_cw)
        camera = self.camera
        p_c = pose_cw.act(self.points)
        px, valid = camera.project_camera(p_c)
        valid &= camera.in_image(px, border=-8.0)
        idx = np.flatnonzero(valid)
        return px[idx], p_c[idx, 2], idx

    def render(self, k: int, right: bool = False) -> np.ndarray:
        """8-bit grayscale image of frame k; identical calls give identical images."""
        spec = self.spec
        image = np.full((spec.height, spec.width), BACKGROUND, dtype=np.uint8)
        px, depth, idx = self.projected_dots(k, right)
        scale = 1 << SUBPIXEL_SHIFT
        for i in np.argsort(-depth, kind='stable'):
            radius = float(np.clip(spec.dot_radius * spec.fx / depth[i], 1.5, 10.0))
            center = (int(round(px[i, 0] * scale)), int(round(px[i, 1] * scale)))
            cv2.circle(image, center, int(round(radius * scale)), int(self.intensities[idx[i]]), -1,
                       cv2.LINE_AA, SUBPIXEL_SHIFT)
        if spec.noise_sigma > 0.0 or spec.brightness_drift != 0.0:
            rng = np.random.default_rng([spec.seed, 1 + k, int(right)])
            noisy = image.astype(float) + spec.brightness_drift * k
            if spec.noise_sigma > 0.0:
                noisy += rng.normal(0.0, spec.noise_sigma, image.shape)
            image = np.clip(np.round(noisy), 0, 255).astype(np.uint8)
        return image

    def save(self, out_dir: Union[str, Path]) -> Path:
        """Write an image directory: left/, right/, times.txt, groundtruth.txt, calibration.yaml."""
        out = Path(out_dir)
        (out / "left").mkdir(parents=True, exist_ok=True)
        if self.spec.stereo:
            (out / "right").mkdir(exist_ok=True)
        for k in range(len(self)):
            cv2.imwrite(str(out / "left" / f"{k:06d}.png"), self.render(k))
            if self.spec.stereo:
                cv2.imwrite(str(out / "right" / f"{k:06d}.png"), self.render(k, right=True))
        (out / "times.txt").write_text("".join(f"{self.timestamp(k):.9g}\n" for k in range(len(self))))
        self.ground_truth().save(out / "groundtruth.txt")
        (out / "calibration.yaml").write_text(yaml.safe_dump(self.spec.calibration(), sort_keys=False))
        spec_dict = {k: (v.value if isinstance(v, Enum) else v) for k, v in asdict(self.spec).items()}
        (out / "spec.yaml").write_text(yaml.safe_dump(spec_dict, sort_keys=False))
        logger.info("wrote %d synthetic frames to %s", len(self), out)
        return out


def generate_synthetic(spec: Optional[SyntheticSpec] = None, **overrides: Any) -> SyntheticSequence:
    """Seeded scene for `spec`; frames are rendered on demand."""
    spec = spec or SyntheticSpec()
    if overrides:
        spec = synthetic_spec_from_dict({**{k: (v.value if isinstance(v, Enum) else v)
                                            for k, v in asdict(spec).items()}, **overrides})
    rng = np.random.default_rng([spec.seed, 2])
    points = scene_points(spec)
    intensities = rng.choice(np.r_[0:90, 166:256], size=len(points))
    return SyntheticSequence(spec, points, intensities)
