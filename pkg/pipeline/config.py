import re
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import yaml

from geometry import CameraModel, DistortionModel, Se3Pose, StereoRig
from imgproc import DetectorType
from utils.errors import ConfigError

CONFIG_DIR = Path(__file__).parent / "config"

CALIBRATION_KEYS = (
    'width', 'height', 'fx', 'fy', 'cx', 'cy', 'distortion_model', 'distortion',
    'right_fx', 'right_fy', 'right_cx', 'right_cy', 'right_distortion_model', 'right_distortion',
    't_rl',
)


class Mode(Enum):
    MONO = "mono"
    STEREO = "stereo"


class Profile(Enum):
    STANDARD = "standard"
    FAST = "fast"


@dataclass
class SlamConfig:
    mode: Mode = Mode.STEREO
    profile: Profile = Profile.STANDARD
    rt_mode: bool = False
    seed: int = 0
    loop_closing: bool = True

    # detection and tracking
    detector: DetectorType = DetectorType.SHI_TOMASI
    cell_size: int = 35
    pyramid_levels: int = 4
    clahe_clip_limit: float = 3.0
    quality_level: float = 0.01
    fast_threshold: int = 20
    backward_max_error: float = 0.5

    # outlier filtering and pose estimation
    epipolar_threshold_px: float = 3.0
    ransac_confidence: float = 0.99
    epipolar_max_iters: int = 200
    p3p_trigger_ratio: float = 0.5
    p3p_threshold_px: float = 3.0
    p3p_max_iters: int = 100
    chi2_threshold: float = 5.991
    pose_max_iters: int = 20

    # keyframes and initialization
    kf_min_tracked_ratio: float = 0.85
    kf_max_parallax_px: float = 15.0
    kf_min_cell_ratio: float = 0.5
    init_min_matches: int = 50
    init_min_parallax_deg: float = 1.0
    lost_frames_before_reloc: int = 3

    # mapping
    min_parallax_deg: float = 1.0
    stereo_min_parallax_deg: float = 0.1
    stereo_epipolar_px: float = 2.0
    stereo_min_neighbors: int = 3
    local_map_radius_px: float = 2.0
    descriptor_threshold: int = 50
    max_point_descriptors: int = 10

    # local bundle adjustment
    ba_min_shared: int = 25
    ba_max_iters: int = 20
    kf_filter_ratio: float = 0.95
    kf_filter_min_observers: int = 4

    # loop closing
    lc_features: int = 300
    lc_fast_threshold: int = 20
    vocab_branching: int = 10
    vocab_leaf_size: int = 150
    lc_temporal_window: int = 20
    lc_score_ratio: float = 0.3
    lc_temporal_consistency: int = 2
    lc_ratio_test: float = 0.8
    lc_min_inliers: int = 30
    lc_p3p_min_inliers: int = 15
    lc_loop_edge_weight: float = 1e8
    pgo_max_iters: int = 50
    loose_ba_max_iters: int = 20

    # orchestration
    frame_queue_size: int = 1
    tracker_delay_s: float = 0.0
    mapping_delay_s: float = 0.0
    ba_delay_s: float = 0.0
    lc_delay_s: float = 0.0

    calibration: Dict[str, Any] = field(default_factory=dict)

    @property
    def is_stereo(self) -> bool:
        return self.mode == Mode.STEREO

    def camera(self) -> CameraModel:
        """Left camera from the calibration block."""
        return _camera_from(self.calibration, prefix='')

    def stereo_rig(self) -> Optional[StereoRig]:
        """Calibrated rig, or None when no right camera is configured."""
        if 't_rl' not in self.calibration:
            return None
        t_rl = np.asarray(self.calibration['t_rl'], dtype=float)
        if t_rl.size != 16:
            raise ConfigError("t_rl must hold 16 row-major numbers")
        right = _camera_from(self.calibration, prefix='right_')
        return StereoRig(left=self.camera(), right=right, t_rl=Se3Pose.from_matrix(t_rl.reshape(4, 4)))


def _camera_from(values: Dict[str, Any], prefix: str) -> CameraModel:
    """Camera from `prefix`-ed calibration keys; a missing right-camera key takes the left value."""
    def get(key: str, default: Any = None) -> Any:
        for name in (prefix + key, key):
            if name in values:
                return values[name]
        if default is not None:
            return default
        raise ConfigError(f"calibration is missing '{prefix + key}'")

    model_name = get('distortion_model', 'none')
    try:
        model = DistortionModel(model_name)
    except ValueError:
        raise ConfigError(f"unknown distortion model '{model_name}'")
    try:
        return CameraModel(
            fx=float(get('fx')), fy=float(get('fy')), cx=float(get('cx')), cy=float(get('cy')),
            width=int(get('width')),
            height=int(get('height')),
            distortion_model=model,
            distortion=tuple(get('distortion', ()) or ()),
        )
    except ValueError as e:
        raise ConfigError(str(e))


_ENUM_FIELDS = {'mode': Mode, 'profile': Profile, 'detector': DetectorType}


_KEY_EQUALS = re.compile(r"^(\s*)([A-Za-z_]\w*)\s*=\s*(.*)$")


def parse_flat_mapping(text: str) -> Any:
    """Parse `key: value` YAML where `key=value` lines are accepted as well."""
    lines = [_KEY_EQUALS.sub(r"\1\2: \3", line) for line in text.splitlines()]
    return yaml.safe_load("\n".join(lines))


def _load_yaml(path: Union[str, Path]) -> Dict[str, Any]:
    """Load a flat `key: value` or `key=value` mapping from file."""
    try:
        data = parse_flat_mapping(Path(path).read_text(encoding='utf-8'))
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}: {e}")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a key: value mapping")
    return data


def config_from_dict(values: Dict[str, Any]) -> SlamConfig:
    """Build a config from defaults, the profile overrides and `values`.

    Calibration keys are collected into `calibration`; any other unknown key is an error.
    """
    known = {f.name: f for f in fields(SlamConfig) if f.name != 'calibration'}
    merged = _load_yaml(CONFIG_DIR / "default.yaml")
    profile = values.get('profile', merged.get('profile', Profile.STANDARD.value))
    if profile == Profile.FAST.value:
        merged.update(_load_yaml(CONFIG_DIR / "fast.yaml"))
    merged.update(values)

    kwargs: Dict[str, Any] = {}
    calibration: Dict[str, Any] = {}
    for key, value in merged.items():
        if key in CALIBRATION_KEYS:
            calibration[key] = value
        elif key in known:
            kwargs[key] = _coerce(key, value, known[key].type)
        else:
            raise ConfigError(f"unknown config key '{key}'")
    config = SlamConfig(calibration=calibration, **kwargs)
    return enforce_profile(validate(config))


def _coerce(key: str, value: Any, annotation: Any) -> Any:
    if key in _ENUM_FIELDS:
        try:
            return _ENUM_FIELDS[key](value)
        except ValueError:
            raise ConfigError(f"invalid value '{value}' for '{key}'")
    try:
        if annotation in (bool, 'bool'):
            if not isinstance(value, bool):
                raise ValueError(value)
            return value
        if annotation in (int, 'int'):
            return int(value)
        if annotation in (float, 'float'):
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value '{value}' for '{key}'")
    return value


def validate(config: SlamConfig) -> SlamConfig:
    positive = ('cell_size', 'pyramid_levels', 'epipolar_max_iters', 'p3p_max_iters', 'pose_max_iters',
                'init_min_matches', 'ba_max_iters', 'vocab_branching', 'vocab_leaf_size', 'lc_features',
                'max_point_descriptors', 'frame_queue_size', 'pgo_max_iters', 'lost_frames_before_reloc',
                'lc_p3p_min_inliers')
    for name in positive:
        if getattr(config, name) <= 0:
            raise ConfigError(f"'{name}' must be positive")
    for name in ('kf_min_tracked_ratio', 'kf_filter_ratio', 'ransac_confidence', 'lc_ratio_test',
                 'p3p_trigger_ratio', 'lc_score_ratio'):
        if not 0.0 <= getattr(config, name) <= 1.0:
            raise ConfigError(f"'{name}' must lie in [0, 1]")
    if config.vocab_branching < 2:
        raise ConfigError("'vocab_branching' must be at least 2")
    return config


def enforce_profile(config: SlamConfig) -> SlamConfig:
    """The Fast profile always runs without loop closing, with FAST corners on 50 px cells."""
    if config.profile == Profile.FAST:
        return replace(config, loop_closing=False, detector=DetectorType.FAST, cell_size=50)
    return config


def load_config(path: Optional[Union[str, Path]] = None, **overrides: Any) -> SlamConfig:
    """Load a SLAM configuration.

    Args:
        path: Flat YAML file with thresholds and calibration; defaults only when None
        **overrides: Values applied on top of the file (e.g. from the command line)

    Returns:
        Validated SlamConfig with the profile invariant applied.
    """
    values = _load_yaml(path) if path is not None else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_dict(values)
