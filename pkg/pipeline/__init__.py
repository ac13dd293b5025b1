from .config import (
    Mode, Profile, SlamConfig, config_from_dict, enforce_profile, load_config, parse_flat_mapping, validate,
)
from .queues import DroppingQueue
from .evaluation import (
    Align, Association, EvaluationReport, TrajectoryEstimate, aligned_positions, associate, ate_rmse, evaluate,
    format_timestamp, rpe_kitti, same_frame_grid, segment_lengths, umeyama,
)
from .synthetic import (
    SyntheticSequence, SyntheticSpec, TrajectoryShape, generate_synthetic, load_synthetic_spec,
    synthetic_spec_from_dict, trajectory_pose,
)
from .datasets import (
    EurocSource, FrameSource, ImageDirSource, KittiSource, Layout, StereoFrame, SyntheticSource, get_frame_source,
)
from .plot import plot_trajectories
from .system import ComponentTimer, FrameRecord, SlamRunResult, SlamSystem, corrected_pose, run_slam

__all__ = [
    'Mode', 'Profile', 'SlamConfig', 'config_from_dict', 'enforce_profile', 'load_config', 'parse_flat_mapping',
    'validate',
    'DroppingQueue',
    'Align', 'Association', 'EvaluationReport', 'TrajectoryEstimate', 'aligned_positions', 'associate', 'ate_rmse',
    'evaluate', 'format_timestamp', 'rpe_kitti', 'same_frame_grid', 'segment_lengths', 'umeyama',
    'SyntheticSequence', 'SyntheticSpec', 'TrajectoryShape', 'generate_synthetic', 'load_synthetic_spec',
    'synthetic_spec_from_dict', 'trajectory_pose',
    'EurocSource', 'FrameSource', 'ImageDirSource', 'KittiSource', 'Layout', 'StereoFrame', 'SyntheticSource',
    'get_frame_source',
    'plot_trajectories',
    'ComponentTimer', 'FrameRecord', 'SlamRunResult', 'SlamSystem', 'corrected_pose', 'run_slam',
]
