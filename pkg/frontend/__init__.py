from .frame import Frame, Keypoint
from .motion import MotionModel
from .tracker import TrackingResult, track_frame, refresh_map_links
from .outliers import EpipolarFilterResult, filter_epipolar, find_essential
from .pose import (
    PoseEstimate, PoseStatus, estimate_pose, optimize_pose, p3p_fallback, solve_p3p_ransac,
    CHI2_2DOF_95,
)
from .keyframe import KeyframeDecision, keyframe_decision, tracked_3d_ratio, unrotated_parallax
from .initialization import MonoInitResult, init_monocular
from .visual_frontend import FrontendOutput, TrackingState, VisualFrontend

__all__ = [
    'Frame', 'Keypoint', 'MotionModel',
    'TrackingResult', 'track_frame', 'refresh_map_links',
    'EpipolarFilterResult', 'filter_epipolar', 'find_essential',
    'PoseEstimate', 'PoseStatus', 'estimate_pose', 'optimize_pose', 'p3p_fallback', 'solve_p3p_ransac',
    'CHI2_2DOF_95',
    'KeyframeDecision', 'keyframe_decision', 'tracked_3d_ratio', 'unrotated_parallax',
    'MonoInitResult', 'init_monocular',
    'FrontendOutput', 'TrackingState', 'VisualFrontend',
]
