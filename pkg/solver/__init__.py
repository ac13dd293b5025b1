from .robust import CHI2_2DOF_95, HuberLoss
from .ba import (
    BaObservation, BaProblem, BaResult, LinearSolver, PointState,
    build_local_ba, build_problem, commit_ba, jacobian, residuals, solve_ba, solve_dense, solve_schur,
)
from .filtering import filter_keyframes
from .local_ba import LocalBaReport, LocalBundleAdjuster

__all__ = [
    'CHI2_2DOF_95', 'HuberLoss',
    'BaObservation', 'BaProblem', 'BaResult', 'LinearSolver', 'PointState',
    'build_local_ba', 'build_problem', 'commit_ba', 'jacobian', 'residuals', 'solve_ba', 'solve_dense',
    'solve_schur', 'filter_keyframes', 'LocalBaReport', 'LocalBundleAdjuster',
]
