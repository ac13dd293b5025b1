import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, List, Optional

from geometry import StereoRig
from mapping.map import SlamMap
from solver.ba import build_local_ba, commit_ba, solve_ba
from solver.filtering import filter_keyframes

if TYPE_CHECKING:
    from pipeline.config import SlamConfig

logger = logging.getLogger(__name__)


@dataclass
class LocalBaReport:
    keyframe_id: int
    free_keyframes: int = 0
    fixed_keyframes: int = 0
    points: int = 0
    outliers: int = 0
    committed: bool = False
    diverged: bool = False
    removed_keyframes: List[int] = field(default_factory=list)


class LocalBundleAdjuster:
    """Work of the BA thread for one new keyframe: local BA, commit, then keyframe filtering."""

    def __init__(self, config: 'SlamConfig', slam_map: SlamMap, rig: Optional[StereoRig] = None):
        self.config = config
        self.map = slam_map
        self.rig = rig if config.is_stereo else None

    def process(self, kf_id: int) -> LocalBaReport:
        cfg = self.config
        report = LocalBaReport(keyframe_id=kf_id)
        if self.map.keyframe(kf_id) is None:
            return report
        pin_scale = self.rig is None and self.map.loop_closures == 0
        problem = build_local_ba(kf_id, self.map, self.rig, cfg.ba_min_shared, pin_scale)
        report.free_keyframes = len(problem.free_kfs)
        report.fixed_keyframes = len(problem.fixed_kfs)
        report.points = len(problem.free_points)
        if problem.num_params > 0:
            result = solve_ba(problem, cfg.ba_max_iters, chi2_threshold=cfg.chi2_threshold)
            report.outliers = len(result.outliers)
            report.diverged = result.diverged
            report.committed = commit_ba(self.map, problem, result)
            if result.diverged:
                logger.warning("local BA around keyframe %d stopped at maximum damping", kf_id)
        report.removed_keyframes = filter_keyframes(kf_id, self.map, cfg.kf_filter_ratio,
                                                    cfg.kf_filter_min_observers)
        if report.removed_keyframes:
            self.map.publish_snapshot()
        logger.debug("local BA for keyframe %d: %s", kf_id, report)
        return report
