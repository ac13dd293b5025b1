import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Optional

from geometry import StereoRig
from mapping.local_map import track_local_map
from mapping.map import Keyframe, SlamMap
from mapping.stereo import stereo_match
from mapping.triangulator import triangulate_new_points

if TYPE_CHECKING:
    from pipeline.config import SlamConfig

logger = logging.getLogger(__name__)


@dataclass
class MappingReport:
    keyframe_id: int
    stereo_matches: int = 0
    new_points: int = 0
    retracked: int = 0
    aborted: bool = False


class Mapper:
    """Keyframe processing of the mapping thread: stereo, triangulation, then local map tracking."""

    def __init__(self, config: 'SlamConfig', slam_map: SlamMap, rig: Optional[StereoRig] = None):
        self.config = config
        self.map = slam_map
        self.rig = rig if config.is_stereo else None

    def process(self, kf: Keyframe, should_abort: Optional[Callable[[], bool]] = None) -> MappingReport:
        cfg = self.config
        report = MappingReport(keyframe_id=kf.id)
        self.map.add_keyframe(kf)
        snapshot = self.map.publish_snapshot()

        if self.rig is not None and kf.right_pyramid is not None:
            report.stereo_matches = len(stereo_match(kf, self.rig, snapshot, cfg.cell_size, cfg.stereo_epipolar_px,
                                                     cfg.stereo_min_neighbors, cfg.backward_max_error))
        report.new_points = len(triangulate_new_points(kf, self.map, self.rig, cfg.min_parallax_deg,
                                                       cfg.stereo_min_parallax_deg))
        # new points are visible to the front-end before map tracking starts
        self.map.publish_snapshot()

        aborted = []

        def abort() -> bool:
            if should_abort is not None and should_abort():
                aborted.append(True)
                return True
            return False

        report.retracked = track_local_map(kf, self.map, cfg.local_map_radius_px, cfg.descriptor_threshold, abort)
        report.aborted = bool(aborted)
        self.map.publish_snapshot()
        logger.debug("mapped keyframe %d: %s", kf.id, report)
        return report
