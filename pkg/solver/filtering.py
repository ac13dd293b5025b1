import logging
from typing import List

from mapping.map import SlamMap

logger = logging.getLogger(__name__)


def filter_keyframes(kf_id: int, slam_map: SlamMap, redundancy_ratio: float = 0.95,
                     min_other_observers: int = 4) -> List[int]:
    """Remove covisible keyframes whose points are almost all seen elsewhere.

    A neighbor of `kf_id` is redundant when at least `redundancy_ratio` of its points are
    observed by `min_other_observers` other keyframes. The keyframe itself, the first
    keyframe and pinned keyframes are kept. Points anchored in a removed keyframe are
    re-anchored in their oldest remaining observer.

    Returns:
        Ids of the removed keyframes.
    """
    removed = []
    with slam_map.lock:
        if kf_id not in slam_map.keyframes:
            return removed
        first_id = min(slam_map.keyframes)
        for other_id in sorted(slam_map.covisibility.neighbors(kf_id, 1)):
            if other_id in (kf_id, first_id) or slam_map.is_pinned(other_id):
                continue
            other = slam_map.keyframes.get(other_id)
            if other is None or not other.point_to_keypoint:
                continue
            redundant = sum(
                1 for pid in other.point_to_keypoint
                if len(slam_map.points[pid].observers) - 1 >= min_other_observers
            )
            if redundant >= redundancy_ratio * len(other.point_to_keypoint):
                if slam_map.remove_keyframe(other_id):
                    removed.append(other_id)
    if removed:
        logger.debug("keyframe filtering after %d removed %s", kf_id, removed)
    return removed
