"""Re-tracking of local map points into a new keyframe by projection and descriptors."""
import logging
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from imgproc import hamming_distance
from mapping.map import Keyframe, SlamMap

logger = logging.getLogger(__name__)


def track_local_map(kf: Keyframe, slam_map: SlamMap, radius_px: float = 2.0, max_descriptor_distance: int = 50,
                    should_abort: Optional[Callable[[], bool]] = None) -> int:
    """Add observations of covisible map points found among the keyframe's 2D keypoints.

    A local point projecting within `radius_px` of a 2D keypoint is a candidate; it is
    accepted when the smallest Hamming distance between the keypoint's descriptor and the
    point's descriptor set is at most `max_descriptor_distance`. The abort callback is
    polled between candidate points; matches already committed are kept.

    Returns:
        Number of observations added.
    """
    camera = slam_map.camera
    with slam_map.lock:
        if kf.id not in slam_map.keyframes:
            return 0
        observed = kf.observed_points()
        local_ids = sorted(slam_map.local_map_points(kf.id) - observed)
        free = [kp for kp in kf.keypoints.values() if kp.map_point_id is None and kp.descriptor is not None]
        pose_cw = kf.pose_cw
    if not local_ids or not free:
        return 0

    tree = cKDTree(np.array([kp.undist_px for kp in free]))
    taken = set()
    added = 0
    for point_id in local_ids:
        if should_abort is not None and should_abort():
            logger.debug("local map tracking of keyframe %d aborted after %d matches", kf.id, added)
            break
        with slam_map.lock:
            mp = slam_map.points.get(point_id)
            if mp is None or kf.id in mp.observers or not mp.descriptors:
                continue
            px = camera.project(pose_cw, mp.position)
            if px is None or not camera.in_image(px)[0]:
                continue
            best_idx, best_dist = None, max_descriptor_distance + 1
            point_descs = np.array(mp.descriptors)
            for idx in sorted(tree.query_ball_point(px, radius_px)):
                if idx in taken or free[idx].map_point_id is not None:
                    continue
                dist = int(hamming_distance(point_descs, free[idx].descriptor).min())
                if dist < best_dist:
                    best_idx, best_dist = idx, dist
            if best_idx is None or best_dist > max_descriptor_distance:
                continue
            if slam_map.add_observation(point_id, kf.id, free[best_idx].id):
                taken.add(best_idx)
                added += 1
    logger.debug("keyframe %d: %d local map observations", kf.id, added)
    return added
