"""Map correction after pose graph optimization and the loose bundle adjustment that follows."""
import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

from geometry import Se3Pose, StereoRig
from mapping.map import SlamMap
from solver.ba import BaResult, build_problem, commit_ba, solve_ba
from solver.robust import CHI2_2DOF_95

logger = logging.getLogger(__name__)


@dataclass
class CorrectionReport:
    corrected: List[int]
    propagated: List[int]
    merged: int = 0
    new_observations: int = 0


def _propagate(slam_map: SlamMap, reference: int, old_ref: Se3Pose, new_ref: Se3Pose,
               skip: Iterable[int]) -> Tuple[List[int], Se3Pose]:
    """Move keyframes newer than `reference` by the reference's world correction."""
    correction = new_ref.compose(old_ref.inverse())
    skip = set(skip)
    moved = []
    for kf_id in sorted(slam_map.keyframes):
        if kf_id <= reference or kf_id in skip:
            continue
        slam_map.set_keyframe_pose(kf_id, correction.compose(slam_map.keyframes[kf_id].pose_wc))
        moved.append(kf_id)
    return moved, correction


def apply_corrections(slam_map: SlamMap, old_poses: Dict[int, Se3Pose], new_poses: Dict[int, Se3Pose],
                      kf_i: int, point_pairs: Iterable[Tuple[int, int]] = (),
                      new_observations: Iterable[Tuple[int, int]] = ()) -> CorrectionReport:
    """Commit corrected keyframe poses, propagate them, and fuse the loop's duplicate points.

    Points move rigidly with their anchor keyframe. Keyframes created after `kf_i` keep
    their pose relative to `kf_i`. Each matched pair is merged into the older point.

    Args:
        slam_map: Map to correct
        old_poses: Keyframe poses the graph was built from
        new_poses: Optimized keyframe poses
        kf_i: Keyframe that closed the loop
        point_pairs: (map point, duplicate map point) pairs from verification
        new_observations: (map point, keypoint of kf_i) pairs to add

    Returns:
        CorrectionReport
    """
    with slam_map.lock:
        corrected = []
        for kf_id in sorted(new_poses):
            if kf_id in slam_map.keyframes:
                slam_map.set_keyframe_pose(kf_id, new_poses[kf_id])
                corrected.append(kf_id)
        propagated, correction = [], Se3Pose.identity()
        if kf_i in new_poses and kf_i in old_poses:
            propagated, correction = _propagate(slam_map, kf_i, old_poses[kf_i], new_poses[kf_i], new_poses)

        merged = 0
        for a, b in point_pairs:
            keep, drop = min(a, b), max(a, b)
            keep = slam_map.aliases.get(keep, keep)
            drop = slam_map.aliases.get(drop, drop)
            if keep in slam_map.points and drop in slam_map.points and keep != drop:
                slam_map.merge_points(keep, drop)
                merged += 1
        added = 0
        kf = slam_map.keyframes.get(kf_i)
        for pid, kp_id in new_observations:
            pid = slam_map.aliases.get(pid, pid)
            if kf is not None and pid in slam_map.points and kp_id in kf.keypoints:
                added += slam_map.add_observation(pid, kf_i, kp_id)

        slam_map.loop_closures += 1
        slam_map.record_correction(correction)
        slam_map.publish_snapshot()
    logger.debug("loop corrections: %d corrected, %d propagated, %d merged", len(corrected),
                 len(propagated), merged)
    return CorrectionReport(corrected, propagated, merged, added)


def loose_ba(slam_map: SlamMap, corrected_kfs: Iterable[int], fixed_kfs: Iterable[int] = (),
             rig: Optional[StereoRig] = None, max_iters: int = 20,
             chi2_threshold: float = CHI2_2DOF_95) -> Optional[BaResult]:
    """Bundle adjustment restricted to the part of the map touched by a loop correction.

    The corrected keyframes are free and every other observer of their points is fixed.
    Keyframes inserted while solving are moved with the newest free keyframe afterwards.

    Returns:
        The solve result, or None when there was nothing to optimize.
    """
    corrected = sorted(set(corrected_kfs) - set(fixed_kfs))
    if not corrected:
        return None
    problem = build_problem(slam_map, corrected, rig, frozen_kfs=fixed_kfs)
    if problem.num_params == 0 or not problem.free_kfs:
        return None
    with slam_map.lock:
        known = set(slam_map.keyframes)
    newest = max(problem.free_kfs)
    old_newest = problem.poses[newest]

    result = solve_ba(problem, max_iters, chi2_threshold=chi2_threshold)
    with slam_map.lock:
        if not commit_ba(slam_map, problem, result, publish=False):
            return result
        if newest in slam_map.keyframes:
            created = [k for k in slam_map.keyframes if k not in known]
            if created:
                _, correction = _propagate(slam_map, newest, old_newest, result.poses[newest],
                                           set(slam_map.keyframes) - set(created))
                slam_map.record_correction(correction)
        slam_map.publish_snapshot()
    logger.debug("loose BA over %d keyframes: cost %.6g -> %.6g", len(problem.free_kfs),
                 result.initial_cost, result.final_cost)
    return result
