"""Geometric verification of a loop candidate."""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from frontend.outliers import find_essential
from frontend.pose import optimize_pose, solve_p3p_ransac
from geometry import CameraModel, Se3Pose
from imgproc import hamming_distance, match_descriptors
from loopclosing.features import LcFeatures
from mapping.map import SlamMap
from solver.robust import CHI2_2DOF_95
from utils.rng import SeedSequencer

logger = logging.getLogger(__name__)


class VerificationStage(Enum):
    MATCHING = "matching"
    EPIPOLAR = "epipolar"
    P3P = "p3p"
    REFINEMENT = "refinement"
    ACCEPTED = "accepted"


@dataclass
class LoopHypothesis:
    """Outcome of verifying one candidate; `pose_wc` is only set when accepted."""
    kf_i: int
    kf_lc: int
    stage: VerificationStage
    pose_wc: Optional[Se3Pose] = None
    inliers: int = 0
    # (older map point seen from kf_lc's side, map point of kf_i it duplicates)
    point_pairs: List[Tuple[int, int]] = field(default_factory=list)
    # (map point, keypoint of kf_i) for 2D keypoints of kf_i matched to map points
    new_observations: List[Tuple[int, int]] = field(default_factory=list)

    @property
    def accepted(self) -> bool:
        return self.stage == VerificationStage.ACCEPTED


@dataclass
class VerificationParams:
    ratio: float = 0.8
    threshold_px: float = 3.0
    confidence: float = 0.99
    epipolar_max_iters: int = 200
    p3p_max_iters: int = 100
    min_inliers: int = 30
    p3p_min_inliers: int = 15
    search_radius_px: float = 4.0
    max_descriptor_distance: int = 50
    chi2_threshold: float = CHI2_2DOF_95


def _reject(kf_i: int, kf_lc: int, stage: VerificationStage, count: int) -> LoopHypothesis:
    logger.debug("loop candidate %d -> %d rejected at %s (%d)", kf_i, kf_lc, stage.value, count)
    return LoopHypothesis(kf_i, kf_lc, stage, inliers=count)


def _harvest_local_map(feats_i: LcFeatures, pose_wc: Se3Pose, slam_map: SlamMap, kf_lc: int,
                       taken: Dict[int, int], params: VerificationParams) -> Dict[int, int]:
    """Extra feature -> map point matches from kf_lc's local map projected under `pose_wc`."""
    camera = slam_map.camera
    with slam_map.lock:
        local = sorted(slam_map.local_map_points(kf_lc))
        points = [(pid, slam_map.points[pid].position.copy(), np.array(slam_map.points[pid].descriptors))
                  for pid in local if slam_map.points[pid].descriptors]
    if not points or len(feats_i) == 0:
        return {}
    tree = cKDTree(feats_i.undist_px)
    used_points = set(taken.values())
    used_feats = set(taken)
    extra: Dict[int, int] = {}
    pose_cw = pose_wc.inverse()
    for pid, position, descs in points:
        if pid in used_points:
            continue
        px = camera.project(pose_cw, position)
        if px is None or not camera.in_image(px)[0]:
            continue
        best, best_dist = None, params.max_descriptor_distance + 1
        for idx in sorted(tree.query_ball_point(px, params.search_radius_px)):
            if idx in used_feats:
                continue
            dist = int(hamming_distance(descs, feats_i.descriptors[idx]).min())
            if dist < best_dist:
                best, best_dist = idx, dist
        if best is not None:
            extra[best] = pid
            used_feats.add(best)
    return extra


def verify_candidate(feats_i: LcFeatures, feats_lc: LcFeatures, slam_map: SlamMap,
                     params: Optional[VerificationParams] = None,
                     seeds: Optional[SeedSequencer] = None) -> LoopHypothesis:
    """Ratio-test matching, essential RANSAC, P3P-RANSAC, local-map search, then refinement.

    No map state is mutated; the caller applies the returned pairs once the closure succeeds.

    Args:
        feats_i: Features of the querying keyframe
        feats_lc: Features of the candidate keyframe
        slam_map: Map providing kf_lc's points and local map
        params: Thresholds of the cascade
        seeds: RANSAC seeds

    Returns:
        LoopHypothesis whose stage tells where the candidate stopped.
    """
    params = params or VerificationParams()
    camera: CameraModel = slam_map.camera
    kf_i, kf_lc = feats_i.kf_id, feats_lc.kf_id

    matches = match_descriptors(feats_i.descriptors, feats_lc.descriptors, params.ratio)
    if len(matches) < params.min_inliers:
        return _reject(kf_i, kf_lc, VerificationStage.MATCHING, len(matches))

    q_idx = np.array([q for q, _ in matches])
    t_idx = np.array([t for _, t in matches])
    _, mask = find_essential(camera.unproject_many(feats_i.undist_px[q_idx]),
                             camera.unproject_many(feats_lc.undist_px[t_idx]), camera,
                             params.threshold_px, params.confidence, params.epipolar_max_iters, seeds)
    if mask.sum() < params.min_inliers:
        return _reject(kf_i, kf_lc, VerificationStage.EPIPOLAR, int(mask.sum()))

    with slam_map.lock:
        corr: Dict[int, int] = {}
        for q, t in zip(q_idx[mask], t_idx[mask]):
            pid = feats_lc.point_ids[t]
            if pid is not None and pid in slam_map.points:
                corr[int(q)] = pid
        positions = {pid: slam_map.points[pid].position.copy() for pid in corr.values()}
    if len(corr) < 4:
        return _reject(kf_i, kf_lc, VerificationStage.P3P, len(corr))
    feat_ids = sorted(corr)
    points_w = np.array([positions[corr[f]] for f in feat_ids])
    pixels = feats_i.undist_px[feat_ids]
    hypothesis = solve_p3p_ransac(points_w, pixels, camera, params.threshold_px, params.confidence,
                                  params.p3p_max_iters, seeds)
    if hypothesis is None:
        return _reject(kf_i, kf_lc, VerificationStage.P3P, 0)
    proj, valid = camera.project_many(hypothesis.inverse(), points_w)
    p3p_inliers = valid & (np.sum((proj - pixels) ** 2, axis=1) <= params.threshold_px ** 2)
    if p3p_inliers.sum() < params.p3p_min_inliers:
        return _reject(kf_i, kf_lc, VerificationStage.P3P, int(p3p_inliers.sum()))

    taken = {f: corr[f] for f, ok in zip(feat_ids, p3p_inliers) if ok}
    taken.update(_harvest_local_map(feats_i, hypothesis, slam_map, kf_lc, taken, params))
    with slam_map.lock:
        taken = {f: pid for f, pid in taken.items() if pid in slam_map.points}
        positions = {pid: slam_map.points[pid].position.copy() for pid in taken.values()}
    feat_ids = sorted(taken)
    estimate = optimize_pose(np.array([positions[taken[f]] for f in feat_ids]).reshape(-1, 3),
                             feats_i.undist_px[feat_ids].reshape(-1, 2), hypothesis, camera, ids=feat_ids,
                             chi2_threshold=params.chi2_threshold)
    if not estimate.ok or len(estimate.inlier_ids) < params.min_inliers:
        return _reject(kf_i, kf_lc, VerificationStage.REFINEMENT, len(estimate.inlier_ids))

    point_pairs, new_obs = [], []
    for f in estimate.inlier_ids:
        lc_point = taken[f]
        own_point = feats_i.point_ids[f] if f < len(feats_i.point_ids) else None
        kp_id = feats_i.keypoint_ids[f] if f < len(feats_i.keypoint_ids) else None
        if own_point is not None and own_point != lc_point:
            point_pairs.append((lc_point, own_point))
        elif own_point is None and kp_id is not None:
            new_obs.append((lc_point, kp_id))
    logger.debug("loop candidate %d -> %d accepted with %d inliers", kf_i, kf_lc, len(estimate.inlier_ids))
    return LoopHypothesis(
        kf_i=kf_i, kf_lc=kf_lc, stage=VerificationStage.ACCEPTED, pose_wc=estimate.pose_wc,
        inliers=len(estimate.inlier_ids), point_pairs=point_pairs, new_observations=new_obs,
    )
