import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, List, Optional

import numpy as np

from geometry import Se3Pose, StereoRig
from loopclosing.corrections import apply_corrections, loose_ba
from loopclosing.features import LcFeatures, extract_lc_features
from loopclosing.pose_graph import build_loop_graph, optimize_pose_graph
from loopclosing.verification import LoopHypothesis, VerificationParams, verify_candidate
from loopclosing.vocabulary import VocabularyTree
from mapping.map import SlamMap
from utils.logger import format_loop_event
from utils.rng import SeedSequencer

if TYPE_CHECKING:
    from pipeline.config import SlamConfig

logger = logging.getLogger(__name__)

MAX_CANDIDATES = 3


@dataclass
class LoopEvent:
    kf_i: int
    kf_lc: int
    inliers: int
    pre_gap: float
    post_gap: float

    @property
    def line(self) -> str:
        return format_loop_event(self.kf_i, self.kf_lc, self.inliers, self.pre_gap, self.post_gap)


def _loop_gap(slam_map: SlamMap, kf_lc: int, kf_i: int, measured_lc_i: Se3Pose) -> float:
    """Translational disagreement between the map and the verified loop constraint."""
    with slam_map.lock:
        T_lc = slam_map.keyframes[kf_lc].pose_wc
        T_i = slam_map.keyframes[kf_i].pose_wc
    residual = measured_lc_i.inverse().compose(T_lc.inverse()).compose(T_i)
    return float(np.linalg.norm(residual.translation))


class LoopCloser:
    """Per-keyframe work of the loop-closing thread."""

    def __init__(self, config: 'SlamConfig', slam_map: SlamMap, rig: Optional[StereoRig] = None,
                 seeds: Optional[SeedSequencer] = None):
        self.config = config
        self.map = slam_map
        self.rig = rig if config.is_stereo else None
        self.seeds = seeds or SeedSequencer(config.seed, stream=3)
        self.vocabulary = VocabularyTree(config.vocab_branching, config.vocab_leaf_size, config.seed)
        self.features: Dict[int, LcFeatures] = {}
        self.events: List[LoopEvent] = []
        self.params = VerificationParams(
            ratio=config.lc_ratio_test,
            threshold_px=config.p3p_threshold_px,
            confidence=config.ransac_confidence,
            epipolar_max_iters=config.epipolar_max_iters,
            p3p_max_iters=config.p3p_max_iters,
            min_inliers=config.lc_min_inliers,
            p3p_min_inliers=config.lc_p3p_min_inliers,
            max_descriptor_distance=config.descriptor_threshold,
            chi2_threshold=config.chi2_threshold,
        )

    def process(self, kf_id: int) -> Optional[LoopEvent]:
        """Index the keyframe, then try to close a loop with its best candidates."""
        cfg = self.config
        kf = self.map.keyframe(kf_id)
        if kf is None:
            return None
        feats = extract_lc_features(kf, self.map.camera, cfg.lc_features, cfg.lc_fast_threshold)
        self.features[kf_id] = feats
        candidates = self.vocabulary.update_and_query(kf_id, feats.descriptors, cfg.lc_temporal_window,
                                                      cfg.lc_score_ratio, cfg.lc_temporal_consistency)
        for cand_id, score in candidates[:MAX_CANDIDATES]:
            cand_feats = self.features.get(cand_id)
            if cand_feats is None or self.map.keyframe(cand_id) is None:
                continue
            self.map.pin([kf_id, cand_id])
            try:
                if self.map.keyframe(cand_id) is None or self.map.keyframe(kf_id) is None:
                    continue
                hypothesis = verify_candidate(feats, cand_feats, self.map, self.params, self.seeds)
                if not hypothesis.accepted:
                    continue
                logger.debug("loop candidate %d -> %d (score %.3f) verified", kf_id, cand_id, score)
                event = self.close_loop(hypothesis)
            finally:
                self.map.unpin([kf_id, cand_id])
            if event is not None:
                return event
        return None

    def close_loop(self, hypothesis: LoopHypothesis) -> Optional[LoopEvent]:
        """Pose graph optimization, map correction and loose BA for a verified loop."""
        cfg = self.config
        kf_i, kf_lc = hypothesis.kf_i, hypothesis.kf_lc
        # odometry edges have unit weight, the loop edge lc_loop_edge_weight
        graph = build_loop_graph(self.map, kf_lc, kf_i, hypothesis.pose_wc, cfg.lc_loop_edge_weight)
        measured = graph.edges[-1].measurement
        pre_gap = _loop_gap(self.map, kf_lc, kf_i, measured)

        result = optimize_pose_graph(graph, cfg.pgo_max_iters)
        if result.diverged:
            logger.warning("pose graph optimization for loop %d -> %d diverged; closure abandoned", kf_i, kf_lc)
            return None
        apply_corrections(self.map, graph.vertices, result.poses, kf_i,
                          hypothesis.point_pairs, hypothesis.new_observations)
        loose_ba(self.map, result.poses, fixed_kfs=[kf_lc], rig=self.rig, max_iters=cfg.loose_ba_max_iters,
                 chi2_threshold=cfg.chi2_threshold)
        if self.map.keyframe(kf_i) is None or self.map.keyframe(kf_lc) is None:
            return None

        event = LoopEvent(kf_i, kf_lc, hypothesis.inliers, pre_gap, _loop_gap(self.map, kf_lc, kf_i, measured))
        self.events.append(event)
        logger.info(event.line)
        return event
