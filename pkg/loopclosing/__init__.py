from .vocabulary import Signature, VocabularyNode, VocabularyTree, binary_median, k_medians
from .features import LcFeatures, extract_lc_features
from .verification import LoopHypothesis, VerificationParams, VerificationStage, verify_candidate
from .pose_graph import (
    PoseGraph, PoseGraphEdge, PoseGraphResult, build_loop_graph, edge_error, edge_jacobians, graph_cost,
    optimize_pose_graph,
)
from .corrections import CorrectionReport, apply_corrections, loose_ba
from .loop_closer import LoopCloser, LoopEvent

__all__ = [
    'Signature', 'VocabularyNode', 'VocabularyTree', 'binary_median', 'k_medians',
    'LcFeatures', 'extract_lc_features',
    'LoopHypothesis', 'VerificationParams', 'VerificationStage', 'verify_candidate',
    'PoseGraph', 'PoseGraphEdge', 'PoseGraphResult', 'build_loop_graph', 'edge_error', 'edge_jacobians',
    'graph_cost', 'optimize_pose_graph',
    'CorrectionReport', 'apply_corrections', 'loose_ba',
    'LoopCloser', 'LoopEvent',
]
