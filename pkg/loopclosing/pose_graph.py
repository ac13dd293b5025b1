"""Pose graph over keyframe poses with relative-pose edges."""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple

import numpy as np

from geometry import Se3Pose, se3_ad
from mapping.map import SlamMap

logger = logging.getLogger(__name__)

MAX_DAMPING = 1e32


@dataclass
class PoseGraphEdge:
    a: int
    b: int
    measurement: Se3Pose  # Z_ab, expected T_wa^-1 T_wb
    weight: float = 1.0


@dataclass
class PoseGraph:
    vertices: Dict[int, Se3Pose]
    edges: List[PoseGraphEdge] = field(default_factory=list)
    fixed: Set[int] = field(default_factory=set)

    def add_edge(self, a: int, b: int, measurement: Se3Pose, weight: float = 1.0) -> None:
        if a not in self.vertices or b not in self.vertices:
            raise KeyError(f"edge ({a}, {b}) references a missing vertex")
        self.edges.append(PoseGraphEdge(a, b, measurement, weight))

    @property
    def free(self) -> List[int]:
        return sorted(k for k in self.vertices if k not in self.fixed)


@dataclass
class PoseGraphResult:
    poses: Dict[int, Se3Pose]
    initial_cost: float
    final_cost: float
    iterations: int
    converged: bool
    diverged: bool = False


def edge_error(edge: PoseGraphEdge, poses: Dict[int, Se3Pose]) -> np.ndarray:
    """log(Z_ab^-1 T_wa^-1 T_wb), ordered (rho, phi)."""
    return edge.measurement.inverse().compose(poses[edge.a].inverse()).compose(poses[edge.b]).log()


def edge_jacobians(edge: PoseGraphEdge, poses: Dict[int, Se3Pose]) -> Tuple[np.ndarray, np.ndarray]:
    """Jacobians of `edge_error` w.r.t. right increments of T_wa and T_wb.

    The inverse right Jacobian of SE(3) is truncated after the second-order term,
    J_r^-1(e) ~ I + ad(e) / 2.
    """
    e = edge_error(edge, poses)
    jr_inv = np.eye(6) + 0.5 * se3_ad(e)
    J_b = jr_inv
    J_a = -jr_inv @ poses[edge.b].inverse().compose(poses[edge.a]).adjoint()
    return J_a, J_b


def graph_cost(graph: PoseGraph, poses: Optional[Dict[int, Se3Pose]] = None) -> float:
    poses = poses or graph.vertices
    return float(sum(e.weight * np.sum(edge_error(e, poses) ** 2) for e in graph.edges))


def optimize_pose_graph(graph: PoseGraph, max_iters: int = 50, tolerance: float = 1e-8) -> PoseGraphResult:
    """Levenberg-Marquardt over the free vertices with weighted squared-log edge errors.

    Args:
        graph: Graph to optimize; its vertices are not modified
        max_iters: Iteration cap
        tolerance: Update-norm convergence bound

    Returns:
        PoseGraphResult with every vertex pose after optimization.
    """
    free = graph.free
    index = {k: i for i, k in enumerate(free)}
    n = 6 * len(free)
    poses = dict(graph.vertices)
    cost = graph_cost(graph, poses)
    initial_cost = cost
    if n == 0 or not graph.edges:
        return PoseGraphResult(poses, cost, cost, 0, True)

    damping = 1e-4
    converged = False
    iterations = 0
    need_linearize = True
    H = g = None
    while iterations < max_iters:
        iterations += 1
        if need_linearize:
            H = np.zeros((n, n))
            g = np.zeros(n)
            for edge in graph.edges:
                e = edge_error(edge, poses)
                J_a, J_b = edge_jacobians(edge, poses)
                blocks = [(index.get(edge.a), J_a), (index.get(edge.b), J_b)]
                for i, J_i in blocks:
                    if i is None:
                        continue
                    g[6 * i:6 * i + 6] += edge.weight * J_i.T @ e
                    for j, J_j in blocks:
                        if j is not None:
                            H[6 * i:6 * i + 6, 6 * j:6 * j + 6] += edge.weight * J_i.T @ J_j
            need_linearize = False
        dx = np.linalg.solve(H + damping * np.diag(np.maximum(np.diag(H), 1e-12)), -g)
        if np.linalg.norm(dx) < tolerance:
            converged = True
            break
        candidate = dict(poses)
        for k, i in index.items():
            candidate[k] = poses[k].retract(dx[6 * i:6 * i + 6])
        cand_cost = graph_cost(graph, candidate)
        if np.isfinite(cand_cost) and cand_cost < cost:
            poses, cost = candidate, cand_cost
            damping /= 3.0
            need_linearize = True
        else:
            damping *= 10.0
            if damping > MAX_DAMPING:
                break
    # stalled without any decrease on a non-trivial cost
    diverged = not converged and not (cost < initial_cost or cost < 1e-18)
    logger.debug("PGO: cost %.6g -> %.6g in %d iterations", initial_cost, cost, iterations)
    return PoseGraphResult(poses, initial_cost, cost, iterations, converged, diverged)


def build_loop_graph(slam_map: SlamMap, kf_lc: int, kf_i: int, loop_pose_wc: Se3Pose,
                     loop_weight: float = 1e8) -> PoseGraph:
    """Chain kf_lc..kf_i with consecutive relative-pose edges plus the verified loop edge.

    kf_lc is fixed. Consecutive edges use the current (pre-correction) relative poses and unit
    weight; the loop edge carries `loop_weight` so the solve treats it as a near-hard constraint.
    """
    with slam_map.lock:
        ids = sorted(k for k in slam_map.keyframes if kf_lc <= k <= kf_i)
        vertices = {k: slam_map.keyframes[k].pose_wc for k in ids}
    graph = PoseGraph(vertices=vertices, fixed={kf_lc})
    for a, b in zip(ids, ids[1:]):
        graph.add_edge(a, b, vertices[a].inverse().compose(vertices[b]))
    graph.add_edge(kf_lc, kf_i, vertices[kf_lc].inverse().compose(loop_pose_wc), loop_weight)
    return graph
