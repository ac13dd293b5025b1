"""Local bundle adjustment over keyframe poses and anchored inverse depths.

Each map point contributes a single parameter, its inverse depth along the bearing of its
anchor keyframe, so the point block of the normal equations is diagonal and the Schur
complement onto the pose block is cheap.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Set, Tuple, Union

import numpy as np
from scipy import sparse

from geometry import MIN_DEPTH, CameraModel, Se3Pose, StereoRig, skew
from mapping.map import SlamMap
from solver.robust import CHI2_2DOF_95, HuberLoss

logger = logging.getLogger(__name__)

MAX_DAMPING = 1e32
STEP_TOLERANCE = 1e-12


class LinearSolver(Enum):
    SCHUR = "schur"
    DENSE = "dense"


@dataclass
class PointState:
    anchor_kf: int
    anchor_px: np.ndarray
    inv_depth: float


@dataclass
class BaObservation:
    kf_id: int
    point_id: int
    px: np.ndarray
    right_px: Optional[np.ndarray] = None


@dataclass
class BaProblem:
    camera: CameraModel
    poses: Dict[int, Se3Pose]
    free_kfs: List[int]
    fixed_kfs: List[int]
    points: Dict[int, PointState]
    free_points: List[int]
    observations: List[BaObservation]
    rig: Optional[StereoRig] = None
    loss: HuberLoss = field(default_factory=HuberLoss)
    correction_epoch: int = 0

    @property
    def num_pose_params(self) -> int:
        return 6 * len(self.free_kfs)

    @property
    def num_params(self) -> int:
        return self.num_pose_params + len(self.free_points)

    def inv_depths(self) -> Dict[int, float]:
        return {pid: p.inv_depth for pid, p in self.points.items()}

    def cost(self, poses: Optional[Dict[int, Se3Pose]] = None,
             inv_depths: Optional[Dict[int, float]] = None) -> float:
        res, valid = residuals(self, poses or self.poses, inv_depths or self.inv_depths())
        if not valid.all():
            return float('inf')
        return self.loss.cost(np.linalg.norm(res, axis=1))

    def dump(self, path: Union[str, Path]) -> None:
        """Plain-text problem file: header, poses, points, then observations."""
        lines = [f"# ba_problem poses={len(self.poses)} points={len(self.points)} "
                 f"observations={len(self.observations)}"]
        for kf_id in sorted(self.poses):
            T = self.poses[kf_id]
            kind = 'free' if kf_id in self.free_kfs else 'fixed'
            values = ' '.join(f"{v:.17g}" for v in (*T.translation, *T.quaternion))
            lines.append(f"pose {kf_id} {kind} {values}")
        free_points = set(self.free_points)
        for pid in sorted(self.points):
            p = self.points[pid]
            kind = 'free' if pid in free_points else 'fixed'
            lines.append(f"point {pid} {kind} {p.anchor_kf} {p.anchor_px[0]:.17g} {p.anchor_px[1]:.17g} "
                         f"{p.inv_depth:.17g}")
        for obs in self.observations:
            right = '' if obs.right_px is None else f" {obs.right_px[0]:.17g} {obs.right_px[1]:.17g}"
            lines.append(f"obs {obs.kf_id} {obs.point_id} {obs.px[0]:.17g} {obs.px[1]:.17g}{right}")
        Path(path).write_text('\n'.join(lines) + '\n')


@dataclass
class BaResult:
    poses: Dict[int, Se3Pose]
    inv_depths: Dict[int, float]
    outliers: List[Tuple[int, int]]
    initial_cost: float
    final_cost: float
    iterations: int
    diverged: bool = False

    @property
    def committable(self) -> bool:
        return self.final_cost <= self.initial_cost


# --- residuals and Jacobians ------------------------------------------------------------

@dataclass
class _Rows:
    """Flattened residual rows: one per left observation and one per right observation."""
    target: np.ndarray
    anchor: np.ndarray
    point: np.ndarray
    bearing: np.ndarray
    measured: np.ndarray
    right: np.ndarray
    obs_index: np.ndarray


def _rows(problem: BaProblem) -> _Rows:
    target, anchor, point, bearing, measured, right, obs_index = [], [], [], [], [], [], []
    for i, obs in enumerate(problem.observations):
        p = problem.points[obs.point_id]
        b = problem.camera.unproject(p.anchor_px)
        views = [(obs.px, False)]
        if obs.right_px is not None and problem.rig is not None:
            views.append((obs.right_px, True))
        for px, is_right in views:
            target.append(obs.kf_id)
            anchor.append(p.anchor_kf)
            point.append(obs.point_id)
            bearing.append(b)
            measured.append(px)
            right.append(is_right)
            obs_index.append(i)
    return _Rows(np.array(target, dtype=int), np.array(anchor, dtype=int), np.array(point, dtype=int),
                 np.array(bearing).reshape(-1, 3), np.array(measured, dtype=float).reshape(-1, 2),
                 np.array(right, dtype=bool), np.array(obs_index, dtype=int))


def _transform(rows: _Rows, problem: BaProblem, poses: Dict[int, Se3Pose], inv_depths: Dict[int, float]):
    """Camera-frame points and the pieces needed for their derivatives."""
    n = len(rows.target)
    gamma = np.array([inv_depths[p] for p in rows.point])
    p_anchor = rows.bearing / gamma[:, None]
    R_target_anchor = np.empty((n, 3, 3))
    p_target = np.empty((n, 3))
    for i in range(n):
        if rows.target[i] == rows.anchor[i]:
            R_target_anchor[i] = np.eye(3)
            p_target[i] = p_anchor[i]
        else:
            T = poses[rows.target[i]].inverse().compose(poses[rows.anchor[i]])
            R_target_anchor[i] = T.rotation
            p_target[i] = T.act(p_anchor[i])
    p_cam = p_target.copy()
    if problem.rig is not None and rows.right.any():
        p_cam[rows.right] = problem.rig.t_rl.act(p_target[rows.right])
    return gamma, p_anchor, R_target_anchor, p_target, p_cam


def _project(rows: _Rows, problem: BaProblem, p_cam: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    px = np.empty((len(p_cam), 2))
    valid = p_cam[:, 2] > MIN_DEPTH
    left = ~rows.right
    px[left], _ = problem.camera.project_camera(p_cam[left])
    if rows.right.any():
        px[rows.right], _ = problem.rig.right.project_camera(p_cam[rows.right])
    return px, valid


def residuals(problem: BaProblem, poses: Dict[int, Se3Pose],
              inv_depths: Dict[int, float]) -> Tuple[np.ndarray, np.ndarray]:
    """(n, 2) reprojection errors pi(P) - x for every left and right row, and the depth mask."""
    rows = _rows(problem)
    if len(rows.target) == 0:
        return np.zeros((0, 2)), np.zeros(0, dtype=bool)
    *_, p_cam = _transform(rows, problem, poses, inv_depths)
    px, valid = _project(rows, problem, p_cam)
    return px - rows.measured, valid


def jacobian(problem: BaProblem, poses: Dict[int, Se3Pose], inv_depths: Dict[int, float],
             row_weights: Optional[np.ndarray] = None) -> sparse.csr_matrix:
    """Sparse (2n, num_params) Jacobian of `residuals` w.r.t. right pose increments and inverse depths."""
    rows = _rows(problem)
    n = len(rows.target)
    pose_idx = {k: i for i, k in enumerate(problem.free_kfs)}
    point_idx = {p: problem.num_pose_params + i for i, p in enumerate(problem.free_points)}
    if n == 0:
        return sparse.csr_matrix((0, problem.num_params))

    gamma, p_anchor, R_ta, p_target, p_cam = _transform(rows, problem, poses, inv_depths)
    J_pi = np.empty((n, 2, 3))
    left = ~rows.right
    J_pi[left] = problem.camera.projection_jacobian(p_cam[left])
    R_rl = np.eye(3)
    if rows.right.any():
        J_pi[rows.right] = problem.rig.right.projection_jacobian(p_cam[rows.right])
        R_rl = problem.rig.t_rl.rotation
    J_pi[rows.right] = J_pi[rows.right] @ R_rl

    dP_target = np.zeros((n, 3, 6))
    dP_target[:, :, :3] = -np.eye(3)
    dP_target[:, :, 3:] = np.stack([skew(p) for p in p_target])
    dP_anchor = np.zeros((n, 3, 6))
    dP_anchor[:, :, :3] = R_ta
    dP_anchor[:, :, 3:] = -R_ta @ np.stack([skew(p) for p in p_anchor])
    dP_gamma = R_ta @ (-rows.bearing / gamma[:, None] ** 2)[:, :, None]

    same = rows.target == rows.anchor
    J_target = J_pi @ dP_target
    J_anchor = J_pi @ dP_anchor
    J_gamma = (J_pi @ dP_gamma)[:, :, 0]
    if row_weights is not None:
        s = np.sqrt(row_weights)[:, None]
        J_target = J_target * s[:, :, None]
        J_anchor = J_anchor * s[:, :, None]
        J_gamma = J_gamma * s

    r_idx, c_idx, vals = [], [], []
    base = np.arange(6)
    for i in range(n):
        rr = np.array([2 * i, 2 * i + 1])
        if not same[i]:
            for kf, J in ((rows.target[i], J_target[i]), (rows.anchor[i], J_anchor[i])):
                if kf in pose_idx:
                    cols = 6 * pose_idx[kf] + base
                    r_idx.append(np.repeat(rr, 6))
                    c_idx.append(np.tile(cols, 2))
                    vals.append(J.reshape(-1))
        col = point_idx.get(rows.point[i])
        if col is not None:
            r_idx.append(rr)
            c_idx.append(np.array([col, col]))
            vals.append(J_gamma[i])
    if not vals:
        return sparse.csr_matrix((2 * n, problem.num_params))
    return sparse.coo_matrix((np.concatenate(vals), (np.concatenate(r_idx), np.concatenate(c_idx))),
                             shape=(2 * n, problem.num_params)).tocsr()


# --- normal equations -------------------------------------------------------------------

def solve_dense(H: np.ndarray, g: np.ndarray, damping: float) -> np.ndarray:
    """Solve (H + damping I) dx = -g directly."""
    H = H.toarray() if sparse.issparse(H) else np.asarray(H)
    return np.linalg.solve(H + damping * np.eye(len(g)), -g)


def solve_schur(H: Union[np.ndarray, sparse.spmatrix], g: np.ndarray, num_pose_params: int,
                damping: float) -> np.ndarray:
    """Solve (H + damping I) dx = -g eliminating the diagonal inverse-depth block first."""
    H = sparse.csr_matrix(H)
    c = num_pose_params
    g_c, g_p = g[:c], g[c:]
    C = H[c:, c:].diagonal() + damping
    if c == 0:
        return -g_p / C
    B = H[:c, :c].toarray() + damping * np.eye(c)
    if len(g_p) == 0:
        return np.linalg.solve(B, -g_c)
    E = H[:c, c:]
    C_inv = sparse.diags(1.0 / C)
    S = B - (E @ C_inv @ E.T).toarray()
    rhs = -g_c + E @ (g_p / C)
    dx_c = np.linalg.solve(S, rhs)
    dx_p = (-g_p - E.T @ dx_c) / C
    return np.concatenate([dx_c, dx_p])


def _apply(problem: BaProblem, poses: Dict[int, Se3Pose], inv_depths: Dict[int, float],
           dx: np.ndarray) -> Tuple[Dict[int, Se3Pose], Dict[int, float]]:
    new_poses = dict(poses)
    for i, kf_id in enumerate(problem.free_kfs):
        new_poses[kf_id] = poses[kf_id].retract(dx[6 * i:6 * i + 6])
    new_depths = dict(inv_depths)
    for i, pid in enumerate(problem.free_points):
        new_depths[pid] = inv_depths[pid] + dx[problem.num_pose_params + i]
    return new_poses, new_depths


def solve_ba(problem: BaProblem, max_iters: int = 20, linear_solver: LinearSolver = LinearSolver.SCHUR,
             chi2_threshold: float = CHI2_2DOF_95) -> BaResult:
    """Levenberg-Marquardt on the Huber-robustified reprojection cost.

    Steps are only accepted when they lower the cost. After the loop, observations whose
    left or right squared error exceeds `chi2_threshold` are reported as outliers.

    Args:
        problem: Problem to solve; its states are not modified
        max_iters: Cap on linearizations plus rejected steps
        linear_solver: Schur complement or dense normal equations
        chi2_threshold: Outlier bound in squared pixels

    Returns:
        BaResult with the free states, the outlier (kf, point) pairs and the cost history.
    """
    poses = dict(problem.poses)
    depths = problem.inv_depths()
    cost = problem.cost(poses, depths)
    initial_cost = cost
    damping = None
    diverged = False
    iterations = 0
    need_linearize = True
    H = g = None
    while iterations < max_iters and problem.num_params > 0:
        iterations += 1
        if need_linearize:
            res, _ = residuals(problem, poses, depths)
            w = problem.loss.weights(np.linalg.norm(res, axis=1))
            J = jacobian(problem, poses, depths, row_weights=w)
            e = (res * np.sqrt(w)[:, None]).reshape(-1)
            H = (J.T @ J).tocsr()
            g = J.T @ e
            if damping is None:
                damping = 1e-4 * max(float(H.diagonal().max(initial=0.0)), 1e-12)
            need_linearize = False
        if linear_solver == LinearSolver.SCHUR:
            dx = solve_schur(H, g, problem.num_pose_params, damping)
        else:
            dx = solve_dense(H, g, damping)
        if np.linalg.norm(dx) < STEP_TOLERANCE:
            break
        cand_poses, cand_depths = _apply(problem, poses, depths, dx)
        bad_depth = any(cand_depths[p] <= 0.0 for p in problem.free_points)
        cand_cost = float('inf') if bad_depth else problem.cost(cand_poses, cand_depths)
        if cand_cost < cost:
            poses, depths, cost = cand_poses, cand_depths, cand_cost
            damping /= 3.0
            need_linearize = True
        else:
            damping *= 10.0
            if damping > MAX_DAMPING:
                diverged = True
                break

    res, valid = residuals(problem, poses, depths)
    sq = np.sum(res ** 2, axis=1)
    rows = _rows(problem)
    bad_obs = set(rows.obs_index[(sq > chi2_threshold) | ~valid]) if len(sq) else set()
    outliers = sorted({(problem.observations[i].kf_id, problem.observations[i].point_id) for i in bad_obs})
    logger.debug("BA: cost %.6g -> %.6g in %d iterations, %d outliers", initial_cost, cost, iterations,
                 len(outliers))
    return BaResult(
        poses={k: poses[k] for k in problem.free_kfs},
        inv_depths={p: depths[p] for p in problem.free_points},
        outliers=outliers,
        initial_cost=initial_cost,
        final_cost=cost,
        iterations=iterations,
        diverged=diverged,
    )


# --- problem construction and commit ----------------------------------------------------

def build_problem(slam_map: SlamMap, free_kfs: Iterable[int], rig: Optional[StereoRig] = None,
                  pin_scale: bool = False, frozen_kfs: Iterable[int] = (),
                  loss: Optional[HuberLoss] = None) -> BaProblem:
    """Problem over the points seen by `free_kfs`, with their other observers held fixed.

    Free points need at least two views in the problem (a right-image observation counts as
    a view). When nothing would be fixed, the oldest free keyframe is fixed instead. With
    `pin_scale` and fewer than two fixed keyframes, the inverse depth of the most observed
    point is fixed too.
    """
    with slam_map.lock:
        epoch = slam_map.correction_epoch
        frozen = set(frozen_kfs)
        free = sorted(k for k in set(free_kfs) if k in slam_map.keyframes and k not in frozen)
        point_ids: Set[int] = set()
        for kf_id in free:
            point_ids.update(slam_map.keyframes[kf_id].point_to_keypoint)
        observers: Set[int] = set()
        for pid in point_ids:
            observers.update(slam_map.points[pid].observers)
        fixed = sorted(observers - set(free))
        if not fixed and len(free) > 0:
            fixed = [free.pop(0)]

        problem_kfs = set(free) | set(fixed)
        poses = {k: slam_map.keyframes[k].pose_wc for k in problem_kfs}
        points: Dict[int, PointState] = {}
        observations: List[BaObservation] = []
        view_counts: Dict[int, int] = {}
        for pid in sorted(point_ids):
            mp = slam_map.points[pid]
            if mp.anchor_kf not in problem_kfs:
                continue
            obs_for_point = []
            views = 0
            for kf_id in sorted(mp.observers & problem_kfs):
                kf = slam_map.keyframes[kf_id]
                kp = kf.keypoints.get(kf.point_to_keypoint.get(pid))
                if kp is None:
                    continue
                right_px = kp.right_undist_px if rig is not None else None
                obs_for_point.append(BaObservation(kf_id, pid, kp.undist_px.copy(),
                                                   None if right_px is None else right_px.copy()))
                views += 1 + (right_px is not None)
            if views < 2:
                continue
            points[pid] = PointState(mp.anchor_kf, mp.anchor_px.copy(), mp.inv_depth)
            observations.extend(obs_for_point)
            view_counts[pid] = len(obs_for_point)

    free_points = sorted(points)
    if pin_scale and len(fixed) < 2 and free_points:
        anchored_fixed = [p for p in free_points if points[p].anchor_kf in fixed]
        pool = anchored_fixed or free_points
        pinned = max(pool, key=lambda p: (view_counts[p], -p))
        free_points.remove(pinned)

    used = {o.kf_id for o in observations} | {p.anchor_kf for p in points.values()}
    free = [k for k in free if k in used]
    fixed = [k for k in fixed if k in used]
    return BaProblem(
        camera=slam_map.camera, poses={k: poses[k] for k in used}, free_kfs=free, fixed_kfs=fixed,
        points=points, free_points=free_points, observations=observations, rig=rig,
        loss=loss or HuberLoss(), correction_epoch=epoch,
    )


def build_local_ba(kf_id: int, slam_map: SlamMap, rig: Optional[StereoRig] = None, min_shared: int = 25,
                   pin_scale: bool = False) -> BaProblem:
    """Free keyframes: `kf_id` and its covisible keyframes sharing at least `min_shared` points."""
    with slam_map.lock:
        neighbors = slam_map.covisibility.neighbors(kf_id, min_shared)
    return build_problem(slam_map, {kf_id, *neighbors}, rig, pin_scale)


def commit_ba(slam_map: SlamMap, problem: BaProblem, result: BaResult, publish: bool = True) -> bool:
    """Write optimized states back; keyframes and points removed meanwhile are skipped."""
    if not result.committable:
        logger.info("BA result discarded: cost %.6g > %.6g", result.final_cost, result.initial_cost)
        return False
    with slam_map.lock:
        if slam_map.correction_epoch != problem.correction_epoch:
            logger.info("BA result discarded: map corrected by a loop closure meanwhile")
            return False
        for kf_id, pose in result.poses.items():
            if kf_id in slam_map.keyframes:
                slam_map.set_keyframe_pose(kf_id, pose)
        for pid, inv_depth in result.inv_depths.items():
            mp = slam_map.points.get(pid)
            if mp is None or mp.anchor_kf != problem.points[pid].anchor_kf or inv_depth <= 0.0:
                continue
            slam_map.set_point_inv_depth(pid, inv_depth)
        for kf_id, pid in result.outliers:
            slam_map.remove_observation(pid, kf_id)
    if publish:
        slam_map.publish_snapshot()
    return True
