"""Trajectory files, alignment and ATE/RPE metrics."""
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from geometry import Se3Pose
from utils.errors import InsufficientAssociationError, MalformedLayoutError

logger = logging.getLogger(__name__)

KITTI_LENGTHS = (100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0)
FALLBACK_FRACTIONS = (0.1, 0.2, 0.3, 0.4, 0.5)
RPE_STEP = 10
EUROC_MAX_DT = 0.005
FRAME_MATCH_S = 1e-6


class Align(Enum):
    SE3 = "se3"
    SIM3 = "sim3"


class Association(Enum):
    NEAREST = "nearest"
    INDEX = "index"
    AUTO = "auto"


def format_timestamp(t: float) -> str:
    """Nine fixed decimals with trailing zeros dropped."""
    text = f"{t:.9f}".rstrip('0')
    return text + '0' if text.endswith('.') else text


@dataclass
class TrajectoryEstimate:
    """Timestamped camera-to-world poses with markers where tracking was lost."""
    timestamps: List[float] = field(default_factory=list)
    poses: List[Se3Pose] = field(default_factory=list)
    gaps: List[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.timestamps)

    def append(self, timestamp: float, pose_wc: Se3Pose) -> None:
        if self.timestamps and timestamp <= self.timestamps[-1]:
            raise ValueError(f"timestamp {timestamp} is not after {self.timestamps[-1]}")
        self.timestamps.append(float(timestamp))
        self.poses.append(pose_wc)

    def add_gap(self, timestamp: float) -> None:
        self.gaps.append(float(timestamp))

    def positions(self) -> np.ndarray:
        return np.array([p.translation for p in self.poses]).reshape(-1, 3)

    def path_length(self) -> float:
        pos = self.positions()
        return float(np.sum(np.linalg.norm(np.diff(pos, axis=0), axis=1))) if len(pos) > 1 else 0.0

    def save(self, path: Union[str, Path]) -> None:
        """TUM format, `timestamp tx ty tz qx qy qz qw`, timestamps to the nanosecond."""
        rows = [(t, format_timestamp(t) + " " + " ".join(f"{v:.9g}" for v in (*p.translation, *p.quaternion)))
                for t, p in zip(self.timestamps, self.poses)]
        rows += [(t, f"# gap {format_timestamp(t)}") for t in self.gaps]
        rows.sort(key=lambda row: (row[0], not row[1].startswith('#')))
        Path(path).write_text("".join(line + "\n" for _, line in rows))

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'TrajectoryEstimate':
        """Read a TUM file written by `save` or by a ground-truth converter.

        Raises:
            MalformedLayoutError: unreadable file, wrong column count, non-numeric values or
                timestamps that do not increase
        """
        traj = cls()
        try:
            lines = Path(path).read_text().splitlines()
        except OSError as e:
            raise MalformedLayoutError(f"cannot read trajectory {path}: {e}")
        for n, line in enumerate(lines, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith('#'):
                parts = line[1:].split()
                if len(parts) == 2 and parts[0] == 'gap':
                    traj.add_gap(_parse_float(parts[1], path, n))
                continue
            values = line.replace(',', ' ').split()
            if len(values) != 8:
                raise MalformedLayoutError(f"{path}:{n}: expected 8 values, got {len(values)}")
            t, tx, ty, tz, qx, qy, qz, qw = (_parse_float(v, path, n) for v in values)
            try:
                traj.append(t, Se3Pose(np.array([qx, qy, qz, qw]), np.array([tx, ty, tz])))
            except ValueError as e:
                raise MalformedLayoutError(f"{path}:{n}: {e}")
        return traj


def _parse_float(text: str, path: Union[str, Path], line_no: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise MalformedLayoutError(f"{path}:{line_no}: '{text}' is not a number")


@dataclass
class EvaluationReport:
    ate_rmse: float
    rpe_trans: float
    rpe_rot: float
    num_pairs: int
    align: Align
    scale: float = 1.0

    def as_text(self) -> str:
        return (f"align {self.align.value}\npairs {self.num_pairs}\nscale {self.scale:.9g}\n"
                f"ate_rmse {self.ate_rmse:.9g}\nrpe_trans {self.rpe_trans:.9g}\nrpe_rot {self.rpe_rot:.9g}\n")


def _nearest_pairs(est: TrajectoryEstimate, gt: TrajectoryEstimate, max_dt: float) -> List[Tuple[int, int]]:
    gt_t = np.asarray(gt.timestamps)
    pairs = []
    for i, t in enumerate(est.timestamps):
        j = int(np.searchsorted(gt_t, t))
        best = min((k for k in (j - 1, j) if 0 <= k < len(gt_t)), key=lambda k: abs(gt_t[k] - t))
        if abs(gt_t[best] - t) <= max_dt:
            pairs.append((i, best))
    return pairs


def same_frame_grid(est: TrajectoryEstimate, gt: TrajectoryEstimate, max_dt: float = EUROC_MAX_DT) -> bool:
    """True when both trajectories list the same frames: equal length and equal frame spacing."""
    if len(est) != len(gt) or len(est) < 2:
        return False
    return bool(np.all(np.abs(np.diff(est.timestamps) - np.diff(gt.timestamps)) <= max_dt))


def associate(est: TrajectoryEstimate, gt: TrajectoryEstimate, max_dt: float = EUROC_MAX_DT,
              association: Association = Association.NEAREST) -> List[Tuple[int, int]]:
    """Pairs (est index, gt index).

    NEAREST matches the nearest ground-truth timestamp within `max_dt` seconds. INDEX pairs
    rows of the same frame: row by row when the lengths agree, otherwise by identical frame
    timestamp so frames missing from the estimate are skipped. AUTO uses INDEX on a shared
    frame grid and NEAREST otherwise.
    """
    if not len(est) or not len(gt):
        return []
    if association == Association.AUTO:
        association = Association.INDEX if same_frame_grid(est, gt, max_dt) else Association.NEAREST
    if association == Association.NEAREST:
        return _nearest_pairs(est, gt, max_dt)
    if len(est) == len(gt):
        return [(i, i) for i in range(len(est))]
    return _nearest_pairs(est, gt, FRAME_MATCH_S)


def umeyama(src: np.ndarray, dst: np.ndarray, with_scale: bool) -> Tuple[np.ndarray, np.ndarray, float]:
    """Least-squares (R, t, s) with dst ~ s R src + t."""
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    xs, xd = src - mu_s, dst - mu_d
    cov = xd.T @ xs / len(src)
    U, D, Vt = np.linalg.svd(cov)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    var_s = np.mean(np.sum(xs ** 2, axis=1))
    s = float(np.trace(np.diag(D) @ S) / var_s) if with_scale and var_s > 0 else 1.0
    t = mu_d - s * R @ mu_s
    return R, t, s


def ate_rmse(est_positions: np.ndarray, gt_positions: np.ndarray, align: Align = Align.SE3) -> Tuple[float, float]:
    """RMSE of aligned positions and the alignment scale."""
    R, t, s = umeyama(est_positions, gt_positions, align == Align.SIM3)
    aligned = s * est_positions @ R.T + t
    return float(np.sqrt(np.mean(np.sum((aligned - gt_positions) ** 2, axis=1)))), s


def _distances(poses: Sequence[Se3Pose]) -> np.ndarray:
    pos = np.array([p.translation for p in poses])
    return np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pos, axis=0), axis=1))])


def segment_lengths(gt_poses: Sequence[Se3Pose]) -> Tuple[float, ...]:
    """KITTI segment lengths, or fractions of the path on short trajectories."""
    total = _distances(gt_poses)[-1] if len(gt_poses) > 1 else 0.0
    if total >= KITTI_LENGTHS[0]:
        return KITTI_LENGTHS
    return tuple(f * total for f in FALLBACK_FRACTIONS if f * total > 0.0)


def rpe_kitti(est_poses: Sequence[Se3Pose], gt_poses: Sequence[Se3Pose], scale: float = 1.0,
              lengths: Optional[Sequence[float]] = None) -> Tuple[float, float]:
    """KITTI relative pose error: translation in percent and rotation in degrees per meter.

    Segments start every few frames and end at the first frame that is at least a segment
    length further along the ground-truth path.
    """
    if len(gt_poses) < 2:
        return 0.0, 0.0
    lengths = tuple(lengths) if lengths is not None else segment_lengths(gt_poses)
    dist = _distances(gt_poses)
    t_errs, r_errs = [], []
    for first in range(0, len(gt_poses), RPE_STEP):
        for length in lengths:
            last = int(np.searchsorted(dist, dist[first] + length))
            if last >= len(gt_poses):
                continue
            gt_rel = gt_poses[first].inverse().compose(gt_poses[last])
            est_rel = est_poses[first].inverse().compose(est_poses[last])
            est_rel = Se3Pose(est_rel.quaternion, scale * est_rel.translation)
            err = est_rel.inverse().compose(gt_rel)
            t_errs.append(np.linalg.norm(err.translation) / length)
            r_errs.append(err.rotation_angle() / length)
    if not t_errs:
        return 0.0, 0.0
    return float(100.0 * np.mean(t_errs)), float(np.degrees(np.mean(r_errs)))


def evaluate(est: TrajectoryEstimate, gt: TrajectoryEstimate, align: Align = Align.SE3,
             max_dt: float = EUROC_MAX_DT, association: Association = Association.NEAREST) -> EvaluationReport:
    """ATE after Umeyama alignment and KITTI-style RPE over associated poses.

    Raises:
        InsufficientAssociationError: when fewer than 3 poses can be associated
    """
    pairs = associate(est, gt, max_dt, association)
    if len(pairs) < 3:
        raise InsufficientAssociationError(f"only {len(pairs)} poses associated with the ground truth")
    est_poses = [est.poses[i] for i, _ in pairs]
    gt_poses = [gt.poses[j] for _, j in pairs]
    ate, scale = ate_rmse(np.array([p.translation for p in est_poses]),
                          np.array([p.translation for p in gt_poses]), align)
    rpe_t, rpe_r = rpe_kitti(est_poses, gt_poses, scale)
    return EvaluationReport(ate_rmse=ate, rpe_trans=rpe_t, rpe_rot=rpe_r, num_pairs=len(pairs),
                            align=align, scale=scale)


def aligned_positions(est: TrajectoryEstimate, gt: TrajectoryEstimate, align: Align = Align.SE3,
                      max_dt: float = EUROC_MAX_DT, association: Association = Association.NEAREST) -> Tuple[np.ndarray, np.ndarray]:
    """Associated estimate positions mapped into the ground-truth frame, and the ground truth."""
    pairs = associate(est, gt, max_dt, association)
    if len(pairs) < 3:
        raise InsufficientAssociationError(f"only {len(pairs)} poses associated with the ground truth")
    src = np.array([est.poses[i].translation for i, _ in pairs])
    dst = np.array([gt.poses[j].translation for _, j in pairs])
    R, t, s = umeyama(src, dst, align == Align.SIM3)
    return s * src @ R.T + t, dst
