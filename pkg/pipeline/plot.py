from pathlib import Path
from typing import Optional, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from pipeline.evaluation import EUROC_MAX_DT, Align, Association, TrajectoryEstimate, aligned_positions  # noqa: E402


def plot_trajectories(est: TrajectoryEstimate, gt: TrajectoryEstimate, path: Union[str, Path],
                      align: Align = Align.SE3, max_dt: float = EUROC_MAX_DT, title: Optional[str] = None,
                      association: Association = Association.NEAREST) -> Path:
    """Top-down (x, z) overlay of the aligned estimate on the ground truth, saved as SVG."""
    est_xyz, gt_xyz = aligned_positions(est, gt, align, max_dt, association)
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.plot(gt_xyz[:, 0], gt_xyz[:, 2], color="black", linewidth=1.0, label="ground truth")
    ax.plot(est_xyz[:, 0], est_xyz[:, 2], color="tab:blue", linewidth=1.0, label=f"estimate ({align.value})")
    ax.scatter(gt_xyz[:1, 0], gt_xyz[:1, 2], color="black", marker="o", s=12)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("z [m]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="best")
    if title:
        ax.set_title(title)
    out = Path(path)
    fig.savefig(out, format="svg", bbox_inches="tight")
    plt.close(fig)
    return out
