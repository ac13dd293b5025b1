import os
from pathlib import Path

import pytest

from pipeline import Align, Layout, evaluate, get_frame_source, load_config, run_slam

CONFIG_DIR = Path(__file__).resolve().parents[2] / "pipeline" / "config"


def dataset_path(variable: str) -> Path:
    value = os.getenv(variable)
    if not value:
        pytest.skip(f"{variable} is not set")
    return Path(value)


@pytest.mark.dataset
@pytest.mark.slow
def test_euroc_mh01_stereo():
    root = dataset_path("SLAM_EUROC_MH01")
    config = load_config(CONFIG_DIR / "euroc.yaml")
    source = get_frame_source(Layout.EUROC, root, config.mode)
    result = run_slam(config, source)
    report = evaluate(result.trajectory, source.ground_truth(), Align.SE3, association=source.association)
    assert report.ate_rmse <= 0.10


@pytest.mark.dataset
@pytest.mark.slow
def test_kitti_07_stereo():
    root = dataset_path("SLAM_KITTI_07")
    config = load_config(CONFIG_DIR / "kitti.yaml")
    source = get_frame_source(Layout.KITTI, root, config.mode)
    result = run_slam(config, source)
    report = evaluate(result.trajectory, source.ground_truth(), Align.SE3, association=source.association)
    assert report.ate_rmse <= 1.0
