import json

import numpy as np
import pytest

import cli_slam
from geometry import Se3Pose
from pipeline import TrajectoryEstimate


@pytest.fixture
def spec_file(tmp_path):
    path = tmp_path / "spec.yaml"
    path.write_text("trajectory: static\nnum_frames: 4\nnum_dots: 200\nwidth: 320\nheight: 240\n"
                    "fx: 240.0\nfy: 240.0\ncx: 159.5\ncy: 119.5\n")
    return path


@pytest.fixture
def ground_truth(tmp_path):
    traj = TrajectoryEstimate()
    for k in range(20):
        traj.append(0.1 * k, Se3Pose(np.array([0.0, 0.0, 0.0, 1.0]), np.array([np.cos(0.3 * k), 0.0, 0.2 * k])))
    path = tmp_path / "gt.txt"
    traj.save(path)
    return path


def test_synth_writes_image_directory(tmp_path, spec_file, capsys):
    out = tmp_path / "seq"
    assert cli_slam.main(['synth', '--spec', str(spec_file), '--out', str(out)]) == 0
    assert len(list((out / "left").glob("*.png"))) == 4
    assert len(list((out / "right").glob("*.png"))) == 4
    assert (out / "groundtruth.txt").is_file()
    assert "Wrote 4 frames (static)" in capsys.readouterr().out


def test_eval_report_and_plot(tmp_path, ground_truth, capsys):
    report = tmp_path / "report.txt"
    plot = tmp_path / "traj.svg"
    code = cli_slam.main(['eval', '--est', str(ground_truth), '--gt', str(ground_truth), '--align', 'sim3',
                          '--report', str(report), '--plot', str(plot)])
    assert code == 0
    lines = dict(line.split() for line in report.read_text().splitlines())
    assert lines['align'] == 'sim3'
    assert lines['pairs'] == '20'
    assert float(lines['ate_rmse']) < 1e-9
    assert plot.read_text().lstrip().startswith("<?xml")
    assert "ate_rmse" in capsys.readouterr().out


def test_errors_exit_non_zero(tmp_path, ground_truth, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("1.0 2.0\n")
    assert cli_slam.main(['eval', '--est', str(bad), '--gt', str(ground_truth)]) == 1
    assert "error:" in capsys.readouterr().err
    assert cli_slam.main(['run', '--dataset', str(tmp_path / "missing"), '--layout', 'kitti']) == 1


def test_unknown_config_key_exits_non_zero(tmp_path, capsys):
    config = tmp_path / "run.yaml"
    config.write_text("cell_sise: 30\n")
    assert cli_slam.main(['run', '--config', str(config), '--dataset', str(tmp_path)]) == 1
    assert "cell_sise" in capsys.readouterr().err


@pytest.mark.slow
def test_run_on_synthetic_directory(tmp_path, spec_file, monkeypatch):
    monkeypatch.setenv("SLAM_LOG_DIR", str(tmp_path / "logs"))
    seq = tmp_path / "seq"
    assert cli_slam.main(['synth', '--spec', str(spec_file), '--out', str(seq)]) == 0
    out = tmp_path / "traj.txt"
    assert cli_slam.main(['run', '--dataset', str(seq), '--layout', 'imagedir', '--seed', '1',
                          '--out', str(out)]) == 0
    assert len(TrajectoryEstimate.load(out)) == 4
    logs = list((tmp_path / "logs").glob("run_*.json"))
    assert len(logs) == 1
    logged = json.loads(logs[0].read_text())
    assert logged["config"]["seed"] == 1
    assert logged["config"]["mode"] == "stereo"
    assert logged["summary"]["frames"] == 4


def test_eval_reads_epoch_timestamps(tmp_path, capsys):
    traj = TrajectoryEstimate()
    for k in range(10):
        traj.append(1403636579.763555584 + 0.05 * k,
                    Se3Pose(np.array([0.0, 0.0, 0.0, 1.0]), np.array([np.sin(0.4 * k), 0.0, 0.3 * k])))
    path = tmp_path / "traj.txt"
    traj.save(path)
    assert cli_slam.main(['eval', '--est', str(path), '--gt', str(path)]) == 0
    assert "pairs 10" in capsys.readouterr().out


def test_eval_repeated_timestamp_is_an_error(tmp_path, ground_truth, capsys):
    bad = tmp_path / "repeated.txt"
    bad.write_text("1.0 0 0 0 0 0 0 1\n1.0 0 0 0 0 0 0 1\n")
    assert cli_slam.main(['eval', '--est', str(bad), '--gt', str(ground_truth)]) == 1
    assert "not after" in capsys.readouterr().err


def test_synth_reads_key_equals_spec(tmp_path):
    spec = tmp_path / "spec.txt"
    spec.write_text("trajectory=static\nnum_frames=3\nnum_dots=100\nwidth=160\nheight=120\n"
                    "fx=120.0\nfy=120.0\ncx=79.5\ncy=59.5\n")
    out = tmp_path / "seq"
    assert cli_slam.main(['synth', '--spec', str(spec), '--out', str(out)]) == 0
    assert len(list((out / "left").glob("*.png"))) == 3
