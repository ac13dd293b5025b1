import numpy as np
import pytest

from frontend import TrackingState
from geometry import Se3Pose
from pipeline import (
    Align, ComponentTimer, FrameRecord, Mode, SlamSystem, SyntheticSource, config_from_dict, corrected_pose,
    evaluate, generate_synthetic, run_slam,
)
from utils.errors import CalibrationMismatchError


def run_synthetic(spec_values=None, mode: Mode = Mode.STEREO, **config_values):
    sequence = generate_synthetic(**(spec_values or {}))
    config = config_from_dict({'mode': mode.value, **config_values})
    return sequence, run_slam(config, SyntheticSource(sequence, mode))


def test_corrected_pose_follows_reference_keyframe():
    tracked = Se3Pose.exp(np.array([0.1, 0.0, 1.0, 0.0, 0.05, 0.0]))
    ref_then = Se3Pose.exp(np.array([0.0, 0.0, 0.8, 0.0, 0.04, 0.0]))
    correction = Se3Pose.exp(np.array([0.2, -0.1, 0.0, 0.0, 0.0, 0.1]))
    record = FrameRecord(1.0, tracked, True, TrackingState.TRACKING, ref_kf=4, ref_pose_wc=ref_then)
    moved = corrected_pose(record, {4: correction.compose(ref_then)}, {4: ref_then})
    assert np.allclose(moved.matrix(), correction.compose(tracked).matrix(), atol=1e-12)
    # unchanged reference leaves the pose alone
    same = corrected_pose(record, {4: ref_then}, {4: ref_then})
    assert np.allclose(same.matrix(), tracked.matrix(), atol=1e-12)


def test_corrected_pose_with_culled_reference():
    tracked = Se3Pose.exp(np.array([0.0, 0.0, 2.0, 0.0, 0.0, 0.0]))
    created = {2: Se3Pose.exp(np.array([0.0, 0.0, 1.0, 0.0, 0.0, 0.0])), 5: tracked}
    now = {1: Se3Pose.identity(), 2: Se3Pose.exp(np.array([0.5, 0.0, 1.0, 0.0, 0.0, 0.0]))}
    record = FrameRecord(1.0, tracked, True, TrackingState.TRACKING, ref_kf=5, ref_pose_wc=tracked)
    # keyframe 5 is gone, 2 is the newest surviving one before it
    assert np.allclose(corrected_pose(record, now, created).translation, [0.5, 0.0, 2.0])
    orphan = FrameRecord(1.0, tracked, True, TrackingState.TRACKING, ref_kf=None)
    assert corrected_pose(orphan, now, created) is tracked


def test_component_timer():
    timer = ComponentTimer()
    timer.record("tracking", 0.010)
    timer.record("tracking", 0.030)
    timer.record("mapping", 0.5)
    summary = timer.summary()
    assert list(summary) == ["mapping", "tracking"]
    assert summary["tracking"]["count"] == 2
    assert summary["tracking"]["mean_ms"] == pytest.approx(20.0)
    assert summary["tracking"]["max_ms"] == pytest.approx(30.0)
    assert timer.samples("loop_closing") == []


def test_stereo_without_right_calibration():
    calib = generate_synthetic(num_frames=2).spec.calibration()
    del calib['t_rl']
    with pytest.raises(CalibrationMismatchError):
        SlamSystem(config_from_dict(calib))


def test_image_size_must_match_calibration():
    calibrated = generate_synthetic(num_frames=2)
    frames = generate_synthetic(num_frames=2, width=320, height=240, cx=159.5, cy=119.5)
    config = config_from_dict(calibrated.spec.calibration())
    with pytest.raises(CalibrationMismatchError, match="320x240"):
        SlamSystem(config).run(SyntheticSource(frames))


@pytest.mark.slow
def test_static_stereo_scene():
    sequence, result = run_synthetic({'trajectory': 'static', 'num_frames': 100})
    assert len(result.trajectory) == 100
    assert result.trajectory.gaps == []
    assert np.abs(result.trajectory.positions()).max() < 1e-3 * sequence.spec.scene_size
    assert result.summary["keyframes_created"] <= 2
    assert result.summary["dropped_frames"] == 0


@pytest.mark.slow
def test_stereo_corridor_accuracy():
    sequence, result = run_synthetic({'trajectory': 'corridor', 'num_frames': 200, 'noise_sigma': 1.0},
                                     loop_closing=False)
    report = evaluate(result.trajectory, sequence.ground_truth(), Align.SE3)
    assert report.num_pairs >= 190
    assert report.ate_rmse < 0.01 * sequence.ground_truth().path_length()


@pytest.mark.slow
def test_monocular_corridor_accuracy():
    sequence, result = run_synthetic({'trajectory': 'corridor', 'num_frames': 200, 'noise_sigma': 1.0,
                                      'stereo': False}, mode=Mode.MONO, loop_closing=False)
    assert result.summary["mode"] == "mono"
    report = evaluate(result.trajectory, sequence.ground_truth(), Align.SIM3)
    assert report.ate_rmse < 0.015 * sequence.ground_truth().path_length()


@pytest.mark.slow
def test_square_loop_closure_reduces_drift():
    spec = {'trajectory': 'square_loop', 'num_frames': 400, 'path_length': 20.0, 'noise_sigma': 1.0}
    sequence, closed = run_synthetic(spec, loop_closing=True)
    _, open_loop = run_synthetic(spec, loop_closing=False)
    gt = sequence.ground_truth()
    assert closed.events
    assert closed.summary["loop_closures"] >= 1
    post_gap = float(closed.events[-1].split()[5])
    assert post_gap < 0.001 * gt.path_length()
    assert evaluate(closed.trajectory, gt).ate_rmse < evaluate(open_loop.trajectory, gt).ate_rmse


@pytest.mark.slow
def test_non_rt_runs_are_reproducible(tmp_path):
    spec = {'trajectory': 'corridor', 'num_frames': 200, 'noise_sigma': 1.0, 'seed': 3}
    for name in ("a.txt", "b.txt"):
        _, result = run_synthetic(spec, seed=3)
        result.trajectory.save(tmp_path / name)
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()


@pytest.mark.slow
def test_rt_mode_drops_frames_under_slow_tracking():
    sequence, result = run_synthetic({'trajectory': 'corridor', 'num_frames': 40}, rt_mode=True,
                                     tracker_delay_s=0.5)
    assert result.summary["frames"] == 40
    assert result.summary["dropped_frames"] > 0
    assert result.summary["tracked_frames"] + result.summary["dropped_frames"] == 40
    assert len(result.trajectory) <= result.summary["tracked_frames"]


@pytest.mark.slow
def test_rt_tracker_latency_ignores_backend_delays():
    spec = {'trajectory': 'corridor', 'num_frames': 300}
    _, baseline = run_synthetic(spec, rt_mode=True)
    _, delayed = run_synthetic(spec, rt_mode=True, mapping_delay_s=0.5, ba_delay_s=0.5, lc_delay_s=0.5)
    assert delayed.summary["frames"] == 300
    base_ms = baseline.summary["timings"]["tracking"]["mean_ms"]
    slow_ms = delayed.summary["timings"]["tracking"]["mean_ms"]
    assert slow_ms == pytest.approx(base_ms, rel=0.2)
