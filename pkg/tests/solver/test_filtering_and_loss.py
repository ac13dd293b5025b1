import numpy as np
import pytest

from frontend import Keypoint
from geometry import Se3Pose
from mapping import Keyframe, SlamMap
from pipeline.config import Mode, SlamConfig
from solver import CHI2_2DOF_95, HuberLoss, LocalBundleAdjuster, filter_keyframes


def shared_map(camera, n_kf: int = 6, n_points: int = 20) -> SlamMap:
    """Keyframes 0..n_kf-1 along x, every one observing every point."""
    gen = np.random.default_rng(0)
    points = np.column_stack([gen.uniform(-1, 1, n_points), gen.uniform(-1, 1, n_points),
                              gen.uniform(4, 6, n_points)])
    slam_map = SlamMap(camera)
    for k in range(n_kf):
        pose = Se3Pose(np.array([0.0, 0.0, 0.0, 1.0]), np.array([0.2 * k, 0.0, 0.0]))
        px, _ = camera.project_camera(pose.inverse().act(points))
        kps = {i: Keypoint(id=i, raw_px=p, undist_px=p) for i, p in enumerate(px)}
        slam_map.add_keyframe(Keyframe(id=k, timestamp=0.1 * k, pose_wc=pose, keypoints=kps))
    for pid, p in enumerate(points):
        slam_map.create_point(pid, 0, slam_map.keyframes[0].keypoints[pid].undist_px, 1.0 / p[2])
        for k in range(n_kf):
            slam_map.add_observation(pid, k, pid)
    return slam_map


def test_redundant_keyframes_are_removed(camera):
    slam_map = shared_map(camera)
    removed = filter_keyframes(5, slam_map, redundancy_ratio=0.95, min_other_observers=4)
    # each removal lowers the observer count until the bound stops it
    assert removed == [1, 2]
    assert sorted(slam_map.keyframes) == [0, 3, 4, 5]
    for mp in slam_map.points.values():
        assert mp.observers == {0, 3, 4, 5}


def test_first_and_pinned_keyframes_survive(camera):
    slam_map = shared_map(camera)
    slam_map.pin([1, 2])
    removed = filter_keyframes(5, slam_map, min_other_observers=4)
    assert removed == [3, 4]
    assert 0 in slam_map.keyframes


def test_removed_anchor_is_replaced(camera):
    slam_map = shared_map(camera)
    positions = {pid: mp.position.copy() for pid, mp in slam_map.points.items()}
    slam_map.remove_keyframe(0)
    for pid, mp in slam_map.points.items():
        assert mp.anchor_kf == 1
        assert np.allclose(mp.position, positions[pid])


def test_keyframes_with_unique_points_stay(camera):
    slam_map = shared_map(camera, n_kf=3)
    assert filter_keyframes(2, slam_map) == []


def test_local_bundle_adjuster_commits(camera):
    slam_map = shared_map(camera, n_kf=4)
    truth = slam_map.keyframes[3].pose_wc
    slam_map.set_keyframe_pose(3, truth.retract(np.array([0.02, 0.01, -0.01, 0.0, 0.003, 0.0])))
    config = SlamConfig(mode=Mode.MONO, ba_min_shared=10, kf_filter_min_observers=10)
    report = LocalBundleAdjuster(config, slam_map).process(3)
    assert report.committed
    assert report.fixed_keyframes == 1
    assert report.removed_keyframes == []
    error = np.linalg.norm(slam_map.keyframes[3].pose_wc.translation - truth.translation)
    assert error < 1e-4


def test_local_bundle_adjuster_skips_removed_keyframe(camera):
    slam_map = shared_map(camera, n_kf=2)
    report = LocalBundleAdjuster(SlamConfig(mode=Mode.MONO), slam_map).process(9)
    assert not report.committed
    assert report.free_keyframes == 0


def test_huber_loss():
    loss = HuberLoss()
    assert loss.delta == pytest.approx(np.sqrt(CHI2_2DOF_95))
    r = np.array([0.0, 1.0, loss.delta, 10.0])
    assert np.allclose(loss.rho(r)[:3], 0.5 * r[:3] ** 2)
    assert loss.rho(r)[3] == pytest.approx(loss.delta * (10.0 - 0.5 * loss.delta))
    assert np.allclose(loss.weights(r), [1.0, 1.0, 1.0, loss.delta / 10.0])
    # continuous derivative at the threshold
    eps = 1e-7
    slope_in = (loss.rho(loss.delta) - loss.rho(loss.delta - eps)) / eps
    slope_out = (loss.rho(loss.delta + eps) - loss.rho(loss.delta)) / eps
    assert slope_in == pytest.approx(slope_out, rel=1e-5)
    with pytest.raises(ValueError):
        HuberLoss(0.0)
