import numpy as np
import pytest

from frontend import Keypoint
from geometry import Se3Pose
from mapping import CovisibilityGraph, Keyframe, SlamMap

SHIFT = Se3Pose(np.array([0.0, 0.0, 0.0, 1.0]), np.array([0.5, 0.0, 0.0]))


def keyframe(kf_id: int, pose_wc: Se3Pose, kp_ids, camera, points_w=None) -> Keyframe:
    kps = {}
    for kp_id in kp_ids:
        if points_w is not None and kp_id in points_w:
            px, _ = camera.project_camera(pose_wc.inverse().act(points_w[kp_id])[None, :])
            px = px[0]
        else:
            px = np.array([100.0 + kp_id, 100.0])
        kps[kp_id] = Keypoint(id=kp_id, raw_px=px, undist_px=px)
    return Keyframe(id=kf_id, timestamp=0.1 * kf_id, pose_wc=pose_wc, keypoints=kps)


@pytest.fixture
def two_view_map(camera):
    """Keyframes 0 and 1 sharing points 0..9, each anchored in keyframe 0 at 5 m."""
    slam_map = SlamMap(camera)
    gen = np.random.default_rng(0)
    points = {i: np.array([gen.uniform(-1, 1), gen.uniform(-1, 1), 5.0]) for i in range(10)}
    kf0 = keyframe(0, Se3Pose.identity(), range(10), camera, points)
    kf1 = keyframe(1, SHIFT, range(10), camera, points)
    slam_map.add_keyframe(kf0)
    slam_map.add_keyframe(kf1)
    for i in range(10):
        slam_map.create_point(i, 0, kf0.keypoints[i].undist_px, 1.0 / 5.0)
        slam_map.add_observation(i, 0, i)
        slam_map.add_observation(i, 1, i)
    return slam_map, points


def test_anchored_point_position(two_view_map):
    slam_map, points = two_view_map
    for i, p in points.items():
        assert np.allclose(slam_map.points[i].position, p, atol=1e-9)


def test_moving_anchor_moves_points_rigidly(two_view_map):
    slam_map, points = two_view_map
    delta = Se3Pose.exp(np.array([0.1, 0.2, -0.1, 0.02, 0.01, -0.03]))
    slam_map.set_keyframe_pose(0, delta)
    for i, p in points.items():
        assert np.allclose(slam_map.points[i].position, delta.act(p), atol=1e-9)


def test_covisibility_counts(two_view_map):
    slam_map, _ = two_view_map
    assert slam_map.covisibility.count(0, 1) == 10
    assert slam_map.covisible_keyframes(0) == [1]
    slam_map.remove_observation(3, 1)
    assert slam_map.covisibility.count(0, 1) == 9


def test_incremental_covisibility_matches_recomputation(camera):
    gen = np.random.default_rng(4)
    slam_map = SlamMap(camera)
    n_points = 40
    for kf_id in range(6):
        slam_map.add_keyframe(keyframe(kf_id, Se3Pose.identity(), range(n_points), camera))
    for pid in range(n_points):
        anchor = int(gen.integers(0, 6))
        slam_map.create_point(pid, anchor, np.array([320.0, 240.0]), 0.2)
        slam_map.add_observation(pid, anchor, pid)
    for _ in range(300):
        op = gen.integers(0, 3)
        pid = int(gen.integers(0, n_points))
        kf_id = int(gen.integers(0, 6))
        if pid not in slam_map.points or kf_id not in slam_map.keyframes:
            continue
        if op == 0:
            slam_map.add_observation(pid, kf_id, pid)
        elif op == 1:
            slam_map.remove_observation(pid, kf_id)
        elif len(slam_map.keyframes) > 2 and gen.random() < 0.05:
            slam_map.remove_keyframe(kf_id)
        expected = CovisibilityGraph.from_observers(mp.observers for mp in slam_map.points.values())
        assert slam_map.covisibility.as_dict() == expected.as_dict()


def test_removing_anchor_reanchors_point(two_view_map):
    slam_map, points = two_view_map
    assert slam_map.remove_keyframe(0)
    for i, p in points.items():
        mp = slam_map.points[i]
        assert mp.anchor_kf == 1
        assert np.allclose(mp.position, p, atol=1e-9)
        assert mp.observers == {1}


def test_last_observation_deletes_point(two_view_map):
    slam_map, _ = two_view_map
    slam_map.remove_observation(2, 0)
    slam_map.remove_observation(2, 1)
    assert 2 not in slam_map.points
    assert slam_map.keyframes[1].keypoints[2].map_point_id is None


def test_pinned_keyframe_removal_is_deferred(two_view_map):
    slam_map, _ = two_view_map
    slam_map.pin([0])
    assert not slam_map.remove_keyframe(0)
    assert slam_map.keyframes[0].tombstoned
    slam_map.unpin([0])
    assert 0 not in slam_map.keyframes


def test_merge_points(two_view_map, camera):
    slam_map, _ = two_view_map
    slam_map.add_keyframe(keyframe(2, SHIFT, [50], camera))
    slam_map.create_point(50, 2, np.array([320.0, 240.0]), 0.2)
    slam_map.add_observation(50, 2, 50)
    slam_map.merge_points(0, 50)
    assert 50 not in slam_map.points
    assert slam_map.points[0].observers == {0, 1, 2}
    assert slam_map.keyframes[2].point_to_keypoint == {0: 50}
    assert slam_map.publish_snapshot().resolve(50) == 0


def test_snapshot_is_isolated_from_later_commits(two_view_map):
    slam_map, points = two_view_map
    snapshot = slam_map.publish_snapshot()
    slam_map.set_keyframe_pose(0, SHIFT)
    slam_map.remove_point(4)
    assert np.allclose(snapshot.positions[0], points[0])
    assert 4 in snapshot.positions
    assert slam_map.snapshot is snapshot
    assert 4 not in slam_map.publish_snapshot().positions


def test_add_keyframe_registers_existing_points(two_view_map, camera):
    slam_map, points = two_view_map
    kf = keyframe(2, SHIFT, [0, 1, 99], camera, points)
    kf.keypoints[0].map_point_id = 0
    kf.keypoints[1].map_point_id = 1
    kf.keypoints[99].map_point_id = 1234
    slam_map.add_keyframe(kf)
    assert kf.point_to_keypoint == {0: 0, 1: 1}
    assert kf.keypoints[99].map_point_id is None
    assert slam_map.covisibility.count(0, 2) == 2


def test_correction_epoch(two_view_map):
    slam_map, _ = two_view_map
    assert slam_map.publish_snapshot().correction_epoch == 0
    slam_map.record_correction(SHIFT)
    snapshot = slam_map.publish_snapshot()
    assert snapshot.correction_epoch == 1
    assert snapshot.correction is SHIFT


def test_non_positive_inverse_depth_is_rejected(two_view_map):
    slam_map, _ = two_view_map
    with pytest.raises(ValueError):
        slam_map.create_point(77, 0, np.array([10.0, 10.0]), 0.0)


def test_corrections_accumulate(two_view_map):
    slam_map, _ = two_view_map
    turn = Se3Pose.exp(np.array([0.0, 0.0, 0.0, 0.0, 0.3, 0.0]))
    slam_map.record_correction(SHIFT)
    slam_map.record_correction(turn)
    snapshot = slam_map.publish_snapshot()
    assert snapshot.correction_epoch == 2
    assert np.allclose(snapshot.correction.matrix(), turn.compose(SHIFT).matrix(), atol=1e-12)
