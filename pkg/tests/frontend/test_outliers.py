import numpy as np

from frontend import Frame, Keypoint, filter_epipolar, find_essential
from geometry import Se3Pose
from utils.rng import SeedSequencer

# pure sideways motion: epipolar lines are image rows
MOTION = Se3Pose(np.array([0.0, 0.0, 0.0, 1.0]), np.array([0.3, 0.0, 0.0]))


def two_views(camera, n: int, seed: int):
    gen = np.random.default_rng(seed)
    points = np.column_stack([gen.uniform(-2, 2, n), gen.uniform(-1.5, 1.5, n), gen.uniform(4, 8, n)])
    prev_px, _ = camera.project_camera(points)
    cur_px, _ = camera.project_camera(MOTION.inverse().act(points))
    return prev_px, cur_px


def build(prev_px, cur_px, n_3d: int):
    prev_kps, cur_kps = {}, {}
    for i, (a, b) in enumerate(zip(prev_px, cur_px)):
        mp = i if i < n_3d else None
        prev_kps[i] = Keypoint(id=i, raw_px=a, undist_px=a, map_point_id=mp)
        cur_kps[i] = Keypoint(id=i, raw_px=b, undist_px=b, map_point_id=mp)
    return Frame(id=0, timestamp=0.0, pyramid=None, keypoints=prev_kps), cur_kps


def test_planted_outliers_are_removed(camera):
    for trial in range(50):
        prev_px, cur_px = two_views(camera, 90, trial)
        gen = np.random.default_rng(1000 + trial)
        # 20% of both the 3D and the 2D keypoints, pushed off their epipolar line
        bad = np.concatenate([gen.choice(60, 12, replace=False), 60 + gen.choice(30, 6, replace=False)])
        cur_px = cur_px.copy()
        cur_px[bad, 1] += gen.choice([-1.0, 1.0], len(bad)) * gen.uniform(10, 30, len(bad))
        prev, cur = build(prev_px, cur_px, n_3d=60)
        result = filter_epipolar(prev, cur, camera, seeds=SeedSequencer(trial))
        assert result.essential is not None
        assert not result.passthrough
        assert set(result.keypoints) == set(range(90)) - set(bad.tolist())


def test_keeps_keypoint_order(camera):
    prev_px, cur_px = two_views(camera, 40, 3)
    prev, cur = build(prev_px, cur_px, n_3d=30)
    result = filter_epipolar(prev, cur, camera, seeds=SeedSequencer(0))
    assert list(result.keypoints) == list(cur)


def test_too_few_3d_keypoints_pass_through(camera):
    prev_px, cur_px = two_views(camera, 20, 5)
    cur_px = cur_px + np.array([0.0, 25.0])
    prev, cur = build(prev_px, cur_px, n_3d=4)
    result = filter_epipolar(prev, cur, camera)
    assert result.passthrough
    assert result.essential is None
    assert set(result.keypoints) == set(cur)


def test_find_essential_rejects_small_input(camera):
    bearings = np.column_stack([np.zeros(4), np.zeros(4), np.ones(4)])
    E, inliers = find_essential(bearings, bearings, camera)
    assert E is None
    assert not inliers.any()


def test_find_essential_constraint(camera):
    prev_px, cur_px = two_views(camera, 50, 9)
    a, b = camera.unproject_many(prev_px), camera.unproject_many(cur_px)
    E, inliers = find_essential(a, b, camera, seeds=SeedSequencer(1))
    assert inliers.all()
    assert np.max(np.abs(np.einsum('ni,ij,nj->n', b, E, a))) < 1e-6
