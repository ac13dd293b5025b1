import numpy as np
import pytest

from pipeline import (
    ImageDirSource, SyntheticSpec, TrajectoryShape, generate_synthetic, load_synthetic_spec, synthetic_spec_from_dict,
    trajectory_pose,
)
from utils.errors import ConfigError


def small_spec(**values) -> SyntheticSpec:
    return synthetic_spec_from_dict({'num_frames': 5, 'num_dots': 300, 'width': 160, 'height': 120,
                                     'fx': 120.0, 'fy': 120.0, 'cx': 79.5, 'cy': 59.5, **values})


def test_static_frames_are_identical():
    sequence = generate_synthetic(small_spec(trajectory='static'))
    first = sequence.render(0)
    for k in range(1, len(sequence)):
        assert np.array_equal(sequence.render(k), first)
    assert sequence.pose(4).rotation_angle() == pytest.approx(0.0)


def test_rendering_is_deterministic():
    a = generate_synthetic(small_spec(seed=5, noise_sigma=2.0))
    b = generate_synthetic(small_spec(seed=5, noise_sigma=2.0))
    assert np.array_equal(a.render(3), b.render(3))
    assert np.array_equal(a.render(3, right=True), b.render(3, right=True))
    other = generate_synthetic(small_spec(seed=6, noise_sigma=2.0))
    assert not np.array_equal(a.points, other.points)


def test_noise_changes_pixels():
    clean = generate_synthetic(small_spec())
    noisy = generate_synthetic(small_spec(noise_sigma=3.0))
    assert not np.array_equal(clean.render(1), noisy.render(1))


def test_square_loop_closes():
    spec = SyntheticSpec(trajectory=TrajectoryShape.SQUARE_LOOP, num_frames=240, path_length=20.0)
    first, last = trajectory_pose(spec, 0), trajectory_pose(spec, spec.num_frames - 1)
    assert np.allclose(first.matrix(), last.matrix(), atol=1e-12)
    # the camera does travel around the loop
    middle = trajectory_pose(spec, spec.num_frames // 2)
    assert np.linalg.norm(middle.translation - first.translation) > 3.0


def test_square_loop_is_continuous():
    spec = SyntheticSpec(trajectory=TrajectoryShape.SQUARE_LOOP, num_frames=400, path_length=20.0)
    positions = np.array([trajectory_pose(spec, k).translation for k in range(spec.num_frames)])
    steps = np.linalg.norm(np.diff(positions, axis=0), axis=1)
    assert steps.max() < 2.0 * 20.0 / (spec.num_frames - 1)


def test_corridor_moves_forward():
    spec = SyntheticSpec(trajectory=TrajectoryShape.CORRIDOR, num_frames=50, path_length=10.0)
    assert trajectory_pose(spec, 49).translation[2] == pytest.approx(10.0)


def test_projected_dots_land_on_rendered_dots():
    sequence = generate_synthetic(small_spec(trajectory='orbit', num_dots=100))
    image = sequence.render(2)
    px, depth, idx = sequence.projected_dots(2)
    assert len(idx) > 10
    near = np.argsort(depth)[:5]
    hits = 0
    for i in near:
        u, v = np.round(px[i]).astype(int)
        if 0 <= u < image.shape[1] and 0 <= v < image.shape[0] and image[v, u] != 128:
            hits += 1
    assert hits >= 3


def test_right_view_is_shifted_left():
    sequence = generate_synthetic(small_spec(trajectory='static'))
    left_px, left_depth, left_idx = sequence.projected_dots(0)
    right_px, _, right_idx = sequence.projected_dots(0, right=True)
    common, li, ri = np.intersect1d(left_idx, right_idx, return_indices=True)
    assert len(common) > 10
    disparity = left_px[li, 0] - right_px[ri, 0]
    assert np.allclose(disparity, 120.0 * 0.12 / left_depth[li])
    assert np.allclose(left_px[li, 1], right_px[ri, 1])


def test_save_writes_an_image_directory(tmp_path):
    sequence = generate_synthetic(small_spec(trajectory='corridor'))
    out = sequence.save(tmp_path / "seq")
    source = ImageDirSource(out)
    assert len(source) == 5
    assert np.array_equal(source.frame(2).left, sequence.render(2))
    assert np.array_equal(source.frame(2).right, sequence.render(2, right=True))
    assert source.frame(1).timestamp == pytest.approx(0.05)
    gt = source.ground_truth()
    assert np.allclose(gt.positions(), sequence.ground_truth().positions(), atol=1e-6)
    assert len(source.calibration()['t_rl']) == 16
    # the written spec regenerates the same scene
    regenerated = generate_synthetic(load_synthetic_spec(out / "spec.yaml"))
    assert np.array_equal(regenerated.points, sequence.points)


def test_invalid_spec():
    with pytest.raises(ConfigError, match="unknown synthetic spec key"):
        synthetic_spec_from_dict({'frames': 10})
    with pytest.raises(ConfigError):
        synthetic_spec_from_dict({'trajectory': 'spiral'})
    with pytest.raises(ConfigError):
        synthetic_spec_from_dict({'num_frames': 0})


def test_overrides():
    sequence = generate_synthetic(small_spec(), trajectory='orbit', seed=2)
    assert sequence.spec.trajectory == TrajectoryShape.ORBIT
    assert sequence.spec.width == 160


def test_key_equals_spec_file(tmp_path):
    path = tmp_path / "spec.txt"
    path.write_text("trajectory=corridor\nnum_frames = 12\nnoise_sigma=0.5\nseed: 4\n")
    spec = load_synthetic_spec(path)
    assert spec.trajectory == TrajectoryShape.CORRIDOR
    assert spec.num_frames == 12
    assert spec.noise_sigma == pytest.approx(0.5)
    assert spec.seed == 4
