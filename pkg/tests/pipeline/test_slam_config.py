import numpy as np
import pytest

from geometry import DistortionModel
from imgproc import DetectorType
from pipeline import Mode, Profile, config_from_dict, load_config, parse_flat_mapping
from pipeline.config import CONFIG_DIR
from utils.errors import ConfigError

CALIBRATION = {
    'width': 752, 'height': 480, 'fx': 458.654, 'fy': 457.296, 'cx': 367.215, 'cy': 248.375,
    'distortion_model': 'radtan', 'distortion': [-0.2834, 0.0739, 0.0002, 0.00002],
}
T_RL = [1.0, 0.0, 0.0, -0.11, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]


def test_defaults():
    config = load_config()
    assert config.mode == Mode.STEREO
    assert config.profile == Profile.STANDARD
    assert config.loop_closing
    assert config.detector == DetectorType.SHI_TOMASI
    assert config.cell_size == 35
    assert config.chi2_threshold == pytest.approx(5.991)
    assert config.calibration == {}
    assert (config.lc_min_inliers, config.lc_p3p_min_inliers) == (30, 15)


def test_fast_profile_never_closes_loops():
    config = load_config(profile='fast', loop_closing=True, cell_size=20, detector='shi_tomasi')
    assert config.profile == Profile.FAST
    assert not config.loop_closing
    assert config.detector == DetectorType.FAST
    assert config.cell_size == 50


def test_file_then_overrides(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("mode: mono\nseed: 3\nlc_min_inliers: 40\n")
    config = load_config(path, seed=11, profile=None)
    assert config.mode == Mode.MONO
    assert config.seed == 11
    assert config.lc_min_inliers == 40


def test_key_equals_file(tmp_path):
    path = tmp_path / "run.txt"
    path.write_text("# thresholds\nmode=mono\nfast_threshold = 25\nlc_min_inliers: 40\n")
    config = load_config(path)
    assert config.mode == Mode.MONO
    assert config.fast_threshold == 25
    assert config.lc_min_inliers == 40


def test_parse_flat_mapping():
    assert parse_flat_mapping("a=1\nb: x=y\nname=left=right\nratio = 0.5\n") == {
        'a': 1, 'b': 'x=y', 'name': 'left=right', 'ratio': 0.5,
    }
    assert parse_flat_mapping("") is None


def test_unknown_key_raises():
    with pytest.raises(ConfigError, match="unknown config key"):
        config_from_dict({'cel_size': 30})


@pytest.mark.parametrize("values", [
    {'kf_filter_ratio': 1.5},
    {'cell_size': 0},
    {'vocab_branching': 1},
    {'lc_p3p_min_inliers': 0},
    {'rt_mode': 'yes'},
    {'mode': 'trinocular'},
    {'pyramid_levels': 'four'},
])
def test_invalid_values_raise(values):
    with pytest.raises(ConfigError):
        config_from_dict(values)


def test_invalid_yaml_raises(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("mode: [stereo\n")
    with pytest.raises(ConfigError):
        load_config(path)
    path.write_text("- a list\n- not a mapping\n")
    with pytest.raises(ConfigError, match="mapping"):
        load_config(path)


def test_calibration_keys_are_collected():
    config = config_from_dict({**CALIBRATION, 't_rl': T_RL, 'seed': 4})
    assert set(config.calibration) == set(CALIBRATION) | {'t_rl'}
    camera = config.camera()
    assert camera.width == 752 and camera.height == 480
    assert camera.distortion_model == DistortionModel.RADTAN
    rig = config.stereo_rig()
    assert rig is not None
    assert rig.baseline == pytest.approx(0.11)
    # unset right intrinsics take the left values
    assert rig.right.fx == pytest.approx(458.654)
    assert rig.right.distortion_model == DistortionModel.RADTAN


def test_right_camera_intrinsics():
    config = config_from_dict({**CALIBRATION, 't_rl': T_RL, 'right_fx': 457.587, 'right_fy': 456.134,
                               'right_cx': 379.999, 'right_cy': 255.238})
    rig = config.stereo_rig()
    assert rig.right.fx == pytest.approx(457.587)
    assert rig.right.width == 752
    assert rig.right.distortion_model == DistortionModel.RADTAN
    assert rig.left.fx == pytest.approx(458.654)


def test_missing_t_rl_gives_no_rig():
    assert config_from_dict(CALIBRATION).stereo_rig() is None


def test_t_rl_needs_sixteen_numbers():
    config = config_from_dict({**CALIBRATION, 't_rl': T_RL[:12]})
    with pytest.raises(ConfigError, match="16"):
        config.stereo_rig()


def test_incomplete_calibration_raises():
    with pytest.raises(ConfigError, match="fx"):
        config_from_dict({'width': 640, 'height': 480}).camera()
    with pytest.raises(ConfigError, match="distortion model"):
        config_from_dict({**CALIBRATION, 'distortion_model': 'fancy'}).camera()


def test_t_rl_is_row_major():
    config = config_from_dict({**CALIBRATION, 't_rl': T_RL})
    assert np.allclose(config.stereo_rig().t_rl.translation, [-0.11, 0.0, 0.0])


@pytest.mark.parametrize("name, baseline, size", [
    ("euroc.yaml", 0.1101, (752, 480)),
    ("kitti.yaml", 0.5372, (1226, 370)),
])
def test_shipped_dataset_configs(name, baseline, size):
    config = load_config(CONFIG_DIR / name)
    rig = config.stereo_rig()
    assert rig.baseline == pytest.approx(baseline, abs=1e-4)
    assert (rig.left.width, rig.left.height) == size
    assert np.allclose(rig.t_rl.rotation @ rig.t_rl.rotation.T, np.eye(3), atol=1e-6)
