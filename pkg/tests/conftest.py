import pytest
import os
import sys

import numpy as np

# Add the project root directory to the Python path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from geometry import CameraModel, DistortionModel, Se3Pose, StereoRig  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "dataset: needs a downloaded EuRoC/KITTI sequence")
    config.addinivalue_line("markers", "slow: long end-to-end run")


def random_pose(rng: np.random.Generator, rot_scale: float = 0.3, trans_scale: float = 0.5) -> Se3Pose:
    return Se3Pose.exp(np.concatenate([rng.normal(0.0, trans_scale, 3), rng.normal(0.0, rot_scale, 3)]))


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture
def make_pose():
    return random_pose


@pytest.fixture
def camera():
    return CameraModel(fx=450.0, fy=450.0, cx=319.5, cy=239.5, width=640, height=480)


@pytest.fixture
def radtan_camera():
    return CameraModel(fx=458.654, fy=457.296, cx=367.215, cy=248.375, width=752, height=480,
                       distortion_model=DistortionModel.RADTAN,
                       distortion=(-0.28340811, 0.07395907, 0.00019359, 1.76187114e-05))


@pytest.fixture
def fisheye_camera():
    return CameraModel(fx=190.98, fy=190.98, cx=254.93, cy=256.90, width=512, height=512,
                       distortion_model=DistortionModel.FISHEYE,
                       distortion=(0.0034823894, 0.0007150348, -0.0020532361, 0.0002029367))


@pytest.fixture
def rig(camera):
    return StereoRig(left=camera, right=camera, t_rl=Se3Pose(np.array([0.0, 0.0, 0.0, 1.0]),
                                                             np.array([-0.12, 0.0, 0.0])))


@pytest.fixture
def scene_points():
    """Points spread 4 to 8 m in front of the origin."""
    def make(n: int, seed: int = 0) -> np.ndarray:
        gen = np.random.default_rng(seed)
        return np.column_stack([gen.uniform(-3.0, 3.0, n), gen.uniform(-2.0, 2.0, n), gen.uniform(4.0, 8.0, n)])
    return make
