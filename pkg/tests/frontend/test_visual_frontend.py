import numpy as np
import pytest

from frontend import Frame, VisualFrontend
from geometry import Se3Pose
from imgproc import ImagePyramid
from mapping import SlamMap
from pipeline import config_from_dict

START = Se3Pose.exp(np.array([0.2, 0.0, 1.0, 0.0, 0.1, 0.0]))
FIRST = Se3Pose.exp(np.array([1.0, 0.0, 0.0, 0.0, 0.0, 0.5]))
SECOND = Se3Pose.exp(np.array([0.0, 2.0, 0.0, 0.1, 0.0, 0.0]))


@pytest.fixture
def frontend(camera):
    fe = VisualFrontend(config_from_dict({}), camera, SlamMap(camera))
    blank = np.zeros((camera.height, camera.width), dtype=np.uint8)
    fe.prev = Frame(0, 0.0, ImagePyramid.build(blank), pose_wc=START)
    fe.motion.update(START, 0.0)
    return fe


def assert_pose(pose: Se3Pose, expected: Se3Pose):
    assert np.allclose(pose.matrix(), expected.matrix(), atol=1e-9)


def test_corrections_published_together_are_all_applied(frontend):
    frontend.map.record_correction(FIRST)
    frontend.map.publish_snapshot()
    frontend.map.record_correction(SECOND)
    frontend.map.publish_snapshot()
    frontend._apply_map_correction()
    expected = SECOND.compose(FIRST).compose(START)
    assert_pose(frontend.prev.pose_wc, expected)
    assert_pose(frontend.motion.prev_pose_wc, expected)


def test_each_correction_is_applied_once(frontend):
    frontend.map.record_correction(FIRST)
    frontend.map.publish_snapshot()
    frontend._apply_map_correction()
    assert_pose(frontend.prev.pose_wc, FIRST.compose(START))
    frontend.map.record_correction(SECOND)
    frontend.map.publish_snapshot()
    frontend._apply_map_correction()
    frontend._apply_map_correction()
    assert_pose(frontend.prev.pose_wc, SECOND.compose(FIRST).compose(START))
