"""Two-stage keypoint tracking between consecutive frames."""
import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from frontend.frame import Frame, Keypoint
from geometry import CameraModel, Se3Pose
from imgproc import ImagePyramid, backward_check, lk_track
from mapping.map import MapSnapshot

logger = logging.getLogger(__name__)

GUIDED_FIRST_LEVEL = 1
BACKWARD_MAX_ERROR = 0.5


@dataclass
class TrackingResult:
    keypoints: Dict[int, Keypoint]
    stage1_ratio: float
    stage1_attempts: int = 0
    stage1_survivors: int = 0


def refresh_map_links(keypoints: Dict[int, Keypoint], snapshot: MapSnapshot) -> None:
    """Point each keypoint at its current map point according to the snapshot."""
    for kp in keypoints.values():
        kp.map_point_id = snapshot.resolve(kp.id)


def _track_and_check(prev: Frame, cur: ImagePyramid, kps: List[Keypoint], guesses: np.ndarray,
                     first_level: int, max_backward_error: float) -> Tuple[np.ndarray, np.ndarray]:
    prev_pts = np.array([kp.raw_px for kp in kps])
    tracked, ok = lk_track(prev.pyramid, cur, prev_pts, guesses, first_level=first_level, last_level=0)
    if ok.any():
        idx = np.flatnonzero(ok)
        ok[idx] = backward_check(prev.pyramid, cur, prev_pts[idx], tracked[idx], max_backward_error)
    return tracked, ok


def track_frame(prev: Frame, cur_pyramid: ImagePyramid, predicted_pose_wc: Se3Pose, snapshot: MapSnapshot,
                camera: CameraModel, max_backward_error: float = BACKWARD_MAX_ERROR) -> TrackingResult:
    """Track the previous frame's keypoints into the current image.

    3D keypoints are first tracked on the two finest levels from their projection under the
    predicted pose. Whatever fails, plus every 2D keypoint, is then tracked on the full
    pyramid from its previous position. Survivors of both stages pass the level-0
    backward check.

    Args:
        prev: Previous frame
        cur_pyramid: Pyramid of the current image
        predicted_pose_wc: Motion-model prediction of the current pose
        snapshot: Map view providing point positions
        camera: Left camera
        max_backward_error: Backward-tracking tolerance in pixels

    Returns:
        TrackingResult with the tracked keypoints (ids are a subset of prev's) and the
        stage-1 success ratio (1.0 when there was nothing to try).
    """
    pose_cw = predicted_pose_wc.inverse()
    guided: List[Keypoint] = []
    guesses = []
    unguided: List[Keypoint] = []
    for kp in prev.keypoints.values():
        mp_id = snapshot.resolve(kp.id)
        if mp_id is not None:
            px = camera.project(pose_cw, snapshot.positions[mp_id])
            if px is not None and camera.in_image(px)[0]:
                raw = camera.distort(px)
                if camera.in_image(raw)[0]:
                    guided.append(kp)
                    guesses.append(raw)
                    continue
        unguided.append(kp)

    result: Dict[int, Keypoint] = {}
    survivors = 0
    if guided:
        tracked, ok = _track_and_check(prev, cur_pyramid, guided, np.array(guesses),
                                       GUIDED_FIRST_LEVEL, max_backward_error)
        for kp, px, good in zip(guided, tracked, ok):
            if good:
                result[kp.id] = kp.moved_to(px, camera)
                survivors += 1
            else:
                unguided.append(kp)

    if unguided:
        prev_pts = np.array([kp.raw_px for kp in unguided])
        tracked, ok = _track_and_check(prev, cur_pyramid, unguided, prev_pts,
                                       cur_pyramid.num_levels - 1, max_backward_error)
        for kp, px, good in zip(unguided, tracked, ok):
            if good:
                result[kp.id] = kp.moved_to(px, camera)

    refresh_map_links(result, snapshot)
    ratio = survivors / len(guided) if guided else 1.0
    logger.debug("tracked %d/%d keypoints, stage-1 %d/%d", len(result), len(prev.keypoints),
                 survivors, len(guided))
    return TrackingResult(keypoints=result, stage1_ratio=ratio,
                          stage1_attempts=len(guided), stage1_survivors=survivors)
