"""Left-to-right keypoint matching on an unrectified calibrated rig."""
import logging
from collections import defaultdict
from typing import TYPE_CHECKING, Dict, List, Optional, Tuple

import numpy as np

from geometry import StereoRig, epipolar_distance
from imgproc import backward_check, lk_track
from mapping.map import Keyframe, MapSnapshot

if TYPE_CHECKING:
    from frontend.frame import Keypoint

logger = logging.getLogger(__name__)

StereoMatch = Tuple[np.ndarray, np.ndarray]  # (right raw px, right undistorted px)


def _cell(px: np.ndarray, cell_size: int) -> Tuple[int, int]:
    return int(px[0] // cell_size), int(px[1] // cell_size)


def _right_raw_of_left_point(point_l: np.ndarray, rig: StereoRig) -> Optional[np.ndarray]:
    px, valid = rig.right.project_camera(rig.t_rl.act(point_l)[None, :])
    if not valid[0]:
        return None
    return rig.right.distort(px[0])


def stereo_guess(kp: 'Keypoint', kf: Keyframe, rig: StereoRig, snapshot: MapSnapshot,
                 depths_by_cell: Dict[Tuple[int, int], List[float]], cell_size: int,
                 min_neighbors: int = 3) -> np.ndarray:
    """Initial right-image position for a left keypoint.

    3D keypoints are projected through the rig. 2D keypoints borrow the median depth of the
    3D keypoints in the surrounding 3x3 cells when at least `min_neighbors` exist; otherwise
    the left pixel is used.
    """
    mp_id = snapshot.resolve(kp.id)
    if mp_id is not None:
        guess = _right_raw_of_left_point(kf.pose_cw.act(snapshot.positions[mp_id]), rig)
        if guess is not None:
            return guess
    col, row = _cell(kp.raw_px, cell_size)
    depths = [d for dc in (-1, 0, 1) for dr in (-1, 0, 1) for d in depths_by_cell.get((col + dc, row + dr), ())]
    if len(depths) >= min_neighbors:
        point_l = rig.left.unproject(kp.undist_px) * float(np.median(depths))
        guess = _right_raw_of_left_point(point_l, rig)
        if guess is not None:
            return guess
    return kp.raw_px.copy()


def stereo_match(kf: Keyframe, rig: StereoRig, snapshot: MapSnapshot, cell_size: int,
                 max_epipolar_px: float = 2.0, min_neighbors: int = 3,
                 max_backward_error: float = 0.5) -> Dict[int, StereoMatch]:
    """Track every left keypoint of `kf` into its right image.

    Matched keypoints get their right-view fields set; unmatched ones stay monocular.

    Returns:
        Keypoint id -> (right raw px, right undistorted px) for surviving matches.
    """
    if kf.right_pyramid is None or not kf.keypoints:
        return {}
    pose_cw = kf.pose_cw
    depths_by_cell: Dict[Tuple[int, int], List[float]] = defaultdict(list)
    for kp in kf.keypoints.values():
        mp_id = snapshot.resolve(kp.id)
        if mp_id is not None:
            z = pose_cw.act(snapshot.positions[mp_id])[2]
            if z > 0.0:
                depths_by_cell[_cell(kp.raw_px, cell_size)].append(float(z))

    kps = list(kf.keypoints.values())
    left = np.array([kp.raw_px for kp in kps])
    guesses = np.array([stereo_guess(kp, kf, rig, snapshot, depths_by_cell, cell_size, min_neighbors) for kp in kps])
    tracked, ok = lk_track(kf.pyramid, kf.right_pyramid, left, guesses,
                           first_level=kf.right_pyramid.num_levels - 1, last_level=0)
    if ok.any():
        idx = np.flatnonzero(ok)
        ok[idx] = backward_check(kf.pyramid, kf.right_pyramid, left[idx], tracked[idx], max_backward_error)
    if not ok.any():
        return {}

    idx = np.flatnonzero(ok)
    right_undist = rig.right.undistort(tracked[idx])
    bearings_l = rig.left.unproject_many([kps[i].undist_px for i in idx])
    bearings_r = rig.right.unproject_many(right_undist)
    dist = epipolar_distance(rig.essential(), bearings_l, bearings_r, rig.left)

    matches: Dict[int, StereoMatch] = {}
    for i, r_undist, d in zip(idx, right_undist, dist):
        if d > max_epipolar_px:
            continue
        kp = kps[i]
        kp.right_raw_px = tracked[i].copy()
        kp.right_undist_px = r_undist
        matches[kp.id] = (kp.right_raw_px, r_undist)
    logger.debug("keyframe %d: %d/%d stereo matches", kf.id, len(matches), len(kps))
    return matches
