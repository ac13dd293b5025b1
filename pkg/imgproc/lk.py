"""Pyramidal inverse-compositional Lucas-Kanade tracking (translation only)."""
from typing import Tuple

import cv2
import numpy as np

from imgproc.pyramid import ImagePyramid

LK_WINDOW = 9
LK_MAX_ITERS = 30
LK_EPSILON = 0.01
LK_MIN_EIGEN = 1e-4
LK_BORDER = 4
BACKWARD_MAX_ERROR = 0.5


def lk_track(prev: ImagePyramid, cur: ImagePyramid, prev_pts: np.ndarray, initial_guess: np.ndarray,
             first_level: int, last_level: int = 0, border: float = LK_BORDER) -> Tuple[np.ndarray, np.ndarray]:
    """Track points from `prev` into `cur`, coarse to fine from `first_level` down to `last_level`.

    Args:
        prev: Pyramid the points were observed in
        cur: Pyramid to track into
        prev_pts: (N, 2) level-0 positions in prev
        initial_guess: (N, 2) level-0 guesses in cur
        first_level: Coarsest level used
        last_level: Finest level used
        border: Points closer than this to the border after tracking are lost

    Returns:
        (N, 2) tracked level-0 positions and the (N,) success mask.
    """
    prev_pts = np.atleast_2d(np.asarray(prev_pts, dtype=float))
    n = len(prev_pts)
    if n == 0:
        return np.zeros((0, 2)), np.zeros(0, dtype=bool)
    if first_level < last_level:
        raise ValueError("first_level must be >= last_level")

    scale = float(2 ** last_level)
    prev_img = prev.levels[last_level]
    cur_img = cur.levels[last_level]
    p0 = (prev_pts / scale).astype(np.float32).reshape(-1, 1, 2)
    p1 = (np.atleast_2d(initial_guess) / scale).astype(np.float32).reshape(-1, 1, 2)

    tracked, status, _ = cv2.calcOpticalFlowPyrLK(
        prev_img, cur_img, p0, p1.copy(),
        winSize=(LK_WINDOW, LK_WINDOW),
        maxLevel=int(first_level - last_level),
        criteria=(cv2.TERM_CRITERIA_COUNT | cv2.TERM_CRITERIA_EPS, LK_MAX_ITERS, LK_EPSILON),
        flags=cv2.OPTFLOW_USE_INITIAL_FLOW,
        minEigThreshold=LK_MIN_EIGEN,
    )
    tracked = tracked.reshape(-1, 2).astype(float) * scale
    ok = status.reshape(-1).astype(bool) & np.all(np.isfinite(tracked), axis=1)
    height, width = cur.levels[0].shape
    ok &= ((tracked[:, 0] >= border) & (tracked[:, 0] <= width - 1 - border)
           & (tracked[:, 1] >= border) & (tracked[:, 1] <= height - 1 - border))
    return tracked, ok


def backward_check(prev: ImagePyramid, cur: ImagePyramid, prev_pts: np.ndarray, cur_pts: np.ndarray,
                   max_error: float = BACKWARD_MAX_ERROR) -> np.ndarray:
    """Track cur -> prev on level 0 only and keep points returning within `max_error` px."""
    prev_pts = np.atleast_2d(prev_pts)
    if len(prev_pts) == 0:
        return np.zeros(0, dtype=bool)
    back, ok = lk_track(cur, prev, cur_pts, prev_pts, first_level=0, last_level=0, border=0.0)
    return ok & (np.linalg.norm(back - prev_pts, axis=1) <= max_error)
