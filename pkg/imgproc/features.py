"""Grid-based corner detection (Shi-Tomasi or FAST) with subpixel refinement."""
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Optional

import cv2
import numpy as np

from imgproc.pyramid import GrayImage

SUBPIX_WINDOW = (2, 2)  # half sizes -> 5x5 window
SUBPIX_CRITERIA = (cv2.TERM_CRITERIA_EPS | cv2.TERM_CRITERIA_COUNT, 10, 0.01)


class DetectorType(Enum):
    SHI_TOMASI = "shi_tomasi"
    FAST = "fast"


@dataclass
class Corner:
    px: np.ndarray
    score: float


def _refine_subpixel(image: GrayImage, positions: np.ndarray) -> np.ndarray:
    if len(positions) == 0:
        return positions
    pts = positions.astype(np.float32).reshape(-1, 1, 2)
    refined = cv2.cornerSubPix(image, pts, SUBPIX_WINDOW, (-1, -1), SUBPIX_CRITERIA)
    refined = refined.reshape(-1, 2).astype(float)
    # refinement drifting more than a window away means there was no stable corner
    drift = np.linalg.norm(refined - positions, axis=1)
    return np.where((drift <= 2.0)[:, None], refined, positions)


def shi_tomasi_response(image: GrayImage) -> np.ndarray:
    return cv2.cornerMinEigenVal(image, blockSize=3, ksize=3)


def fast_response(image: GrayImage, threshold: int) -> np.ndarray:
    """Dense FAST score map: zero everywhere except at non-max-suppressed FAST corners."""
    detector = cv2.FastFeatureDetector_create(threshold=int(threshold), nonmaxSuppression=True)
    response = np.zeros(image.shape, dtype=np.float32)
    for kp in detector.detect(image):
        x, y = int(round(kp.pt[0])), int(round(kp.pt[1]))
        response[y, x] = max(response[y, x], kp.response)
    return response


def detect_grid(image: GrayImage, cell_size: int, occupied: Iterable[np.ndarray] = (),
                detector: DetectorType = DetectorType.SHI_TOMASI, quality_level: float = 0.01,
                fast_threshold: int = 20, border: int = 4) -> List[Corner]:
    """Detect at most one corner per grid cell that holds no occupied position.

    Args:
        image: Pre-processed level-0 image
        cell_size: Grid cell size in pixels
        occupied: Positions (pixels) of keypoints already tracked
        detector: Shi-Tomasi min-eigenvalue or FAST scoring
        quality_level: Shi-Tomasi floor relative to the image maximum
        fast_threshold: FAST intensity threshold
        border: Pixels ignored along the image border

    Returns:
        Corners in row-major cell order.
    """
    height, width = image.shape
    if detector == DetectorType.FAST:
        response = fast_response(image, fast_threshold)
        floor = 0.0
    else:
        response = shi_tomasi_response(image)
        floor = quality_level * float(response.max(initial=0.0))
    if border > 0:
        response[:border, :] = 0.0
        response[-border:, :] = 0.0
        response[:, :border] = 0.0
        response[:, -border:] = 0.0

    n_cols = int(np.ceil(width / cell_size))
    n_rows = int(np.ceil(height / cell_size))
    taken = np.zeros((n_rows, n_cols), dtype=bool)
    for px in occupied:
        col, row = int(px[0] // cell_size), int(px[1] // cell_size)
        if 0 <= row < n_rows and 0 <= col < n_cols:
            taken[row, col] = True

    positions, scores = [], []
    for row in range(n_rows):
        for col in range(n_cols):
            if taken[row, col]:
                continue
            y0, x0 = row * cell_size, col * cell_size
            cell = response[y0:y0 + cell_size, x0:x0 + cell_size]
            # argmax returns the first maximum in row-major order, so ties resolve deterministically
            idx = int(np.argmax(cell))
            score = float(cell.flat[idx])
            if score <= 0.0 or score < floor:
                continue
            dy, dx = divmod(idx, cell.shape[1])
            positions.append((x0 + dx, y0 + dy))
            scores.append(score)

    if not positions:
        return []
    refined = _refine_subpixel(image, np.array(positions, dtype=float))
    return [Corner(px=p, score=s) for p, s in zip(refined, scores)]


def detect_fast(image: GrayImage, threshold: int = 20, max_features: Optional[int] = None,
                border: int = 16) -> List[Corner]:
    """Whole-image FAST corners, best `max_features` by response (ties by x then y)."""
    detector = cv2.FastFeatureDetector_create(threshold=int(threshold), nonmaxSuppression=True)
    height, width = image.shape
    corners = [
        Corner(px=np.array(kp.pt, dtype=float), score=float(kp.response))
        for kp in detector.detect(image)
        if border <= kp.pt[0] < width - border and border <= kp.pt[1] < height - border
    ]
    corners.sort(key=lambda c: (-c.score, c.px[0], c.px[1]))
    if max_features is not None:
        corners = corners[:max_features]
    return corners
