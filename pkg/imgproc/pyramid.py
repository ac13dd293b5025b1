from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import cv2
import numpy as np

# 8-bit row-major intensity image, shape (height, width)
GrayImage = np.ndarray

PYRAMID_LEVELS = 4
PYRAMID_SCALE = 2
BRIEF_SMOOTHING = 7


def to_gray(image: np.ndarray) -> GrayImage:
    """Convert colour input to 8-bit luminance; gray input is passed through."""
    if image.ndim == 3:
        code = cv2.COLOR_BGRA2GRAY if image.shape[2] == 4 else cv2.COLOR_BGR2GRAY
        image = cv2.cvtColor(image, code)
    if image.dtype != np.uint8:
        image = np.clip(image, 0, 255).astype(np.uint8)
    return image


def clahe(image: GrayImage, clip_limit: float = 3.0, tile_grid: Tuple[int, int] = (8, 8)) -> GrayImage:
    """Contrast-limited adaptive histogram equalization.

    Falls back to global histogram equalization when the image is smaller than one
    tile per grid cell.
    """
    rows, cols = tile_grid
    if image.shape[0] < rows or image.shape[1] < cols:
        return cv2.equalizeHist(image)
    return cv2.createCLAHE(clipLimit=float(clip_limit), tileGridSize=(int(cols), int(rows))).apply(image)


def preprocess(image: np.ndarray, clip_limit: float = 3.0, tile_grid: Tuple[int, int] = (8, 8)) -> GrayImage:
    return clahe(to_gray(image), clip_limit, tile_grid)


@dataclass(eq=False)
class ImagePyramid:
    levels: List[GrayImage]
    scale_factor: int = PYRAMID_SCALE
    _smoothed: Optional[GrayImage] = field(default=None, repr=False)

    @classmethod
    def build(cls, image: GrayImage, num_levels: int = PYRAMID_LEVELS) -> 'ImagePyramid':
        """Build from an already pre-processed level-0 image (level L is ceil(size / 2^L))."""
        levels = [image]
        for _ in range(1, num_levels):
            levels.append(cv2.pyrDown(levels[-1]))
        return cls(levels)

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    @property
    def image(self) -> GrayImage:
        return self.levels[0]

    @property
    def width(self) -> int:
        return self.levels[0].shape[1]

    @property
    def height(self) -> int:
        return self.levels[0].shape[0]

    @property
    def smoothed(self) -> GrayImage:
        """Box-smoothed level 0, sampled by BRIEF."""
        if self._smoothed is None:
            self._smoothed = cv2.blur(self.levels[0], (BRIEF_SMOOTHING, BRIEF_SMOOTHING))
        return self._smoothed
