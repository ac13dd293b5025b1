"""256-bit BRIEF descriptors on a box-smoothed image, and Hamming distances."""
import numpy as np

from imgproc.pyramid import GrayImage, ImagePyramid

DESCRIPTOR_BITS = 256
DESCRIPTOR_BYTES = DESCRIPTOR_BITS // 8
PATCH_SIZE = 31
HALF_PATCH = PATCH_SIZE // 2
PATTERN_SEED = 0x0B12EF


def _make_pattern() -> np.ndarray:
    # isotropic Gaussian sampling (sigma^2 = S^2 / 25), clipped to the 31x31 patch
    rng = np.random.default_rng(PATTERN_SEED)
    pattern = np.rint(rng.normal(0.0, PATCH_SIZE / 5.0, size=(DESCRIPTOR_BITS, 4)))
    pattern = np.clip(pattern, -HALF_PATCH, HALF_PATCH).astype(np.int32)
    # a test comparing a pixel with itself carries no information
    same = np.all(pattern[:, :2] == pattern[:, 2:], axis=1)
    pattern[same, 2] = np.where(pattern[same, 0] < HALF_PATCH, pattern[same, 0] + 1, pattern[same, 0] - 1)
    pattern.setflags(write=False)
    return pattern


# columns: (x1, y1, x2, y2) offsets from the keypoint
BRIEF_PATTERN = _make_pattern()


def brief_descriptors(smoothed: GrayImage, points: np.ndarray) -> np.ndarray:
    """Descriptors (N, 32) uint8 for keypoints (N, 2), sampling clamped to the image."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if len(points) == 0:
        return np.zeros((0, DESCRIPTOR_BYTES), dtype=np.uint8)
    height, width = smoothed.shape
    centers = np.rint(points).astype(np.int64)
    x1 = np.clip(centers[:, 0:1] + BRIEF_PATTERN[None, :, 0], 0, width - 1)
    y1 = np.clip(centers[:, 1:2] + BRIEF_PATTERN[None, :, 1], 0, height - 1)
    x2 = np.clip(centers[:, 0:1] + BRIEF_PATTERN[None, :, 2], 0, width - 1)
    y2 = np.clip(centers[:, 1:2] + BRIEF_PATTERN[None, :, 3], 0, height - 1)
    bits = smoothed[y1, x1] < smoothed[y2, x2]
    return np.packbits(bits, axis=1)


def compute_brief(pyramid: ImagePyramid, keypoint: np.ndarray) -> np.ndarray:
    """Descriptor (32,) uint8 of one keypoint on the pyramid's smoothed level 0."""
    return brief_descriptors(pyramid.smoothed, np.reshape(keypoint, (1, 2)))[0]


def hamming_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Bit distance between packed descriptors; broadcasts over leading axes."""
    return np.unpackbits(np.bitwise_xor(a, b), axis=-1).sum(axis=-1)
