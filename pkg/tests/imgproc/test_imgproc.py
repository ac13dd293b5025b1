import cv2
import numpy as np
import pytest

from imgproc import (
    DetectorType, ImagePyramid, backward_check, brief_descriptors, clahe, compute_brief, detect_fast, detect_grid,
    hamming_distance, lk_track, match_descriptors, preprocess, to_gray,
)


def textured_image(width: int = 320, height: int = 240, seed: int = 0) -> np.ndarray:
    """Smooth multi-scale texture, usable by LK at every pyramid level."""
    gen = np.random.default_rng(seed)
    acc = np.zeros((height, width))
    for sigma, weight in [(2.0, 0.3), (6.0, 0.4), (12.0, 0.3)]:
        layer = cv2.GaussianBlur(gen.normal(size=(height, width)), (0, 0), sigma)
        acc += weight * layer / layer.std()
    acc = (acc - acc.min()) / (acc.max() - acc.min())
    return (30 + 195 * acc).astype(np.uint8)


def shifted(image: np.ndarray, dx: float, dy: float) -> np.ndarray:
    M = np.array([[1.0, 0.0, dx], [0.0, 1.0, dy]])
    return cv2.warpAffine(image, M, (image.shape[1], image.shape[0]), flags=cv2.INTER_LINEAR,
                          borderMode=cv2.BORDER_REFLECT)


@pytest.fixture
def texture():
    return textured_image()


def interior_points(n: int = 60, seed: int = 1) -> np.ndarray:
    gen = np.random.default_rng(seed)
    return np.column_stack([gen.uniform(60, 260, n), gen.uniform(60, 180, n)])


# --- pre-processing ----------------------------------------------------------------

def test_clahe_constant_image():
    out = clahe(np.full((64, 64), 90, dtype=np.uint8))
    assert out.std() == 0.0


def test_clahe_widens_low_contrast_ramp():
    ramp = np.tile(np.linspace(100, 120, 128).astype(np.uint8), (128, 1))
    out = clahe(ramp)
    assert int(out.max()) - int(out.min()) > int(ramp.max()) - int(ramp.min())


def test_clahe_small_image_falls_back_to_global_equalization():
    tiny = np.arange(16, dtype=np.uint8).reshape(4, 4) * 4
    assert np.array_equal(clahe(tiny), cv2.equalizeHist(tiny))


def test_preprocess_converts_color():
    color = np.zeros((32, 32, 3), dtype=np.uint8)
    color[..., 1] = 200
    gray = to_gray(color)
    assert gray.ndim == 2
    assert preprocess(color).shape == (32, 32)


def test_pyramid_level_sizes():
    pyramid = ImagePyramid.build(np.zeros((481, 641), dtype=np.uint8), num_levels=4)
    assert pyramid.num_levels == 4
    for level, image in enumerate(pyramid.levels):
        assert image.shape == (int(np.ceil(481 / 2 ** level)), int(np.ceil(641 / 2 ** level)))


# --- detection ---------------------------------------------------------------------

def corner_image() -> np.ndarray:
    image = np.full((200, 200), 40, dtype=np.uint8)
    image[80:, 100:] = 220
    return cv2.GaussianBlur(image, (0, 0), 1.0)


def test_detect_grid_blank_image():
    assert detect_grid(np.full((140, 140), 128, dtype=np.uint8), 35) == []


def test_detect_grid_single_corner():
    corners = detect_grid(corner_image(), 35)
    assert len(corners) == 1
    assert np.linalg.norm(corners[0].px - np.array([99.5, 79.5])) < 0.5


def test_detect_grid_skips_occupied_cells():
    assert detect_grid(corner_image(), 35, occupied=[np.array([90.0, 75.0])]) == []


def test_detect_grid_is_deterministic(texture):
    a = detect_grid(texture, 35)
    b = detect_grid(texture, 35)
    assert len(a) > 10
    assert np.array_equal(np.array([c.px for c in a]), np.array([c.px for c in b]))


def test_detect_grid_fast_detector(texture):
    noisy = cv2.add(texture, np.random.default_rng(5).integers(0, 60, texture.shape, dtype=np.uint8))
    corners = detect_grid(noisy, 50, detector=DetectorType.FAST, fast_threshold=20)
    assert 0 < len(corners) <= int(np.ceil(320 / 50) * np.ceil(240 / 50))


def test_detect_fast_best_n():
    gen = np.random.default_rng(2)
    image = gen.integers(0, 255, (200, 200), dtype=np.uint8)
    corners = detect_fast(image, 20, max_features=50)
    assert len(corners) == 50
    scores = [c.score for c in corners]
    assert scores == sorted(scores, reverse=True)
    assert all(16 <= c.px[0] < 184 and 16 <= c.px[1] < 184 for c in corners)


# --- BRIEF -------------------------------------------------------------------------

def test_brief_same_pixel_twice(texture):
    pyramid = ImagePyramid.build(texture)
    a = compute_brief(pyramid, np.array([100.0, 100.0]))
    b = compute_brief(pyramid, np.array([100.0, 100.0]))
    assert a.shape == (32,)
    assert hamming_distance(a, b) == 0


def test_brief_brightness_offset_invariance(texture):
    points = interior_points()
    a = brief_descriptors(ImagePyramid.build(texture).smoothed, points)
    b = brief_descriptors(ImagePyramid.build(texture + np.uint8(20)).smoothed, points)
    assert np.array_equal(a, b)


def test_brief_random_patches_are_half_different():
    gen = np.random.default_rng(4)
    img_a = gen.integers(0, 256, (400, 400), dtype=np.uint8)
    img_b = gen.integers(0, 256, (400, 400), dtype=np.uint8)
    points = np.column_stack([gen.uniform(20, 380, 1000), gen.uniform(20, 380, 1000)])
    da = brief_descriptors(cv2.blur(img_a, (7, 7)), points)
    db = brief_descriptors(cv2.blur(img_b, (7, 7)), points)
    assert abs(hamming_distance(da, db).mean() - 128.0) < 10.0


def test_hamming_broadcasts():
    gen = np.random.default_rng(0)
    descs = gen.integers(0, 256, (5, 32), dtype=np.uint8)
    dist = hamming_distance(descs[:, None, :], descs[None, :, :])
    assert dist.shape == (5, 5)
    assert np.all(np.diag(dist) == 0)
    assert np.array_equal(dist, dist.T)


def test_match_descriptors_ratio_and_uniqueness():
    gen = np.random.default_rng(1)
    train = gen.integers(0, 256, (20, 32), dtype=np.uint8)
    query = train[[3, 7, 11]].copy()
    query[0, 0] ^= 0x01
    assert match_descriptors(query, train) == [(0, 3), (1, 7), (2, 11)]
    # a duplicated train descriptor fails the ratio test
    ambiguous = np.vstack([train, train[7:8]])
    assert (1, 7) not in match_descriptors(query, ambiguous)
    assert match_descriptors(query[:0], train) == []


# --- Lucas-Kanade ------------------------------------------------------------------

def test_lk_identity(texture):
    pyramid = ImagePyramid.build(texture)
    points = interior_points()
    tracked, ok = lk_track(pyramid, pyramid, points, points, first_level=3)
    assert ok.all()
    assert np.max(np.abs(tracked - points)) < 0.01


def test_lk_subpixel_shift(texture):
    prev = ImagePyramid.build(texture)
    cur = ImagePyramid.build(shifted(texture, 3.25, -1.5))
    points = interior_points()
    tracked, ok = lk_track(prev, cur, points, points, first_level=3)
    err = np.linalg.norm(tracked - (points + np.array([3.25, -1.5])), axis=1)
    assert ok.mean() > 0.9
    assert np.median(err[ok]) < 0.1


def test_lk_uniform_image_is_lost():
    gray = ImagePyramid.build(np.full((240, 320), 128, dtype=np.uint8))
    points = interior_points(10)
    _, ok = lk_track(gray, gray, points, points, first_level=3)
    assert not ok.any()


def test_lk_large_shift_needs_pyramid(texture):
    prev = ImagePyramid.build(texture)
    cur = ImagePyramid.build(shifted(texture, 16.0, 0.0))
    points = interior_points()
    truth = points + np.array([16.0, 0.0])
    tracked4, ok4 = lk_track(prev, cur, points, points, first_level=3)
    tracked1, ok1 = lk_track(prev, cur, points, points, first_level=0)
    good4 = ok4 & (np.linalg.norm(tracked4 - truth, axis=1) < 0.5)
    good1 = ok1 & (np.linalg.norm(tracked1 - truth, axis=1) < 0.5)
    assert good4.mean() > 0.8
    assert good1.mean() < 0.5


def test_backward_check(texture):
    prev = ImagePyramid.build(texture)
    cur = ImagePyramid.build(shifted(texture, 2.0, 1.0))
    points = interior_points()
    tracked, ok = lk_track(prev, cur, points, points, first_level=3)
    consistent = backward_check(prev, cur, points[ok], tracked[ok])
    assert consistent.mean() > 0.9
    # a point moved off its track fails the check
    wrong = tracked[ok] + np.array([3.0, 0.0])
    assert backward_check(prev, cur, points[ok], wrong).mean() < 0.5


def test_lk_rejects_inverted_levels(texture):
    pyramid = ImagePyramid.build(texture)
    with pytest.raises(ValueError):
        lk_track(pyramid, pyramid, interior_points(2), interior_points(2), first_level=0, last_level=2)
