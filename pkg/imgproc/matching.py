from typing import List, Tuple

import cv2
import numpy as np


def match_descriptors(query: np.ndarray, train: np.ndarray, ratio: float = 0.8,
                      max_distance: int = 256) -> List[Tuple[int, int]]:
    """Brute-force Hamming k-NN matching filtered by the ratio test.

    Args:
        query: (N, 32) uint8 descriptors
        train: (M, 32) uint8 descriptors
        ratio: Best / second-best distance bound
        max_distance: Absolute bound on the best distance

    Returns:
        (query index, train index) pairs, each train index used at most once.
    """
    if len(query) == 0 or len(train) == 0:
        return []
    matcher = cv2.BFMatcher(cv2.NORM_HAMMING, crossCheck=False)
    knn = matcher.knnMatch(np.ascontiguousarray(query, dtype=np.uint8),
                           np.ascontiguousarray(train, dtype=np.uint8), k=2)
    best = {}
    for pair in knn:
        if not pair:
            continue
        m = pair[0]
        if m.distance > max_distance:
            continue
        if len(pair) > 1 and m.distance >= ratio * pair[1].distance:
            continue
        # one query per train descriptor: keep the closest, ties by query index
        kept = best.get(m.trainIdx)
        if kept is None or (m.distance, m.queryIdx) < kept:
            best[m.trainIdx] = (m.distance, m.queryIdx)
    return sorted((q, t) for t, (_, q) in best.items())
