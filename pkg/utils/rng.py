import itertools
import threading

import cv2
import numpy as np


class SeedSequencer:
    """Derives one reproducible seed per RANSAC invocation from a global seed.

    Each component owns its own sequencer (keyed by `stream`) so that seeds do not
    depend on how worker threads interleave.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self._counter = itertools.count()
        self._lock = threading.Lock()

    def next_seed(self) -> int:
        with self._lock:
            n = next(self._counter)
        return int(np.random.SeedSequence([self.seed, self.stream, n]).generate_state(1)[0])

    def next_rng(self) -> np.random.Generator:
        return np.random.default_rng(self.next_seed())

    def seed_opencv(self) -> int:
        """Seed OpenCV's (thread-local) RNG before a RANSAC call and return the seed."""
        seed = self.next_seed()
        cv2.setRNGSeed(seed & 0x7FFFFFFF)
        return seed
