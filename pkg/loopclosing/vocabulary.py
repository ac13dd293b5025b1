"""Incrementally grown vocabulary tree over binary descriptors with a tf-idf inverted index."""
import itertools
import logging
import math
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Optional, Set, Tuple

import numpy as np

from imgproc import hamming_distance

logger = logging.getLogger(__name__)

Signature = Dict[int, float]

MEDIAN_ITERS = 10
ISLAND_RADIUS = 3


@dataclass
class VocabularyNode:
    id: int
    center: Optional[np.ndarray] = None
    children: List['VocabularyNode'] = field(default_factory=list)
    # leaf payload: (keyframe id, descriptor)
    entries: List[Tuple[int, np.ndarray]] = field(default_factory=list)
    splittable: bool = True

    @property
    def is_leaf(self) -> bool:
        return not self.children


def binary_median(descriptors: np.ndarray) -> np.ndarray:
    """Bitwise majority of packed descriptors (ties resolve to 0)."""
    bits = np.unpackbits(descriptors, axis=1)
    return np.packbits((2 * bits.sum(axis=0) > len(bits)).astype(np.uint8))


def k_medians(descriptors: np.ndarray, k: int, rng: np.random.Generator,
              iters: int = MEDIAN_ITERS) -> Tuple[np.ndarray, np.ndarray]:
    """Hamming k-medians. Returns (centers, labels); empty clusters are dropped."""
    unique = np.unique(descriptors, axis=0)
    k = min(k, len(unique))
    centers = unique[np.sort(rng.choice(len(unique), size=k, replace=False))]
    labels = np.zeros(len(descriptors), dtype=int)
    for _ in range(iters):
        dist = hamming_distance(descriptors[:, None, :], centers[None, :, :])
        new_labels = np.argmin(dist, axis=1)
        used = np.unique(new_labels)
        new_centers = np.array([binary_median(descriptors[new_labels == c]) for c in used])
        new_labels = np.searchsorted(used, new_labels)
        converged = len(new_centers) == len(centers) and np.array_equal(new_labels, labels) \
            and np.array_equal(new_centers, centers)
        centers, labels = new_centers, new_labels
        if converged:
            break
    # labels must agree with a descent through the final centers
    labels = np.argmin(hamming_distance(descriptors[:, None, :], centers[None, :, :]), axis=1)
    used = np.unique(labels)
    return centers[used], np.searchsorted(used, labels)


class VocabularyTree:
    """Hierarchical clustering of binary descriptors grown while keyframes are indexed.

    Leaves are words. A leaf holding more than `leaf_size` descriptors is split into at
    most `branching` children by seeded k-medians; the keyframes referencing the split leaf
    are re-indexed so that the inverted index always matches a fresh descent of every
    descriptor inserted so far.
    """

    def __init__(self, branching: int = 10, leaf_size: int = 150, seed: int = 0):
        if branching < 2:
            raise ValueError("branching must be at least 2")
        self.branching = branching
        self.leaf_size = leaf_size
        self.seed = seed
        self._ids = itertools.count()
        self.root = VocabularyNode(id=next(self._ids))
        self.leaves: Dict[int, VocabularyNode] = {self.root.id: self.root}
        self.inverted_index: Dict[int, Dict[int, int]] = {}
        self.kf_words: Dict[int, Counter] = {}
        self.order: List[int] = []
        self._consistency_history: Deque[Set[int]] = deque()

    # --- tree -----------------------------------------------------------------------

    def _descend(self, descriptor: np.ndarray) -> VocabularyNode:
        node = self.root
        while not node.is_leaf:
            centers = np.array([c.center for c in node.children])
            node = node.children[int(np.argmin(hamming_distance(centers, descriptor)))]
        return node

    def word_of(self, descriptor: np.ndarray) -> int:
        return self._descend(np.asarray(descriptor, dtype=np.uint8)).id

    def _count(self, kf_id: int, word: int, delta: int) -> None:
        words = self.kf_words[kf_id]
        words[word] += delta
        posting = self.inverted_index.setdefault(word, {})
        if words[word] <= 0:
            del words[word]
            posting.pop(kf_id, None)
            if not posting:
                del self.inverted_index[word]
        else:
            posting[kf_id] = words[word]

    def _split(self, leaf: VocabularyNode) -> None:
        descriptors = np.array([d for _, d in leaf.entries])
        rng = np.random.default_rng([self.seed, leaf.id])
        centers, labels = k_medians(descriptors, self.branching, rng)
        if len(centers) < 2:
            leaf.splittable = False
            return
        children = [VocabularyNode(id=next(self._ids), center=c) for c in centers]
        for (kf_id, desc), label in zip(leaf.entries, labels):
            child = children[label]
            child.entries.append((kf_id, desc))
            self._count(kf_id, leaf.id, -1)
            self._count(kf_id, child.id, +1)
        leaf.entries = []
        leaf.children = children
        del self.leaves[leaf.id]
        for child in children:
            self.leaves[child.id] = child
        for child in children:
            if len(child.entries) > self.leaf_size and child.splittable:
                self._split(child)

    def insert(self, kf_id: int, descriptors: np.ndarray) -> None:
        """Index a keyframe's descriptors, splitting overfull leaves."""
        if kf_id in self.kf_words:
            raise ValueError(f"keyframe {kf_id} already indexed")
        self.kf_words[kf_id] = Counter()
        self.order.append(kf_id)
        overfull = []
        for desc in np.asarray(descriptors, dtype=np.uint8).reshape(-1, 32):
            leaf = self._descend(desc)
            leaf.entries.append((kf_id, desc.copy()))
            self._count(kf_id, leaf.id, +1)
            if len(leaf.entries) > self.leaf_size and leaf.splittable:
                overfull.append(leaf)
        for leaf in overfull:
            if leaf.is_leaf and len(leaf.entries) > self.leaf_size:
                self._split(leaf)

    # --- scoring --------------------------------------------------------------------

    @property
    def num_documents(self) -> int:
        return len(self.kf_words)

    def doc_count(self, word: int) -> int:
        return len(self.inverted_index.get(word, ()))

    def idf(self, word: int) -> float:
        df = self.doc_count(word)
        return math.log(self.num_documents / df) if df else 0.0

    def signature(self, kf_id: int) -> Signature:
        """tf-idf weights, L1-normalized; words present in every keyframe weigh zero."""
        words = self.kf_words[kf_id]
        total = sum(words.values())
        if total == 0:
            return {}
        raw = {w: (c / total) * self.idf(w) for w, c in words.items()}
        norm = sum(raw.values())
        if norm <= 0.0:
            return {}
        return {w: v / norm for w, v in raw.items() if v > 0.0}

    @staticmethod
    def similarity(a: Signature, b: Signature) -> float:
        """1 - 0.5 * L1 distance of two normalized signatures, in [0, 1]."""
        if not a or not b:
            return 0.0
        l1 = sum(abs(a.get(w, 0.0) - b.get(w, 0.0)) for w in set(a) | set(b))
        return 1.0 - 0.5 * l1

    def query(self, kf_id: int, temporal_window: int = 0) -> List[Tuple[int, float]]:
        """Indexed keyframes ranked by similarity to `kf_id`, masking the latest `temporal_window`.

        The query keyframe itself is only masked when the window is positive.
        """
        pos = self.order.index(kf_id)
        masked = set(self.order[max(0, pos - temporal_window):pos + 1]) if temporal_window > 0 else set()
        sig = self.signature(kf_id)
        candidates: Set[int] = set()
        for word in sig:
            candidates.update(self.inverted_index.get(word, ()))
        scored = [(k, self.similarity(sig, self.signature(k))) for k in candidates - masked]
        return sorted(scored, key=lambda item: (-item[1], item[0]))

    def update_and_query(self, kf_id: int, descriptors: np.ndarray, temporal_window: int = 20,
                         score_ratio: float = 0.3, consistency: int = 2) -> List[Tuple[int, float]]:
        """Index a keyframe, then return its loop candidates ranked by score.

        Candidates lie outside the latest `temporal_window` keyframes and score above
        `score_ratio` times the best score among those recent keyframes. With
        `consistency` > 1, a candidate must also have had an accepted candidate within a
        few keyframes of it on each of the previous `consistency - 1` queries.

        Args:
            kf_id: New keyframe id
            descriptors: (N, 32) uint8 descriptors of the keyframe
            temporal_window: Number of latest keyframes masked out
            score_ratio: Gate relative to the best recent-neighbor score
            consistency: Number of consecutive queries that must agree

        Returns:
            (keyframe id, score) pairs, best first.
        """
        self.insert(kf_id, descriptors)
        pos = len(self.order) - 1
        recent = self.order[max(0, pos - temporal_window):pos]
        if not recent:
            self._remember(set())
            return []
        sig = self.signature(kf_id)
        best_recent = max(self.similarity(sig, self.signature(k)) for k in recent)
        threshold = score_ratio * best_recent
        accepted = [(k, s) for k, s in self.query(kf_id, temporal_window) if s > threshold and s > 0.0]

        positions = {self.order.index(k) for k, _ in accepted}
        history = list(self._consistency_history)[-(consistency - 1):] if consistency > 1 else []
        if consistency > 1 and len(history) < consistency - 1:
            accepted = []
        else:
            accepted = [
                (k, s) for k, s in accepted
                if all(any(abs(self.order.index(k) - p) <= ISLAND_RADIUS for p in past) for past in history)
            ]
        self._remember(positions)
        return accepted

    def _remember(self, positions: Set[int]) -> None:
        self._consistency_history.append(positions)
        while len(self._consistency_history) > 16:
            self._consistency_history.popleft()
