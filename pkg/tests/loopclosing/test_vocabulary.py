from collections import Counter

import numpy as np
import pytest

from loopclosing import VocabularyTree, binary_median, k_medians


def random_descriptors(n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, 256, (n, 32), dtype=np.uint8)


def flip_bits(descriptors: np.ndarray, n_bits: int, seed: int) -> np.ndarray:
    gen = np.random.default_rng(seed)
    bits = np.unpackbits(descriptors, axis=1)
    for row in bits:
        row[gen.choice(256, n_bits, replace=False)] ^= 1
    return np.packbits(bits, axis=1)


def test_binary_median_is_bitwise_majority():
    d = np.array([[0b1010_0000] + [0] * 31, [0b1000_0000] + [0] * 31, [0b0010_0001] + [0] * 31], dtype=np.uint8)
    median = binary_median(d)
    assert median[0] == 0b1010_0000
    assert not median[1:].any()


def test_k_medians_caps_clusters_at_unique_descriptors():
    pair = random_descriptors(2, 0)
    data = np.repeat(pair, [15, 25], axis=0)
    found, labels = k_medians(data, 5, np.random.default_rng(1))
    assert len(found) == 2
    assert len(set(labels[:15])) == 1
    assert len(set(labels[15:])) == 1
    assert labels[0] != labels[-1]


def test_self_query_scores_one():
    vocab = VocabularyTree(branching=4, leaf_size=50, seed=0)
    for kf_id in range(6):
        vocab.insert(kf_id, random_descriptors(120, kf_id))
    best, score = vocab.query(3)[0]
    assert best == 3
    assert score == pytest.approx(1.0)
    assert sum(vocab.signature(3).values()) == pytest.approx(1.0)


def test_inverted_index_matches_fresh_descent():
    vocab = VocabularyTree(branching=5, leaf_size=40, seed=3)
    inserted = {}
    for kf_id in range(12):
        inserted[kf_id] = random_descriptors(100, 100 + kf_id)
        vocab.insert(kf_id, inserted[kf_id])
    assert len(vocab.leaves) > 5
    for kf_id, descs in inserted.items():
        expected = Counter(vocab.word_of(d) for d in descs)
        assert vocab.kf_words[kf_id] == expected
        for word, count in expected.items():
            assert vocab.inverted_index[word][kf_id] == count
    assert all(leaf.is_leaf for leaf in vocab.leaves.values())


def test_growth_is_deterministic():
    a = VocabularyTree(branching=4, leaf_size=30, seed=9)
    b = VocabularyTree(branching=4, leaf_size=30, seed=9)
    for kf_id in range(5):
        descs = random_descriptors(80, kf_id)
        a.insert(kf_id, descs)
        b.insert(kf_id, descs)
    assert a.kf_words == b.kf_words


def test_revisit_is_a_loop_candidate():
    vocab = VocabularyTree(branching=6, leaf_size=60, seed=0)
    place = random_descriptors(200, 999)
    assert vocab.update_and_query(0, place, temporal_window=5, consistency=1) == []
    for kf_id in range(1, 12):
        vocab.update_and_query(kf_id, random_descriptors(200, kf_id), temporal_window=5, consistency=1)
    candidates = vocab.update_and_query(12, flip_bits(place, 4, 1), temporal_window=5, consistency=1)
    assert candidates
    assert candidates[0][0] == 0


def test_revisited_places_rank_first():
    vocab = VocabularyTree(branching=8, leaf_size=100, seed=0)
    places = [random_descriptors(200, 500 + p) for p in range(10)]
    for kf_id, place in enumerate(places):
        vocab.update_and_query(kf_id, place, temporal_window=5, consistency=1)
    hits = 0
    for p, place in enumerate(places):
        candidates = vocab.update_and_query(10 + p, flip_bits(place, 4, p), temporal_window=5, consistency=1)
        hits += bool(candidates) and candidates[0][0] == p
    assert hits >= 9


def test_recent_keyframes_are_masked():
    vocab = VocabularyTree(branching=6, leaf_size=60, seed=0)
    for kf_id in range(4):
        vocab.update_and_query(kf_id, random_descriptors(200, kf_id), temporal_window=5)
    # a copy of keyframe 3 inside the window is not a loop
    assert vocab.update_and_query(4, random_descriptors(200, 3), temporal_window=5) == []


def test_temporal_consistency_needs_history():
    vocab = VocabularyTree(branching=6, leaf_size=60, seed=0)
    place = random_descriptors(200, 999)
    vocab.update_and_query(0, place, temporal_window=2, consistency=2)
    vocab.update_and_query(1, random_descriptors(200, 1), temporal_window=2, consistency=2)
    vocab.update_and_query(2, random_descriptors(200, 2), temporal_window=2, consistency=2)
    # first sighting is held back, the second consecutive one passes
    assert vocab.update_and_query(3, flip_bits(place, 4, 1), temporal_window=2, consistency=2) == []
    second = vocab.update_and_query(4, flip_bits(place, 4, 2), temporal_window=2, consistency=2)
    assert second and second[0][0] == 0


def test_invalid_use():
    with pytest.raises(ValueError):
        VocabularyTree(branching=1)
    vocab = VocabularyTree()
    vocab.insert(0, random_descriptors(10, 0))
    with pytest.raises(ValueError):
        vocab.insert(0, random_descriptors(10, 1))
    assert VocabularyTree.similarity({}, {1: 1.0}) == 0.0
