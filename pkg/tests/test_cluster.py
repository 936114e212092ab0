import itertools

import numpy as np
import pytest

from cabinfront.diarization import EmbeddingSet, Segment, read_embeddings, spectral_cluster, write_embeddings
from cabinfront.diarization.cluster import cosine_affinity, estimate_num_speakers, kmeans, prune_affinity
from cabinfront.errors import DataError


def segs(n):
    return [Segment("rec", float(i), 1.0, "?") for i in range(n)]


def best_accuracy(labels, truth):
    k = max(labels.max(), truth.max()) + 1
    return max(np.mean(np.array(p)[labels] == truth) for p in itertools.permutations(range(k)) if len(p) == k)


def test_two_orthogonal_groups():
    rng = np.random.default_rng(0)
    # one direction per group, random norms: affinity is exactly block diagonal
    u, v = np.zeros(6), np.zeros(6)
    u[:3], v[3:] = rng.normal(size=3), rng.normal(size=3)
    a = rng.uniform(0.5, 2.0, size=(20, 1)) * u
    b = rng.uniform(0.5, 2.0, size=(20, 1)) * v
    labels = spectral_cluster(np.vstack([a, b]))
    assert labels.max() == 1
    assert np.all(labels[:20] == labels[0]) and np.all(labels[20:] == labels[20]) and labels[0] != labels[20]


def test_identical_vectors_single_cluster():
    assert np.all(spectral_cluster(np.ones((10, 4))) == 0)
    assert spectral_cluster(np.ones((1, 4))).tolist() == [0]


def test_four_gaussian_clusters():
    rng = np.random.default_rng(5)
    truth = np.repeat(np.arange(4), 50)
    x = rng.normal(size=(200, 8))
    x[np.arange(200), truth] += 5.0
    labels = spectral_cluster(x)
    assert labels.max() == 3
    assert best_accuracy(labels, truth) >= 0.98


def test_scale_invariance_and_determinism():
    rng = np.random.default_rng(9)
    truth = np.repeat(np.arange(3), 15)
    x = rng.normal(size=(45, 8))
    x[np.arange(45), truth] += 5.0
    base = spectral_cluster(x)
    scaled = x * rng.uniform(0.1, 10, size=(45, 1))
    assert np.array_equal(base, spectral_cluster(scaled))
    assert np.array_equal(base, spectral_cluster(x))


def test_forced_k_and_errors():
    x = np.random.default_rng(1).normal(size=(6, 3))
    assert spectral_cluster(x, k=2).max() == 1
    with pytest.raises(DataError):
        spectral_cluster(x, k=7)


def test_affinity_pruning_keeps_row_top_and_symmetry():
    rng = np.random.default_rng(2)
    a = cosine_affinity(rng.normal(size=(20, 5)))
    assert np.allclose(a, a.T) and np.allclose(np.diag(a), 1.0)
    p = prune_affinity(a, 0.2)
    assert np.allclose(p, p.T)
    # each row keeps at least its top 20% before symmetrisation
    assert np.all((p > 0).sum(axis=1) >= 4)


def test_eigengap():
    assert estimate_num_speakers(np.array([0, 0, 0, 0.9, 1.0, 1.1]), 5) == 3
    assert estimate_num_speakers(np.array([0.0]), 5) == 1


def test_kmeans_seeded():
    rng = np.random.default_rng(4)
    x = np.vstack([rng.normal(0, 0.1, size=(10, 2)), rng.normal(5, 0.1, size=(10, 2))])
    assert np.array_equal(kmeans(x, 2, seed=3), kmeans(x, 2, seed=3))


def test_embedding_container_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    emb = EmbeddingSet(rng.normal(size=(5, 16)).astype(np.float32), segs(5))
    write_embeddings(tmp_path / "e.bin", emb)
    back = read_embeddings(tmp_path / "e.bin")
    np.testing.assert_array_equal(back.vectors, emb.vectors)
    assert [(s.recording_id, s.onset, s.duration) for s in back.segments] == [(s.recording_id, s.onset, s.duration) for s in emb.segments]
    raw = (tmp_path / "e.bin").read_bytes()
    (tmp_path / "bad.bin").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(DataError, match="magic"):
        read_embeddings(tmp_path / "bad.bin")
    (tmp_path / "short.bin").write_bytes(raw[:40])
    with pytest.raises(DataError, match="truncated"):
        read_embeddings(tmp_path / "short.bin")
    with pytest.raises(DataError, match="NaN"):
        EmbeddingSet(np.full((2, 2), np.nan), segs(2))


def test_small_sets_do_not_fragment():
    rng = np.random.default_rng(0)
    x = np.vstack([np.tile([1.0, 0, 0, 0], (5, 1)), np.tile([0, 0, 1.0, 0], (5, 1))]) + 0.01 * rng.random((10, 4))
    labels = spectral_cluster(x)
    assert labels.tolist() == [0] * 5 + [1] * 5
