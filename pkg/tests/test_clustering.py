import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from trademl.clustering import ClusterModel, elbow, kmeans, relabel, select_k, silhouette, sse
from trademl.errors import TradeMLError
from trademl.ingest import CountryVector
from trademl.synth import six_blobs, two_clumps


def model_from(labels, X):
    labels = np.asarray(labels)
    k = labels.max() + 1
    C = np.vstack([X[labels == j].mean(axis=0) for j in range(k)])
    return ClusterModel(k, C, labels, list(range(len(X))), 0.0, 0.0, 0)


def test_two_points_two_clusters():
    m = kmeans(np.array([[0.0], [5.0]]), 2)
    assert m.sse == 0
    assert sorted(m.centroids.ravel()) == [0.0, 5.0]


def test_identical_points():
    m = kmeans(np.zeros((5, 2)), 2)
    assert m.sse == 0
    assert len(set(m.labels.tolist())) == 2


def test_k_bounds():
    X = np.arange(6, dtype=float)[:, None]
    with pytest.raises(TradeMLError):
        kmeans(X, 1)
    with pytest.raises(TradeMLError):
        kmeans(X, 7)


def test_sse_computational_form():
    X = np.array([[1.0], [3.0]])
    assert sse(X, model_from([0, 0], X)) == 2.0
    assert sse(X, model_from([0, 1], X)) == 0.0


@given(arrays(float, (12, 2), elements=st.floats(-100, 100)), st.integers(0, 2 ** 16))
@settings(max_examples=50, deadline=None)
def test_sse_equals_deviation_form(X, seed):
    labels = np.random.default_rng(seed).integers(0, 3, len(X))
    labels[:3] = [0, 1, 2]
    m = model_from(labels, X)
    direct = sum(((X[labels == j] - m.centroids[j]) ** 2).sum() for j in range(3))
    assert sse(X, m) == pytest.approx(direct, rel=1e-9, abs=1e-6)


def brute_silhouette(X, labels):
    n = len(X)
    D = np.array([[np.linalg.norm(X[i] - X[j]) for j in range(n)] for i in range(n)])
    s = []
    for i in range(n):
        own = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not own:
            s.append(0.0)
            continue
        a = np.mean(D[i, own])
        b = min(np.mean([D[i, j] for j in range(n) if labels[j] == c]) for c in set(labels) if c != labels[i])
        s.append((b - a) / max(a, b) if max(a, b) > 0 else 0.0)
    return float(np.mean(s))


def test_silhouette_matches_oracle():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(15, 3))
    labels = np.arange(15) % 3
    assert silhouette(X, model_from(labels, X)) == pytest.approx(brute_silhouette(X, labels))


def test_silhouette_tight_pairs():
    X = np.array([[0, 0], [0, 0.1], [10, 10], [10, 10.1]])
    assert silhouette(X, model_from([0, 0, 1, 1], X)) > 0.9


def test_silhouette_all_singletons():
    X = np.array([[0.0], [1.0], [2.0]])
    assert silhouette(X, model_from([0, 1, 2], X)) == 0.0


def test_silhouette_needs_two_clusters():
    X = np.array([[0.0], [1.0]])
    with pytest.raises(TradeMLError):
        silhouette(X, model_from([0, 0], X))


def test_fitted_beats_random_labels():
    X, _ = six_blobs(3)
    fitted = kmeans(X, 6, seed=1)
    rand = np.random.default_rng(0).permutation(np.arange(len(X)) % 6)
    assert fitted.silhouette > silhouette(X, model_from(rand, X))


@pytest.mark.parametrize("seed", range(5))
def test_six_blobs_recovered(seed):
    X, truth = six_blobs(seed, n_points=30)
    m = min((kmeans(X, 6, seed=s) for s in range(5)), key=lambda m: m.sse)
    # equal up to relabeling: the contingency table is a permutation
    pairs = set(zip(truth.tolist(), m.labels.tolist()))
    assert len(pairs) == 6


def test_sse_history_monotone():
    X, _ = six_blobs(1, n_points=60, sigma=0.4)
    for s in range(10):
        h = kmeans(X, 4, seed=s).sse_history
        assert all(b <= a for a, b in zip(h, h[1:]))


def test_two_clumps_choose_two():
    X, _ = two_clumps(0)
    assert select_k(X, range(2, 8), seeds_per_k=3).chosen_k == 2


def test_select_k_range_and_errors():
    X, _ = six_blobs(0)
    rep = select_k(X, range(2, 11), seeds_per_k=2)
    assert [r[0] for r in rep.records] == list(range(2, 11))
    with pytest.raises(TradeMLError):
        select_k(X, [])
    with pytest.raises(TradeMLError):
        select_k(X[:5], range(2, 6))


def test_silhouette_ties_go_to_smaller_k():
    X = np.array([[0.0], [0.0], [10.0], [10.0], [20.0], [20.0]])
    rep = select_k(X, range(2, 5), seeds_per_k=3)
    best = max(r[2] for r in rep.records)
    assert rep.chosen_k == min(k for k, _, s in rep.records if s == best)


def test_elbow():
    assert elbow([2, 3, 4, 5], [100.0, 20.0, 15.0, 12.0]) == 3


def test_country_vectors_and_relabel():
    vecs = [CountryVector(c, np.array([v])) for c, v in zip("ABCD", [0.0, 0.1, 5.0, 5.1])]
    m = kmeans(vecs, 2, seed=0)
    assert m.assignments["A"] == m.assignments["B"] != m.assignments["C"]
    r = relabel(m, [1, 0])
    assert all(r.assignments[c] == 1 - m.assignments[c] for c in "ABCD")
    np.testing.assert_array_equal(r.centroids[1 - m.labels[0]], m.centroids[m.labels[0]])


def test_seeded_runs_repeat():
    X, _ = six_blobs(2)
    a, b = kmeans(X, 4, seed=9), kmeans(X, 4, seed=9)
    np.testing.assert_array_equal(a.labels, b.labels)
    assert a.sse_history == b.sse_history
    assert list(itertools.chain(a.centroids.ravel())) == list(b.centroids.ravel())
