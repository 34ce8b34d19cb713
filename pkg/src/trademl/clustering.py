"""k-means with SSE/silhouette diagnostics and silhouette-driven choice of k."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import TradeMLError

MAX_ITERATIONS = 300


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray
    labels: np.ndarray
    countries: list
    sse: float
    silhouette: float
    iterations_run: int
    sse_history: list = field(default_factory=list)

    @property
    def assignments(self):
        return {c: int(l) for c, l in zip(self.countries, self.labels)}


@dataclass
class KSelectionReport:
    records: list  # (k, sse, silhouette)
    chosen_k: int
    elbow_k: int
    models: dict = field(default_factory=dict, repr=False)

    @property
    def chosen(self):
        return self.models[self.chosen_k]


def as_matrix(vectors):
    """Stack CountryVector objects (or a plain 2-D array) into ``(countries, X)``."""
    if isinstance(vectors, np.ndarray):
        X = np.atleast_2d(np.asarray(vectors, dtype=float))
        return [str(i) for i in range(len(X))], X
    vectors = list(vectors)
    if not vectors:
        return [], np.zeros((0, 0))
    dims = {len(v.features) for v in vectors}
    if len(dims) != 1:
        raise TradeMLError(f"country vectors differ in dimension: {sorted(dims)}")
    return [v.country for v in vectors], np.vstack([np.asarray(v.features, dtype=float) for v in vectors])


def _sq_dist(X, C):
    # direct differences rather than the |x|^2 - 2xc + |c|^2 expansion, so that
    # a point sitting on its centroid has distance exactly 0
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def _deviation_sse(X, labels, C):
    return float(((X - C[labels]) ** 2).sum())


def _init_centroids(X, k, rng):
    """k-means++ seeding."""
    n = len(X)
    centers = [int(rng.integers(n))]
    d2 = ((X - X[centers[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # all remaining points coincide with chosen centers
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers.append(idx)
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return X[centers].copy()


def _repair_empty(X, labels, C, k):
    """Move each empty cluster's centroid onto the point farthest from its own centroid."""
    for j in range(k):
        if np.any(labels == j):
            continue
        d = ((X - C[labels]) ** 2).sum(axis=1)
        # only steal from clusters that keep at least one member
        sizes = np.bincount(labels, minlength=k)
        d[sizes[labels] <= 1] = -1.0
        far = int(np.argmax(d))
        if d[far] < 0:
            break
        C[j] = X[far]
        labels[far] = j
    return labels, C


def kmeans(vectors, k, seed=0, max_iterations=MAX_ITERATIONS):
    """Lloyd's algorithm with k-means++ seeding and empty-cluster repair."""
    countries, X = as_matrix(vectors)
    n = len(X)
    if k < 2:
        raise TradeMLError(f"k must be >= 2, got {k}")
    if k > n:
        raise TradeMLError(f"k={k} exceeds the number of vectors ({n})")
    rng = np.random.default_rng(seed)
    C = _init_centroids(X, k, rng)
    labels = np.argmin(_sq_dist(X, C), axis=1)
    labels, C = _repair_empty(X, labels, C, k)
    history = []
    it = 0
    for it in range(1, max_iterations + 1):
        C = np.vstack([X[labels == j].mean(axis=0) for j in range(k)])
        history.append(_deviation_sse(X, labels, C))
        new = np.argmin(_sq_dist(X, C), axis=1)
        new, C = _repair_empty(X, new, C, k)
        if np.array_equal(new, labels):
            break
        labels = new
    model = ClusterModel(k, C, labels, countries, history[-1], 0.0, it, history)
    model.sse = sse(X, model)
    model.silhouette = silhouette(X, model)
    return model


def sse(vectors, model):
    """Within-cluster sum of squares via sum(t^2) - (sum t)^2 / n per cluster and coordinate."""
    _, X = as_matrix(vectors)
    total = 0.0
    for j in range(model.k):
        pts = X[model.labels == j]
        if len(pts) == 0:
            continue
        s = pts.sum(axis=0)
        total += float(((pts ** 2).sum(axis=0) - s * s / len(pts)).sum())
    return max(total, 0.0)


def silhouette(vectors, model):
    """Mean Rousseeuw silhouette; singleton clusters score 0."""
    _, X = as_matrix(vectors)
    labels = np.asarray(model.labels)
    ids = np.unique(labels)
    if len(ids) < 2:
        raise TradeMLError("silhouette needs at least two clusters")
    D = np.sqrt(_sq_dist(X, X))
    sizes = {j: int((labels == j).sum()) for j in ids}
    scores = np.zeros(len(X))
    for i in range(len(X)):
        own = labels[i]
        if sizes[own] == 1:
            continue
        a = D[i, labels == own].sum() / (sizes[own] - 1)
        b = min(D[i, labels == j].mean() for j in ids if j != own)
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0 else (b - a) / denom
    return float(scores.mean())


def elbow(ks, sses):
    """k at the largest discrete second difference of SSE(k)."""
    if len(ks) < 3:
        return ks[0]
    second = [sses[i - 1] - 2 * sses[i] + sses[i + 1] for i in range(1, len(ks) - 1)]
    return ks[1 + int(np.argmax(second))]


def select_k(vectors, k_range=range(2, 21), seeds_per_k=5, seed=0):
    """Fit k-means for every k (best of ``seeds_per_k`` restarts by SSE), pick k by silhouette."""
    ks = list(k_range)
    if not ks:
        raise TradeMLError("k range is empty")
    _, X = as_matrix(vectors)
    if len(X) <= max(ks):
        raise TradeMLError(f"need more than {max(ks)} vectors to evaluate k up to {max(ks)}, got {len(X)}")
    seeds = np.random.SeedSequence(seed).generate_state(len(ks) * seeds_per_k)
    records, models = [], {}
    for n, k in enumerate(ks):
        best = None
        for s in seeds[n * seeds_per_k:(n + 1) * seeds_per_k]:
            m = kmeans(vectors, k, seed=int(s))
            if best is None or m.sse < best.sse:
                best = m
        models[k] = best
        records.append((k, best.sse, best.silhouette))
    # first maximum wins, i.e. ties go to the smaller k
    chosen = max(records, key=lambda r: (r[2], -r[0]))[0]
    return KSelectionReport(records, chosen, elbow(ks, [r[1] for r in records]), models)


def relabel(model, permutation):
    """Model with cluster ids mapped through ``permutation`` (old id -> new id)."""
    perm = np.asarray(permutation)
    C = np.empty_like(model.centroids)
    C[perm] = model.centroids
    return ClusterModel(model.k, C, perm[model.labels], list(model.countries), model.sse,
                        model.silhouette, model.iterations_run, list(model.sse_history))
