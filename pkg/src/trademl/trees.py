"""Gradient-boosted regression trees, written from scratch on numpy.

Weak learners are CART regression trees grown best-first (largest gain
first) under ``max_depth`` and ``num_leaves`` caps, each on a random subset
of the features. Boosting minimizes squared error, so every tree is fit to
the current residuals ``y - prediction``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit

from .errors import ConfigError, SchemaError, TradeMLError

MODEL_FORMAT_VERSION = 1


@dataclass
class BoostConfig:
    learning_rate: float = 0.01
    feature_fraction: float = 0.6
    max_depth: int = 8
    num_leaves: int = 255
    early_stopping_rounds: int = 500
    max_rounds: int = 2000
    validation_fraction: float = 0.2
    min_leaf: int = 5
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.learning_rate <= 1:
            raise ConfigError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if not 0 < self.feature_fraction <= 1:
            raise ConfigError(f"feature_fraction must be in (0, 1], got {self.feature_fraction}")
        if self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1")
        if self.num_leaves < 2:
            raise ConfigError("num_leaves must be >= 2")
        if self.min_leaf < 1:
            raise ConfigError("min_leaf must be >= 1")
        if not 0 < self.validation_fraction < 1:
            raise ConfigError("validation_fraction must be in (0, 1)")
        if self.max_rounds < 0 or self.early_stopping_rounds < 1:
            raise ConfigError("max_rounds must be >= 0 and early_stopping_rounds >= 1")


@dataclass
class RegressionTree:
    """Flat-array binary tree. ``feature[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    depth: int

    @property
    def n_leaves(self):
        return int((self.feature < 0).sum())

    @property
    def n_nodes(self):
        return len(self.feature)

    def predict(self, X):
        X = np.ascontiguousarray(X, dtype=float)
        return _route(self.feature, self.threshold, self.left, self.right, self.value, X)

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "gain": self.gain.tolist(),
            "depth": self.depth,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.array(d["feature"], dtype=np.int64),
            np.array(d["threshold"], dtype=float),
            np.array(d["left"], dtype=np.int64),
            np.array(d["right"], dtype=np.int64),
            np.array(d["value"], dtype=float),
            np.array(d["gain"], dtype=float),
            int(d["depth"]),
        )


@njit(cache=True)
def _route(feature, threshold, left, right, value, X):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


def n_sampled_features(n_features, fraction):
    return max(1, min(n_features, math.ceil(fraction * n_features - 1e-12)))


@njit(cache=True)
def _scan_splits(X, r, idx, feats, min_leaf):
    """Exhaustive threshold scan over ``feats`` for the rows ``idx``.

    Returns ``(gain, feature, threshold)``; feature is -1 when no admissible
    split exists. Gain is the drop in squared error, computed from running
    sums of mean-centred residuals: cs^2 * n / (nl * nr).
    """
    n = idx.size
    mean = 0.0
    for i in range(n):
        mean += r[idx[i]]
    mean /= n
    best_gain = 0.0
    best_f = -1
    best_thr = 0.0
    col = np.empty(n)
    for f in feats:
        for i in range(n):
            col[i] = X[idx[i], f]
        order = np.argsort(col, kind="mergesort")
        cs = 0.0
        for p in range(n - 1):
            cs += r[idx[order[p]]] - mean
            nl = p + 1
            if nl < min_leaf or n - nl < min_leaf:
                continue
            a = col[order[p]]
            b = col[order[p + 1]]
            if not b > a:
                continue
            g = cs * cs * (n / (nl * (n - nl)))
            if g > best_gain:
                best_gain = g
                best_f = f
                thr = (a + b) / 2.0
                if not (a <= thr and thr < b):
                    thr = a
                best_thr = thr
    return best_gain, best_f, best_thr


@njit(cache=True)
def _grow(X, r, feats, max_depth, num_leaves, min_leaf):
    """Best-first growth: repeatedly split the leaf with the largest gain."""
    n = X.shape[0]
    cap = 2 * num_leaves - 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    gain = np.zeros(cap)
    depth = np.zeros(cap, dtype=np.int64)
    lo = np.zeros(cap, dtype=np.int64)
    hi = np.zeros(cap, dtype=np.int64)
    cand_gain = np.full(cap, -1.0)
    cand_f = np.full(cap, -1, dtype=np.int64)
    cand_thr = np.zeros(cap)
    rows = np.arange(n)
    scratch = np.empty(n, dtype=np.int64)

    lo[0], hi[0] = 0, n
    n_nodes = 1
    leaves = 1
    pending_from = 0  # nodes [pending_from, n_nodes) still need a value and a split search
    while True:
        for node in range(pending_from, n_nodes):
            idx = rows[lo[node]:hi[node]]
            total = 0.0
            sq = 0.0
            for i in idx:
                total += r[i]
                sq += r[i] * r[i]
            value[node] = total / idx.size
            if depth[node] < max_depth and idx.size >= 2 * min_leaf and feats.size > 0:
                g, f, t = _scan_splits(X, r, idx, feats, min_leaf)
                if f >= 0 and g > 1e-18 * sq:
                    cand_gain[node] = g
                    cand_f[node] = f
                    cand_thr[node] = t
        pending_from = n_nodes
        if leaves >= num_leaves:
            break
        best = -1
        for node in range(n_nodes):
            if cand_gain[node] > 0 and (best < 0 or cand_gain[node] > cand_gain[best]):
                best = node
        if best < 0:
            break
        f = cand_f[best]
        t = cand_thr[best]
        a, b = lo[best], hi[best]
        k = a
        m = 0
        for p in range(a, b):
            row = rows[p]
            if X[row, f] <= t:
                rows[k] = row
                k += 1
            else:
                scratch[m] = row
                m += 1
        for p in range(m):
            rows[k + p] = scratch[p]
        feature[best] = f
        threshold[best] = t
        gain[best] = cand_gain[best]
        cand_gain[best] = -1.0
        left[best] = n_nodes
        right[best] = n_nodes + 1
        lo[n_nodes], hi[n_nodes] = a, k
        lo[n_nodes + 1], hi[n_nodes + 1] = k, b
        depth[n_nodes] = depth[n_nodes + 1] = depth[best] + 1
        n_nodes += 2
        leaves += 1
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], gain[:n_nodes], depth[:n_nodes])


def fit_tree(X, residuals, config, rng=None, features=None):
    """Fit one regression tree to ``residuals``.

    ``features`` overrides the random feature subset (used by tests and the
    brute-force oracle); otherwise ``ceil(feature_fraction * F)`` distinct
    features are drawn from ``rng``.
    """
    X = np.ascontiguousarray(X, dtype=float)
    r = np.ascontiguousarray(residuals, dtype=float)
    if len(X) == 0:
        raise TradeMLError("cannot fit a tree on zero rows")
    if not np.all(np.isfinite(r)):
        raise TradeMLError("residuals must be finite")
    F = X.shape[1]
    if features is None:
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        k = n_sampled_features(F, config.feature_fraction)
        features = np.sort(rng.choice(F, size=k, replace=False)) if k < F else np.arange(F)
    feats = np.asarray(features, dtype=np.int64)
    feature, threshold, left, right, value, gain, depth = _grow(
        X, r, feats, config.max_depth, config.num_leaves, config.min_leaf
    )
    return RegressionTree(feature, threshold, left, right, value, gain, int(depth[feature < 0].max()))


@dataclass
class BoostedModel:
    base_prediction: float
    trees: list
    learning_rate: float
    feature_names: list
    split_count: np.ndarray
    total_gain: np.ndarray
    best_round: int
    config: BoostConfig
    degenerate: bool = False
    history: dict = field(default_factory=dict)
    train_index: np.ndarray = field(default=None, repr=False)
    valid_index: np.ndarray = field(default=None, repr=False)
    train_predictions: np.ndarray = field(default=None, repr=False)

    @property
    def n_features(self):
        return len(self.feature_names)

    def to_dict(self):
        return {
            "format": "trademl.boosted",
            "version": MODEL_FORMAT_VERSION,
            "config": asdict(self.config),
            "feature_names": list(self.feature_names),
            "base_prediction": self.base_prediction,
            "learning_rate": self.learning_rate,
            "best_round": self.best_round,
            "degenerate": self.degenerate,
            "importances": {
                "split": self.split_count.tolist(),
                "gain": self.total_gain.tolist(),
                "total_gain": float(self.total_gain.sum()),
            },
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "trademl.boosted":
            raise SchemaError("not a trademl boosted-model document")
        if d.get("version") != MODEL_FORMAT_VERSION:
            raise SchemaError(f"unsupported model version {d.get('version')}")
        return cls(
            base_prediction=float(d["base_prediction"]),
            trees=[RegressionTree.from_dict(t) for t in d["trees"]],
            learning_rate=float(d["learning_rate"]),
            feature_names=list(d["feature_names"]),
            split_count=np.array(d["importances"]["split"], dtype=np.int64),
            total_gain=np.array(d["importances"]["gain"], dtype=float),
            best_round=int(d["best_round"]),
            config=BoostConfig(**d["config"]),
            degenerate=bool(d["degenerate"]),
        )

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _rmse(a, b):
    return float(np.sqrt(np.mean((a - b) ** 2)))


def split_train_validation(n, fraction, seed):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_val = min(n - 1, max(1, int(round(fraction * n))))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def importances_from_trees(trees, n_features):
    split = np.zeros(n_features, dtype=np.int64)
    gain = np.zeros(n_features)
    for t in trees:
        internal = t.feature >= 0
        np.add.at(split, t.feature[internal], 1)
        np.add.at(gain, t.feature[internal], t.gain[internal])
    return split, gain


def fit_boosted(X, y, config=None, feature_names=None, callback=None):
    """Boost regression trees on squared error with early stopping on a holdout split.

    A seeded shuffle reserves ``validation_fraction`` of the rows for
    monitoring; the kept ensemble is the prefix of trees with the lowest
    validation RMSE. ``callback(round, residuals, tree)`` is invoked after
    every round when given.
    """
    config = config or BoostConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(X)
    if n < 10:
        raise TradeMLError(f"need at least 10 rows to boost, got {n}")
    if len(y) != n:
        raise TradeMLError("X and y differ in length")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
        raise TradeMLError("features and targets must be finite")
    names = list(feature_names) if feature_names is not None else [f"f{j}" for j in range(X.shape[1])]
    if len(names) != X.shape[1]:
        raise TradeMLError("feature_names length does not match the number of columns")

    tr, va = split_train_validation(n, config.validation_fraction, config.seed)
    Xt, yt, Xv, yv = X[tr], y[tr], X[va], y[va]
    base = float(yt.mean())
    pred_t = np.full(len(tr), base)
    pred_v = np.full(len(va), base)
    train_rmse = [_rmse(yt, pred_t)]
    valid_rmse = [_rmse(yv, pred_v)]
    trees = []
    best_round, best_pred = 0, pred_t.copy()

    if np.ptp(yt) > 0:
        rng = np.random.default_rng([config.seed, 1])
        for t in range(1, config.max_rounds + 1):
            residuals = yt - pred_t
            tree = fit_tree(Xt, residuals, config, rng)
            trees.append(tree)
            pred_t += config.learning_rate * tree.predict(Xt)
            pred_v += config.learning_rate * tree.predict(Xv)
            train_rmse.append(_rmse(yt, pred_t))
            valid_rmse.append(_rmse(yv, pred_v))
            if callback is not None:
                callback(t, residuals, tree)
            if valid_rmse[-1] < valid_rmse[best_round]:
                best_round, best_pred = t, pred_t.copy()
            elif t - best_round >= config.early_stopping_rounds:
                break

    kept = trees[:best_round]
    split, gain = importances_from_trees(kept, X.shape[1])
    return BoostedModel(
        base_prediction=base,
        trees=kept,
        learning_rate=config.learning_rate,
        feature_names=names,
        split_count=split,
        total_gain=gain,
        best_round=best_round,
        config=config,
        degenerate=best_round == 0,
        history={"train_rmse": train_rmse, "valid_rmse": valid_rmse, "rounds_run": len(trees)},
        train_index=tr,
        valid_index=va,
        train_predictions=best_pred,
    )


def predict(model, X):
    """``base + lr * sum(tree(x))`` over the kept trees, accumulated in order."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise SchemaError(
            f"expected {model.n_features} feature columns, got {X.shape[1] if X.ndim == 2 else X.ndim}"
        )
    out = np.full(len(X), model.base_prediction)
    for tree in model.trees:
        out += model.learning_rate * tree.predict(X)
    return out


def r_squared(predicted, actual):
    p = np.asarray(predicted, dtype=float)
    a = np.asarray(actual, dtype=float)
    if len(p) != len(a):
        raise TradeMLError("predicted and actual differ in length")
    if len(a) < 2:
        raise TradeMLError("R^2 needs at least two observations")
    ss_tot = float(((a - a.mean()) ** 2).sum())
    if ss_tot == 0:
        raise TradeMLError("R^2 is undefined for a constant actual series")
    return 1.0 - float(((a - p) ** 2).sum()) / ss_tot


def feature_importance(model):
    """``(feature, split_count, total_gain)`` ranked by splits, then gain."""
    rows = [(name, int(s), float(g)) for name, s, g in zip(model.feature_names, model.split_count, model.total_gain)]
    return sorted(rows, key=lambda r: (-r[1], -r[2], r[0]))
