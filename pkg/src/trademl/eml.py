"""Cluster-filtered boosting: train on the big-trader cluster, score everyone.

Countries are clustered on their trade vectors, the cluster holding the
largest summed trade is taken as the training population, and a boosted
model fit on that cluster alone is compared with one fit on every country.
Both are scored on the same origin-stratified holdout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clustering import KSelectionReport, kmeans, select_k
from .errors import ConfigError, TradeMLError
from .ingest import build_country_vectors, country_totals
from .trees import BoostConfig, feature_importance, fit_boosted, predict, r_squared

# Reference holdout quality for three commodities; documentation only, the
# raw pipeline behind these numbers is not available.
REFERENCE_R2 = {"Sugar": 0.73, "Beef": 0.88, "Corn": 0.66}


@dataclass
class EmlConfig:
    cluster_k: object = "auto"
    training_cluster: object = "auto"
    boost: BoostConfig = field(default_factory=BoostConfig)
    commodity: object = None
    k_min: int = 2
    k_max: int = 20
    seeds_per_k: int = 5
    holdout_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.cluster_k != "auto":
            if int(self.cluster_k) < 2:
                raise ConfigError(f"cluster_k must be >= 2 or 'auto', got {self.cluster_k}")
            self.cluster_k = int(self.cluster_k)
        if self.training_cluster not in ("auto", "all"):
            try:
                self.training_cluster = int(self.training_cluster)
            except ValueError:
                raise ConfigError(
                    f"training_cluster must be 'auto', 'all' or a cluster id, got {self.training_cluster!r}"
                ) from None
        if not 0 < self.holdout_fraction < 1:
            raise ConfigError("holdout_fraction must be in (0, 1)")
        if self.k_min < 2 or self.k_max < self.k_min:
            raise ConfigError(f"invalid k range {self.k_min}..{self.k_max}")


@dataclass
class EmlResult:
    cluster_report: KSelectionReport
    training_cluster: int
    cluster_members: list
    model: object
    baseline: object
    r2_filtered: float
    r2_all_data_baseline: float
    table: object
    holdout: np.ndarray
    train_filtered: np.ndarray
    train_all: np.ndarray
    predictions: np.ndarray

    def per_country(self):
        """Mean actual and predicted value per origin country."""
        out = {}
        for origin in sorted(set(self.table.origins)):
            mask = np.array([o == origin for o in self.table.origins])
            out[origin] = {
                "rows": int(mask.sum()),
                "actual_mean": float(self.table.y[mask].mean()),
                "predicted_mean": float(self.predictions[mask].mean()),
                "in_training_cluster": origin in self.cluster_members,
            }
        return out

    def to_report(self):
        return {
            "cluster_report": {
                "records": [{"k": k, "sse": s, "silhouette": sil} for k, s, sil in self.cluster_report.records],
                "chosen_k": self.cluster_report.chosen_k,
                "elbow_k": self.cluster_report.elbow_k,
            },
            "training_cluster": self.training_cluster,
            "cluster_members": list(self.cluster_members),
            "r2_filtered": self.r2_filtered,
            "r2_all_data_baseline": self.r2_all_data_baseline,
            "score": "R^2 on the shared origin-stratified holdout",
            "rows": {"total": len(self.table), "holdout": len(self.holdout),
                     "train_filtered": len(self.train_filtered), "train_all": len(self.train_all)},
            "best_round": self.model.best_round,
            "per_country": self.per_country(),
            "predictions": [
                {"origin": k[0], "destination": k[1], "year": k[2], "commodity": k[3],
                 "actual": float(a), "predicted": float(p)}
                for k, a, p in zip(self.table.keys, self.table.y, self.predictions)
            ],
        }


def stratified_holdout(origins, fraction, seed):
    """Holdout indices taking ``round(fraction * n)`` rows (at least one) from every origin with 2+ rows."""
    rng = np.random.default_rng(seed)
    by_origin = {}
    for i, o in enumerate(origins):
        by_origin.setdefault(o, []).append(i)
    picked = []
    for o in sorted(by_origin):
        rows = np.array(by_origin[o])
        if len(rows) < 2:
            continue
        take = min(len(rows) - 1, max(1, int(round(fraction * len(rows)))))
        picked.extend(rng.permutation(rows)[:take].tolist())
    return np.array(sorted(picked), dtype=int)


def cluster_countries(records, config):
    return cluster_vectors(build_country_vectors(records), config)


def cluster_vectors(vectors, config):
    """``(vectors, KSelectionReport)`` for a fixed ``cluster_k`` or a silhouette search."""
    if config.cluster_k == "auto":
        k_hi = min(config.k_max, len(vectors) - 1)
        if k_hi < config.k_min:
            raise TradeMLError(f"{len(vectors)} countries are too few to cluster over k >= {config.k_min}")
        report = select_k(vectors, range(config.k_min, k_hi + 1), config.seeds_per_k, seed=config.seed)
        return vectors, report
    k = config.cluster_k
    if k >= len(vectors):
        raise TradeMLError(f"cluster_k={k} needs more than {k} countries, got {len(vectors)}")
    seeds = np.random.SeedSequence(config.seed).generate_state(config.seeds_per_k)
    best = min((kmeans(vectors, k, seed=int(s)) for s in seeds), key=lambda m: m.sse)
    return vectors, KSelectionReport([(k, best.sse, best.silhouette)], k, k, {k: best})


def largest_trade_cluster(model, totals):
    sums = np.zeros(model.k)
    for country, label in model.assignments.items():
        sums[label] += totals.get(country, 0.0)
    return int(np.argmax(sums))


def run_eml(records, table, config=None):
    """Run the cluster-filter-boost pipeline and the all-data baseline."""
    config = config or EmlConfig()
    if config.commodity is not None:
        keep = [i for i, k in enumerate(table.keys) if str(k[3]) == str(config.commodity)]
        if not keep:
            raise TradeMLError(f"no feature rows for commodity {config.commodity!r}")
        table = table.subset(keep)
    _, report = cluster_countries(records, config)
    model = report.chosen
    if config.training_cluster == "all":
        # every country trains: the filtered model degenerates to the baseline
        cluster = -1
        members = sorted(set(model.countries) | set(table.origins))
    else:
        if config.training_cluster == "auto":
            cluster = largest_trade_cluster(model, country_totals(records))
        else:
            cluster = config.training_cluster
            if not 0 <= cluster < model.k:
                raise ConfigError(f"training_cluster {cluster} outside 0..{model.k - 1}")
        members = sorted(c for c, l in model.assignments.items() if l == cluster)
    member_set = set(members)

    holdout = stratified_holdout(table.origins, config.holdout_fraction, config.seed)
    in_holdout = np.zeros(len(table), dtype=bool)
    in_holdout[holdout] = True
    train_all = np.flatnonzero(~in_holdout)
    train_filtered = np.array([i for i in train_all if table.keys[i][0] in member_set], dtype=int)
    if len(train_filtered) < 10:
        raise TradeMLError(
            f"insufficient filtered data: {len(train_filtered)} training rows in cluster {cluster} (need 10)"
        )
    names = table.feature_names
    fitted = fit_boosted(table.X[train_filtered], table.y[train_filtered], config.boost, names)
    baseline = fit_boosted(table.X[train_all], table.y[train_all], config.boost, names)
    y_hold = table.y[holdout]
    return EmlResult(
        cluster_report=report,
        training_cluster=cluster,
        cluster_members=members,
        model=fitted,
        baseline=baseline,
        r2_filtered=r_squared(predict(fitted, table.X[holdout]), y_hold),
        r2_all_data_baseline=r_squared(predict(baseline, table.X[holdout]), y_hold),
        table=table,
        holdout=holdout,
        train_filtered=train_filtered,
        train_all=train_all,
        predictions=predict(fitted, table.X),
    )


def commodity_report(results, top_n=5):
    """Rank commodities by holdout R^2 and list each one's leading features.

    ``results`` maps commodity -> :class:`EmlResult` (or any object with
    ``r2_filtered`` and ``model``).
    """
    if not results:
        raise TradeMLError("commodity_report needs at least one result")
    rows = []
    for commodity, res in results.items():
        ranked = feature_importance(res.model)[:top_n]
        rows.append({
            "commodity": commodity,
            "r2": res.r2_filtered,
            "top_features": [{"feature": f, "split": s, "gain": g} for f, s, g in ranked],
        })
    rows.sort(key=lambda r: (-r["r2"], str(r["commodity"])))
    return rows
