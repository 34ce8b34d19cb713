"""Seeded synthetic data with known structure, used by tests and demos."""

from __future__ import annotations

import numpy as np

from .ingest import FeatureTable, TradeRecord


def six_blobs(seed, n_points=36, sigma=0.05, k=6, dim=2, min_separation=1.0, box=6.0):
    """``k`` isotropic Gaussian blobs whose centers are at least ``min_separation`` apart."""
    rng = np.random.default_rng(seed)
    centers = []
    while len(centers) < k:
        c = rng.uniform(0, box, dim)
        if all(np.linalg.norm(c - o) >= min_separation for o in centers):
            centers.append(c)
    labels = np.arange(n_points) % k
    X = np.array(centers)[labels] + rng.normal(0, sigma, (n_points, dim))
    return X, labels


def two_clumps(seed, n_points=24, gap=10.0, spread=0.2):
    """Points on a line, half near 0 and half near ``gap``."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n_points) % 2
    x = labels * gap + rng.uniform(-spread, spread, n_points)
    return x[:, None], labels


GRAVITY_COLUMNS = ("Distance", "GDP_o", "GDP_d", "Population_o", "Population_d",
                   "Contiguity", "Common language", "Tariffs", "Year")


def gravity_signal(X):
    """Log-linear gravity: log trade grows with both GDPs, falls with distance and tariffs."""
    dist, gdp_o, gdp_d = X[:, 0], X[:, 1], X[:, 2]
    contig, lang, tariff = X[:, 5], X[:, 6], X[:, 7]
    return (10.0 + 1.0 * np.log(gdp_o) + 0.8 * np.log(gdp_d) - 1.0 * np.log(dist)
            + 0.5 * contig + 0.3 * lang - 2.0 * tariff)


def gravity_data(n, seed, noise=0.05):
    """Feature matrix and noisy gravity target; noise sd is ``noise`` x the signal's sd."""
    rng = np.random.default_rng(seed)
    X = np.column_stack([
        rng.uniform(0.5, 5.0, n),             # Distance (thousand km)
        rng.uniform(0.5, 3.0, n),             # GDP_o
        rng.uniform(0.5, 3.0, n),             # GDP_d
        rng.uniform(1.0, 100.0, n),           # Population_o
        rng.uniform(1.0, 100.0, n),           # Population_d
        rng.integers(0, 2, n).astype(float),  # Contiguity
        rng.integers(0, 2, n).astype(float),  # Common language
        rng.uniform(0.0, 0.3, n),             # Tariffs
        rng.integers(1996, 2019, n).astype(float),
    ])
    f = gravity_signal(X)
    y = np.maximum(f + rng.normal(0, noise * f.std(), n), 0.0)
    return X, y, list(GRAVITY_COLUMNS)


def single_driver(n, seed, n_features=5):
    """Target equal to feature 0; the other columns are independent noise."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1, (n, n_features))
    return X, X[:, 0].copy(), [f"x{j}" for j in range(n_features)]


def driver_table(seed, driver, n=300, commodity="c"):
    """FeatureTable whose target depends on one named gravity column only."""
    X, _, names = gravity_data(n, seed)
    j = names.index(driver)
    rng = np.random.default_rng([seed, 7])
    col = X[:, j]
    y = 10.0 + 5.0 * (col - col.min()) / np.ptp(col) + rng.normal(0, 0.01, n)
    keys = [(f"O{i % 10}", f"D{i % 7}", 1996 + i % 23, commodity) for i in range(n)]
    return FeatureTable(keys, names, X, y, {nm: 0 for nm in names})


def eml_world(seed, n_big=6, n_small=20, rows_per_country=30, sigma=0.3, noise_ratio=20.0,
              years=range(2010, 2018)):
    """Big traders follow ``y = 2 * GDP_o + 30`` closely, small traders with ``noise_ratio`` x the noise.

    Returns ``(records, table, big_countries)``. Trade records give the big
    countries roughly 100x the annual trade of small ones so that clustering
    on trade totals separates the two groups.
    """
    rng = np.random.default_rng(seed)
    big = [f"B{i:02d}" for i in range(n_big)]
    small = [f"S{i:02d}" for i in range(n_small)]
    countries = big + small
    records = []
    for group, scale in ((big, 1000.0), (small, 10.0)):
        for i, c in enumerate(group):
            partner = group[(i + 1) % len(group)]
            for y in years:
                records.append(TradeRecord(c, partner, y, 10, float(scale * rng.uniform(0.9, 1.1))))
    keys, rows, target = [], [], []
    names = ["GDP_o", "GDP_d", "Distance", "Population_o"]
    for c in countries:
        sd = sigma if c in big else sigma * noise_ratio
        for i in range(rows_per_country):
            gdp_o = rng.uniform(1.0, 10.0)
            feats = [gdp_o, rng.uniform(1.0, 10.0), rng.uniform(0.5, 5.0), rng.uniform(1.0, 100.0)]
            keys.append((c, f"D{i % 5}", 2000 + i, "sugar"))
            rows.append(feats)
            target.append(max(0.0, 2.0 * gdp_o + 30.0 + rng.normal(0, sd)))
    table = FeatureTable(keys, names, np.array(rows), np.array(target), {n: 0 for n in names})
    return records, table, big
