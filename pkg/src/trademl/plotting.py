"""Figures written next to the CSV reports (``--plots``)."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.dpi": 120,
}

FLAG_COLORS = {"Green": "#2e7d32", "Blue": "#1565c0", "Yellow": "#f9a825", "Orange": "#ef6c00", "Red": "#c62828"}


def _save(fig, path, meta=None):
    # fixed metadata keeps the PNG bytes reproducible across runs
    info = {"Software": None}
    if meta:
        info["Description"] = meta
    fig.savefig(path, metadata=info)
    plt.close(fig)


def kselect(records, chosen_k, elbow_k, path, meta=None):
    """Elbow (SSE) and silhouette curves side by side."""
    ks = [r[0] for r in records]
    with plt.rc_context(STYLE):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(7.5, 3))
        a1.plot(ks, [r[1] for r in records], "o-", color="#37474f", ms=3)
        a1.axvline(elbow_k, ls="--", color="#ef6c00", lw=1, label=f"elbow k={elbow_k}")
        a1.set_xlabel("k")
        a1.set_ylabel("SSE")
        a1.legend(frameon=False)
        a2.plot(ks, [r[2] for r in records], "o-", color="#1565c0", ms=3)
        a2.axvline(chosen_k, ls="--", color="#c62828", lw=1, label=f"chosen k={chosen_k}")
        a2.set_xlabel("k")
        a2.set_ylabel("mean silhouette")
        a2.legend(frameon=False)
        fig.tight_layout()
        _save(fig, path, meta)


def importance(rows, path, top=15, meta=None):
    rows = list(rows)[:top][::-1]
    with plt.rc_context(STYLE):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(7.5, 0.3 * len(rows) + 1.2), sharey=True)
        y = np.arange(len(rows))
        a1.barh(y, [r[1] for r in rows], color="#37474f")
        a1.set_yticks(y, [r[0] for r in rows])
        a1.set_xlabel("splits")
        a2.barh(y, [r[2] for r in rows], color="#1565c0")
        a2.set_xlabel("gain")
        fig.tight_layout()
        _save(fig, path, meta)


def rule_scatter(rules, path, meta=None):
    """Support vs confidence, colored by lift."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        if rules:
            sc = ax.scatter([r.support for r in rules], [r.confidence for r in rules],
                            c=[r.lift for r in rules], s=6, cmap="viridis", linewidths=0)
            fig.colorbar(sc, ax=ax, label="lift")
        ax.set_xlabel("support")
        ax.set_ylabel("confidence")
        fig.tight_layout()
        _save(fig, path, meta)


def actual_vs_predicted(actual, predicted, path, in_cluster=None, meta=None):
    actual = np.asarray(actual)
    predicted = np.asarray(predicted)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4, 4))
        if in_cluster is None:
            ax.scatter(actual, predicted, s=5, color="#37474f")
        else:
            mask = np.asarray(in_cluster, dtype=bool)
            ax.scatter(actual[~mask], predicted[~mask], s=5, color="#90a4ae", label="other countries")
            ax.scatter(actual[mask], predicted[mask], s=5, color="#c62828", label="training cluster")
            ax.legend(frameon=False)
        if len(actual):
            lo, hi = float(min(actual.min(), predicted.min())), float(max(actual.max(), predicted.max()))
            ax.plot([lo, hi], [lo, hi], color="k", lw=0.8)
        ax.set_xlabel("actual")
        ax.set_ylabel("predicted")
        fig.tight_layout()
        _save(fig, path, meta)


def flag_history(series_list, flags, path, meta=None):
    """Small multiples: each series' history with its latest value marked in its flag color."""
    n = len(series_list)
    if n == 0:
        return
    cols = min(3, n)
    rows = -(-n // cols)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(rows, cols, figsize=(3.2 * cols, 2.2 * rows), squeeze=False)
        for ax, s, f in zip(axes.flat, series_list, flags):
            vals = [p.value for p in s.points]
            ax.plot(range(len(vals)), vals, color="#37474f", lw=1)
            ax.scatter([len(vals) - 1], [vals[-1]], color=FLAG_COLORS.get(f.color, "k"), zorder=3)
            ax.set_title(s.series[:40], fontsize=8)
        for ax in list(axes.flat)[n:]:
            ax.axis("off")
        fig.tight_layout()
        _save(fig, path, meta)
