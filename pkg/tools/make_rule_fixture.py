"""Build a trade CSV whose transactions reproduce the reference top-20 rule table.

Simulated annealing over a boolean basket matrix: every rule's antecedent
implies its consequent (closure), and the counts of all 20 antecedents and of
the four consequents are driven to their targets. Usage:

    python3 tools/make_rule_fixture.py src/trademl/data/top20_rules_trade.csv
"""

import csv
import math
import sys
from itertools import combinations
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from trademl.rules import parse_itemset  # noqa: E402

TT = 743
CONSEQUENT_COUNTS = {19: 454, 76: 493, 40: 501, 33: 508}


def load_rules():
    path = Path(__file__).resolve().parents[1] / "src/trademl/data/top20_multi_antecedent_rules.csv"
    with open(path, newline="") as fh:
        return [(parse_itemset(r["Lhs"]), parse_itemset(r["Rhs"])[0], int(r["Count"]))
                for r in csv.DictReader(fh)]


def main(out, seed=7):
    rules = load_rules()
    items = sorted({i for a, b, _ in rules for i in (*a, b)})
    col = {it: j for j, it in enumerate(items)}
    ante = [np.array([col[i] for i in a]) for a, _, _ in rules]
    cons = [col[b] for _, b, _ in rules]
    targets = np.array([c for _, _, c in rules] + [CONSEQUENT_COUNTS[b] for b in sorted(CONSEQUENT_COUNTS)])
    cons_cols = [col[b] for b in sorted(CONSEQUENT_COUNTS)]
    # every antecedent pair must also occur without the consequent, otherwise
    # any third item turns the pair into a spurious confidence-1 rule
    pairs = sorted({(tuple(sorted((col[x], col[y]))), col[b])
                    for a, b, _ in rules for x, y in combinations(a, 2)})
    pair_cols = [np.array(pc) for pc, _ in pairs]
    pair_cons = [b for _, b in pairs]
    margin = 15
    rng = np.random.default_rng(seed)
    # rows differ in richness: large traders carry most chapters
    rich = rng.random(TT) < 0.55
    p = np.where(rich[:, None], 0.93, 0.35) * np.ones(len(items))
    p[:, cons_cols] *= 0.5
    base = rng.random((TT, len(items))) < p

    def close(row):
        row = row.copy()
        changed = True
        while changed:
            changed = False
            for a, b in zip(ante, cons):
                if not row[b] and row[a].all():
                    row[b] = True
                    changed = True
        return row

    def stats(row):
        return np.array([row[a].all() for a in ante] + [row[j] for j in cons_cols], dtype=int)

    def pair_stats(row):
        return np.array([row[pc].all() and not row[b] for pc, b in zip(pair_cols, pair_cons)], dtype=int)

    def total_cost(counts, pcounts):
        return np.abs(counts - targets).sum() + np.maximum(0, margin - pcounts).sum()

    closed = np.array([close(r) for r in base])
    per_row = np.array([stats(r) for r in closed])
    per_row_p = np.array([pair_stats(r) for r in closed])
    counts = per_row.sum(axis=0)
    pcounts = per_row_p.sum(axis=0)
    cost = total_cost(counts, pcounts)
    temp = 2.0
    step = 0
    while cost > 0:
        step += 1
        i, j = rng.integers(TT), rng.integers(len(items))
        cand = base[i].copy()
        cand[j] = ~cand[j]
        crow = close(cand)
        s, sp = stats(crow), pair_stats(crow)
        new_counts = counts - per_row[i] + s
        new_pcounts = pcounts - per_row_p[i] + sp
        new_cost = total_cost(new_counts, new_pcounts)
        if new_cost <= cost or rng.random() < math.exp((cost - new_cost) / temp):
            base[i], closed[i], per_row[i], per_row_p[i] = cand, crow, s, sp
            counts, pcounts, cost = new_counts, new_pcounts, new_cost
        temp = max(0.05, temp * 0.9995)
        if step % 20000 == 0:
            print(step, cost, (counts - targets).tolist(), file=sys.stderr)
        if step > 3_000_000:
            raise SystemExit("did not converge")
    print(f"converged after {step} flips", file=sys.stderr)

    codes = ["AUS", "BRA", "CAN", "CHN", "DEU", "FRA", "GBR"]
    pairs = [(a, b) for a in codes for b in codes if a != b]
    keys = [(a, b, y) for a, b in pairs for y in range(1996, 2019)][:TT]
    vals = np.random.default_rng(seed + 1)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["reporter", "partner", "year", "hs_chapter", "value"])
        for (a, b, y), row in zip(keys, closed):
            for j in np.flatnonzero(row):
                w.writerow([a, b, y, items[j], int(vals.integers(1000, 500000))])


if __name__ == "__main__":
    main(sys.argv[1])
