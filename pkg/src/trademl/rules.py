"""Apriori frequent itemsets, association rules and the flat-file rule store.

Counting is vertical: each item owns a Python ``int`` used as a bitset over
transaction indices, so the count of an itemset is the popcount of the AND of
its members' bitsets. All metrics are derived from integer counts and divided
only when a rule is emitted.
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations

from .errors import ConfigError, SchemaError, TradeMLError
from .hs2 import chapter_name

RULE_COLUMNS = (
    "Lhs", "Rhs", "Lhs_name", "Rhs_name", "Support", "Confidence", "Lift", "Count",
    "Country_O", "Country_D",
)
SCOPES = ("global", "per-reporter", "per-pair")


@dataclass(frozen=True, order=True)
class Itemset:
    items: tuple
    count: int = field(compare=False)

    def __len__(self):
        return len(self.items)

    @property
    def mask(self):
        m = 0
        for i in self.items:
            m |= 1 << i
        return m


@dataclass(frozen=True)
class Rule:
    antecedent: tuple
    consequent: int
    support: float
    confidence: float
    lift: float
    count: int
    scope_origin: str = "ALL"
    scope_destination: str = "ALL"

    @property
    def items(self):
        return tuple(sorted((*self.antecedent, self.consequent)))


@dataclass
class MiningConfig:
    min_support: float = 0.35
    max_antecedent_size: int = 3
    min_confidence: float = 0.0
    scope: str = "global"

    def __post_init__(self):
        if not 0 < self.min_support <= 1:
            raise ConfigError(f"min_support must be in (0, 1], got {self.min_support}")
        if self.max_antecedent_size < 1:
            raise ConfigError("max_antecedent_size must be >= 1")
        if not 0 <= self.min_confidence <= 1:
            raise ConfigError(f"min_confidence must be in [0, 1], got {self.min_confidence}")
        if self.scope not in SCOPES:
            raise ConfigError(f"scope must be one of {SCOPES}, got {self.scope!r}")


@dataclass(frozen=True)
class AggregatedRule:
    antecedent: tuple
    consequent: int
    antecedent_names: str
    consequent_name: str
    sum_of_confidence: float
    scopes: int


def _baskets(transactions):
    out = []
    for t in transactions:
        items = getattr(t, "items", t)
        out.append(frozenset(int(i) for i in items))
    return out


def _vertical(baskets):
    tids = defaultdict(int)
    for n, basket in enumerate(baskets):
        bit = 1 << n
        for i in basket:
            tids[i] |= bit
    return dict(tids)


def mine_frequent_itemsets(transactions, min_support, max_size):
    """All itemsets with at most ``max_size`` items and support >= ``min_support``.

    ``transactions`` may be :class:`~trademl.ingest.Transaction` objects or
    plain iterables of item codes. Results are sorted by size then items.
    """
    baskets = _baskets(transactions)
    n = len(baskets)
    if n == 0:
        raise TradeMLError("cannot mine an empty transaction list")
    if not 0 < min_support <= 1:
        raise ConfigError(f"min_support must be in (0, 1], got {min_support}")
    if max_size < 1:
        return []
    tids = _vertical(baskets)

    def frequent(count):
        return count / n >= min_support

    level = {}
    for item in sorted(tids):
        c = tids[item].bit_count()
        if frequent(c):
            level[(item,)] = tids[item]
    result = [Itemset(k, v.bit_count()) for k, v in level.items()]
    size = 1
    while level and size < max_size:
        keys = sorted(level)
        nxt = {}
        # join itemsets sharing their first size-1 items
        for a in range(len(keys)):
            head = keys[a][:-1]
            for b in range(a + 1, len(keys)):
                if keys[b][:-1] != head:
                    break
                cand = keys[a] + (keys[b][-1],)
                if any(sub not in level for sub in combinations(cand, size)):
                    continue
                bits = level[keys[a]] & tids[cand[-1]]
                if frequent(bits.bit_count()):
                    nxt[cand] = bits
        size += 1
        level = nxt
        result.extend(Itemset(k, v.bit_count()) for k, v in sorted(level.items()))
    return result


def generate_rules(frequent, Tt, config, scope=("ALL", "ALL")):
    """Single-consequent rules from a downward-closed collection of itemsets."""
    counts = {f.items: f.count for f in frequent}
    origin, destination = scope
    rules = []
    for f in frequent:
        if len(f.items) < 2 or f.count / Tt < config.min_support:
            continue
        for b in f.items:
            ante = tuple(i for i in f.items if i != b)
            if len(ante) > config.max_antecedent_size:
                continue
            try:
                c_ante, c_cons = counts[ante], counts[(b,)]
            except KeyError as exc:
                raise TradeMLError(f"frequent itemsets are not closed under subsets: missing {exc}") from None
            confidence = f.count / c_ante
            if confidence < config.min_confidence:
                continue
            rules.append(Rule(
                antecedent=ante,
                consequent=b,
                support=f.count / Tt,
                confidence=confidence,
                lift=(f.count * Tt) / (c_ante * c_cons),
                count=f.count,
                scope_origin=origin,
                scope_destination=destination,
            ))
    return sort_rules(rules)


def rule_sort_key(r):
    return (-r.confidence, -r.lift, -r.support, r.antecedent, r.consequent,
            r.scope_origin, r.scope_destination)


def sort_rules(rules):
    return sorted(rules, key=rule_sort_key)


def mine_rules(transactions, config):
    """Mine one rule set over ``transactions`` (already restricted to a scope)."""
    freq = mine_frequent_itemsets(transactions, config.min_support, config.max_antecedent_size + 1)
    return freq, generate_rules(freq, len(transactions), config)


def partition_by_scope(transactions, scope):
    """Split transactions into ``{(origin_label, destination_label): [...]}``."""
    groups = defaultdict(list)
    for t in transactions:
        if scope == "global":
            key = ("ALL", "ALL")
        elif scope == "per-reporter":
            key = (t.reporter, "ALL")
        elif scope == "per-pair":
            key = (t.reporter, t.partner)
        else:
            raise ConfigError(f"unknown scope {scope!r}")
        groups[key].append(t)
    return dict(sorted(groups.items()))


def mine_scoped(transactions, config):
    """Rule sets per scope: list of ``(scope, rules)`` plus per-scope stats."""
    out, stats = [], []
    for key, group in partition_by_scope(transactions, config.scope).items():
        freq = mine_frequent_itemsets(group, config.min_support, config.max_antecedent_size + 1)
        rules = generate_rules(freq, len(group), config, scope=key)
        out.append((key, rules))
        stats.append({"scope": list(key), "transactions": len(group),
                      "frequent_itemsets": len(freq), "rules": len(rules)})
    return out, stats


def names(items):
    return " & ".join(chapter_name(i) for i in items)


def aggregate_rules(rule_sets):
    """Sum rule confidence across scopes, grouped by (antecedent, consequent)."""
    sums, seen = defaultdict(float), defaultdict(int)
    for _scope, rules in rule_sets:
        for r in rules:
            key = (tuple(r.antecedent), r.consequent)
            sums[key] += r.confidence
            seen[key] += 1
    out = [
        AggregatedRule(a, c, names(a), chapter_name(c), total, seen[(a, c)])
        for (a, c), total in sums.items()
    ]
    out.sort(key=lambda g: (-g.sum_of_confidence, g.antecedent, g.consequent))
    return out


def query_rules(rules, min_confidence=None, min_lift=None, antecedent_contains=None,
                consequent=None, origin=None, destination=None, min_antecedent_size=None):
    """Rules satisfying every given filter, in the canonical sort order."""
    if min_confidence is not None and not 0 <= min_confidence <= 1:
        raise ConfigError(f"min_confidence must be in [0, 1], got {min_confidence}")
    if min_lift is not None and min_lift < 0:
        raise ConfigError(f"min_lift must be >= 0, got {min_lift}")
    if antecedent_contains is not None:
        want = {int(i) for i in (
            antecedent_contains if hasattr(antecedent_contains, "__iter__") else [antecedent_contains]
        )}
    hits = []
    for r in rules:
        if min_confidence is not None and r.confidence < min_confidence:
            continue
        if min_lift is not None and r.lift < min_lift:
            continue
        if antecedent_contains is not None and not want <= set(r.antecedent):
            continue
        if consequent is not None and r.consequent != int(consequent):
            continue
        if origin is not None and r.scope_origin != origin:
            continue
        if destination is not None and r.scope_destination != destination:
            continue
        if min_antecedent_size is not None and len(r.antecedent) < min_antecedent_size:
            continue
        hits.append(r)
    return sort_rules(hits)


def format_itemset(items):
    """Render codes as braced one-decimal floats: ``{11.0,21.0,74.0}``."""
    return "{" + ",".join(f"{float(i):.1f}" for i in items) + "}"


def parse_itemset(text):
    text = text.strip()
    if not (text.startswith("{") and text.endswith("}")):
        raise SchemaError(f"itemset must be braced, got {text!r}")
    body = text[1:-1].strip()
    if not body:
        return ()
    return tuple(sorted(int(float(x)) for x in body.split(",")))


def rules_to_rows(rules):
    for r in rules:
        yield [
            format_itemset(r.antecedent), format_itemset([r.consequent]),
            names(r.antecedent), chapter_name(r.consequent),
            f"{r.support:.6f}", f"{r.confidence:.6f}", f"{r.lift:.6f}", str(r.count),
            r.scope_origin, r.scope_destination,
        ]


def write_rules_csv(fh, rules, header_lines=()):
    for line in header_lines:
        fh.write(f"# {line}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(RULE_COLUMNS)
    w.writerows(rules_to_rows(rules))


def rules_csv_text(rules, header_lines=()):
    buf = io.StringIO()
    write_rules_csv(buf, rules, header_lines)
    return buf.getvalue()


def read_rules_csv(path):
    """Load a rule CSV written by :func:`write_rules_csv` (comment lines skipped)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        if reader.fieldnames is None:
            return []
        missing = [c for c in RULE_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        out = []
        for row in reader:
            rhs = parse_itemset(row["Rhs"])
            if len(rhs) != 1:
                raise SchemaError(f"{path}: consequent must hold exactly one item, got {row['Rhs']}")
            out.append(Rule(
                antecedent=parse_itemset(row["Lhs"]),
                consequent=rhs[0],
                support=float(row["Support"]),
                confidence=float(row["Confidence"]),
                lift=float(row["Lift"]),
                count=int(row["Count"]),
                scope_origin=row["Country_O"],
                scope_destination=row["Country_D"],
            ))
    return out


def write_aggregated_csv(fh, groups, header_lines=()):
    for line in header_lines:
        fh.write(f"# {line}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["Lhs", "Rhs", "Lhs_name", "Rhs_name", "Sum_of_confidence", "Scopes"])
    for g in groups:
        w.writerow([format_itemset(g.antecedent), format_itemset([g.consequent]),
                    g.antecedent_names, g.consequent_name, f"{g.sum_of_confidence:.6f}", g.scopes])
