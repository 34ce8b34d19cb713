"""Command-line entry point: ``trademl {mine,cluster,train,predict,validate,query}``.

Settings resolve in three layers: built-in defaults, then an INI file given
with ``--config``, then command-line flags. Every output file starts with a
provenance line ``# trademl <version> config_hash=<hash> seed=<seed>`` (JSON
files carry the same fields under ``"meta"``). The hash covers the command,
the resolved settings and the contents of the input files, so two runs with
the same inputs and settings write byte-identical files. Timing and progress
go to stderr only.

Exit status: 0 on success, 1 when input rows were rejected (outputs are still
written and the rejected rows listed in ``diagnostics.csv``), 2 on a fatal
error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .eml import EmlConfig, cluster_vectors, run_eml
from .errors import ConfigError, TradeMLError
from .ingest import (
    Diagnostic,
    build_country_vectors,
    build_transactions,
    load_feature_csv,
    load_trade_csv,
)
from .rules import (
    SCOPES,
    MiningConfig,
    aggregate_rules,
    mine_scoped,
    query_rules,
    read_rules_csv,
    sort_rules,
    write_aggregated_csv,
    write_rules_csv,
)
from .sentinel import (
    MadConfig,
    detect_series_outliers,
    flag_value,
    format_date,
    format_number,
    load_series_csv,
)
from .trees import BoostConfig, BoostedModel, feature_importance, predict, r_squared

log = logging.getLogger("trademl")


def _bool(text):
    text = str(text).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# section -> key -> (type, default)
SETTINGS = {
    "run": {"seed": (int, 0)},
    "mining": {
        "min_support": (float, 0.35),
        "max_antecedent": (int, 3),
        "min_confidence": (float, 0.0),
        "scope": (str, "global"),
        "min_value": (float, 0.0),
        "hs_max": (int, 96),
        "min_antecedent_size": (int, 1),
        "top": (int, 0),
    },
    "cluster": {
        "k": (str, "auto"),
        "k_min": (int, 2),
        "k_max": (int, 20),
        "seeds_per_k": (int, 5),
    },
    "boost": {
        "learning_rate": (float, 0.01),
        "feature_fraction": (float, 0.6),
        "max_depth": (int, 8),
        "num_leaves": (int, 255),
        "early_stopping_rounds": (int, 500),
        "max_rounds": (int, 2000),
        "validation_fraction": (float, 0.2),
        "min_leaf": (int, 5),
    },
    "eml": {
        "training_cluster": (str, "auto"),
        "commodity": (str, ""),
        "holdout_fraction": (float, 0.2),
    },
    "mad": {
        "threshold": (float, 3.0),
        "consistency_constant": (float, 1.4826),
        "detrend": (_bool, False),
    },
    "flags": {"window": (str, "observations")},
}

# sections each command reads; only these enter the config hash
SECTIONS = {
    "mine": ("run", "mining"),
    "cluster": ("run", "cluster"),
    "train": ("run", "cluster", "boost", "eml"),
    "predict": ("run",),
    "validate": ("run", "mad", "flags"),
    "query": ("run",),
}


def load_config(path):
    """Parse an INI file into ``{section: {key: value}}`` with values converted to their types."""
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    out = {}
    for section in parser.sections():
        if section not in SETTINGS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        out[section] = {}
        for key, raw in parser.items(section):
            if key not in SETTINGS[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            kind = SETTINGS[section][key][0]
            try:
                out[section][key] = kind(raw)
            except ValueError:
                raise ConfigError(f"{path}: [{section}] {key} = {raw!r} is not a valid {kind.__name__}") from None
    return out


def resolve_settings(command, args):
    """Defaults, overlaid by the config file, overlaid by explicit flags."""
    from_file = load_config(args.config) if args.config else {}
    resolved = {}
    for section in SECTIONS[command]:
        values = {}
        for key, (_kind, default) in SETTINGS[section].items():
            value = from_file.get(section, {}).get(key, default)
            flag = getattr(args, f"{section}__{key}", None)
            if flag is not None:
                value = flag
            values[key] = value
        resolved[section] = values
    return resolved


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(command, settings, inputs, extra=None):
    doc = {
        "command": command,
        "settings": settings,
        "inputs": {name: file_digest(p) for name, p in sorted(inputs.items()) if p is not None},
        "extra": extra or {},
    }
    blob = json.dumps(doc, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


class Run:
    """Output directory plus the provenance header shared by every file it writes."""

    def __init__(self, out, command, settings, inputs, extra=None, plots=False):
        self.out = Path(out)
        self.seed = settings["run"]["seed"]
        self.hash = config_hash(command, settings, inputs, extra)
        self.header = f"trademl {__version__} config_hash={self.hash} seed={self.seed}"
        self.plots = plots
        self.diagnostics = []
        self.written = []

    @property
    def meta(self):
        return {"trademl": __version__, "config_hash": self.hash, "seed": self.seed}

    def path(self, name):
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / name
        self.written.append(p)
        return p

    def csv(self, name, columns, rows, comments=()):
        with self.path(name).open("w", newline="", encoding="utf-8") as fh:
            for line in (self.header, *comments):
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            w.writerows(rows)

    def json(self, name, doc):
        body = {"meta": self.meta, **doc}
        self.path(name).write_text(json.dumps(body, indent=1, sort_keys=False) + "\n", encoding="utf-8")

    def figure(self, draw, name, *args, **kwargs):
        if self.plots:
            draw(*args, path=self.path(name), meta=self.header, **kwargs)

    def write_diagnostics(self):
        rows = [(d.level, d.line, d.message) for d in self.diagnostics]
        self.csv("diagnostics.csv", ["level", "line", "message"], rows)
        for d in self.diagnostics:
            log.warning("%s %s", d.level, d)

    @property
    def status(self):
        return 1 if any(d.level == "error" for d in self.diagnostics) else 0


@contextmanager
def timed(step):
    t0 = time.perf_counter()
    yield
    log.info("%s took %.2fs", step, time.perf_counter() - t0)


def _plotting():
    from . import plotting

    return plotting


# --- mine -------------------------------------------------------------------

def cmd_mine(args, settings):
    m = settings["mining"]
    config = MiningConfig(m["min_support"], m["max_antecedent"], m["min_confidence"], m["scope"])
    run = Run(args.out, "mine", settings, {"trade": args.trade}, plots=args.plots)
    with timed("load"):
        records, diags = load_trade_csv(args.trade, hs_range=(1, m["hs_max"]))
    run.diagnostics.extend(diags)
    transactions = build_transactions(records, m["min_value"])
    if not transactions:
        raise TradeMLError(f"{args.trade}: no transactions left after validation and min_value filtering")
    with timed("mine"):
        rule_sets, stats = mine_scoped(transactions, config)
    rules = sort_rules([r for _scope, rs in rule_sets for r in rs])
    if m["min_antecedent_size"] > 1:
        rules = query_rules(rules, min_antecedent_size=m["min_antecedent_size"])
    listed = rules[:m["top"]] if m["top"] > 0 else rules

    with run.path("rules.csv").open("w", newline="", encoding="utf-8") as fh:
        write_rules_csv(fh, listed, [run.header])
    with run.path("aggregated.csv").open("w", newline="", encoding="utf-8") as fh:
        write_aggregated_csv(fh, aggregate_rules(rule_sets), [run.header])
    run.csv("rules_scatter.csv", ["support", "confidence", "lift"],
            ([f"{r.support:.6f}", f"{r.confidence:.6f}", f"{r.lift:.6f}"] for r in rules))
    run.json("summary.json", {
        "transactions": len(transactions),
        "records": len(records),
        "rejected_rows": len(diags),
        "scope": config.scope,
        "min_support": config.min_support,
        "max_antecedent_size": config.max_antecedent_size,
        "rules": len(rules),
        "rules_listed": len(listed),
        "scopes": stats,
    })
    run.figure(_plotting().rule_scatter, "rules_scatter.png", rules)
    run.write_diagnostics()
    log.info("%d transactions, %d rules", len(transactions), len(rules))
    return run.status


# --- cluster ----------------------------------------------------------------

def load_vectors_csv(path):
    """``country,f1,f2,...`` rows into a country -> vector mapping."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#")) if r]
    if not rows or rows[0][0].strip() != "country":
        raise TradeMLError(f"{path}: first column must be 'country'")
    matrix = {}
    for n, r in enumerate(rows[1:], start=2):
        if len(r) != len(rows[0]):
            raise TradeMLError(f"{path}: line {n}: expected {len(rows[0])} fields, got {len(r)}")
        if r[0] in matrix:
            raise TradeMLError(f"{path}: line {n}: duplicate country {r[0]!r}")
        try:
            matrix[r[0]] = [float(x) for x in r[1:]]
        except ValueError:
            raise TradeMLError(f"{path}: line {n}: non-numeric feature value") from None
    return matrix


def _cluster_config(c, seed, cluster_k=None):
    return EmlConfig(cluster_k=c["k"] if cluster_k is None else cluster_k, k_min=c["k_min"],
                     k_max=c["k_max"], seeds_per_k=c["seeds_per_k"], seed=seed)


def _write_kselect(run, report):
    run.csv("kselect.csv", ["k", "sse", "silhouette"],
            ([k, repr(float(s)), repr(float(sil))] for k, s, sil in report.records),
            comments=[f"chosen_k={report.chosen_k}", f"elbow_k={report.elbow_k}"])
    if len(report.records) > 1:
        run.figure(_plotting().kselect, "kselect.png", report.records, report.chosen_k, report.elbow_k)


def cmd_cluster(args, settings):
    if (args.trade is None) == (args.vectors is None):
        raise ConfigError("give either a trade CSV or --vectors, not both")
    run = Run(args.out, "cluster", settings, {"trade": args.trade, "vectors": args.vectors}, plots=args.plots)
    if args.vectors:
        vectors = build_country_vectors(None, mode="custom", matrix=load_vectors_csv(args.vectors))
    else:
        records, diags = load_trade_csv(args.trade)
        run.diagnostics.extend(diags)
        if len({c for r in records for c in (r.reporter, r.partner)}) < 3:
            raise TradeMLError("clustering needs at least 3 countries")
        vectors = build_country_vectors(records)
    if len(vectors) < 3:
        raise TradeMLError("clustering needs at least 3 countries")
    config = _cluster_config(settings["cluster"], settings["run"]["seed"])
    with timed("cluster"):
        _, report = cluster_vectors(vectors, config)
    # one row per (country, k) for every evaluated k
    run.csv("clusters.csv", ["country", "k", "cluster"],
            ([c, k, int(label)]
             for k, _s, _sil in report.records
             for c, label in zip(report.models[k].countries, report.models[k].labels)))
    _write_kselect(run, report)
    if run.diagnostics or args.trade:
        run.write_diagnostics()
    log.info("chosen k=%d (elbow k=%d)", report.chosen_k, report.elbow_k)
    return run.status


# --- train / predict --------------------------------------------------------

def _boost_config(b, seed):
    return BoostConfig(seed=seed, **b)


def _prediction_rows(keys, actual, predicted):
    for key, a, p in zip(keys, actual, predicted):
        yield [*key, "" if np.isnan(a) else repr(float(a)), repr(float(p))]


PREDICTION_COLUMNS = ["origin", "destination", "year", "commodity", "actual", "predicted"]


def cmd_train(args, settings):
    seed = settings["run"]["seed"]
    e = settings["eml"]
    c = settings["cluster"]
    boost = _boost_config(settings["boost"], seed)
    config = EmlConfig(
        cluster_k=c["k"], training_cluster=e["training_cluster"], boost=boost,
        commodity=e["commodity"] or None, k_min=c["k_min"], k_max=c["k_max"],
        seeds_per_k=c["seeds_per_k"], holdout_fraction=e["holdout_fraction"], seed=seed,
    )
    run = Run(args.out, "train", settings, {"features": args.features, "trade": args.trade}, plots=args.plots)
    records, diags = load_trade_csv(args.trade)
    run.diagnostics.extend(diags)
    table = load_feature_csv(args.features)
    for name, n in table.imputed.items():
        if n:
            run.diagnostics.append(Diagnostic(0, f"{n} missing value(s) in {name!r} imputed with the median",
                                              "warning"))
    with timed("cluster + boost"):
        result = run_eml(records, table, config)
    model = result.model
    run.json("model.json", model.to_dict())
    run.csv("predictions.csv", PREDICTION_COLUMNS,
            _prediction_rows(result.table.keys, result.table.y, result.predictions))
    ranked = feature_importance(model)
    run.csv("importance.csv", ["feature", "split", "gain"], ([f, s, repr(float(g))] for f, s, g in ranked))
    run.json("eml_report.json", result.to_report())
    _write_kselect(run, result.cluster_report)
    if ranked:
        run.figure(_plotting().importance, "importance.png", ranked)
    in_cluster = [k[0] in set(result.cluster_members) for k in result.table.keys]
    run.figure(_plotting().actual_vs_predicted, "actual_vs_predicted.png",
               result.table.y, result.predictions, in_cluster=in_cluster)
    run.write_diagnostics()
    log.info("holdout R^2 filtered=%.4f all-data=%.4f", result.r2_filtered, result.r2_all_data_baseline)
    return run.status


def cmd_predict(args, settings):
    run = Run(args.out, "predict", settings, {"model": args.model, "features": args.features}, plots=args.plots)
    try:
        doc = json.loads(Path(args.model).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise TradeMLError(f"{args.model}: not valid JSON ({exc})") from None
    model = BoostedModel.from_dict(doc)
    table = load_feature_csv(args.features, feature_names=model.feature_names, require_target=False)
    predicted = predict(model, table.X)
    run.csv("predictions.csv", PREDICTION_COLUMNS, _prediction_rows(table.keys, table.y, predicted))
    if not np.isnan(table.y).any() and np.var(table.y) > 0:
        log.info("R^2 against target column: %.4f", r_squared(predicted, table.y))
        run.figure(_plotting().actual_vs_predicted, "actual_vs_predicted.png", table.y, predicted)
    return 0


# --- validate ---------------------------------------------------------------

def cmd_validate(args, settings):
    md = settings["mad"]
    config = MadConfig(threshold=md["threshold"], consistency_constant=md["consistency_constant"],
                       detrend=md["detrend"])
    run = Run(args.out, "validate", settings, {"series": args.series}, plots=args.plots)
    series = load_series_csv(args.series)
    if not series:
        run.diagnostics.append(Diagnostic(0, f"{args.series}: no series rows", "warning"))
    flags, outliers, flagged_series = [], [], []
    for s in series:
        if len(s.points) < 2:
            run.diagnostics.append(Diagnostic(0, f"series {s.series!r}: {len(s.points)} point(s), not flagged",
                                              "warning"))
        else:
            f = flag_value(s.points[:-1], s.points[-1].value, s.series, window=settings["flags"]["window"])
            flags.append([s.series, s.statistical_type, s.unit, format_number(f.value), f.color])
            flagged_series.append((s, f))
        if len(s.points) < 3:
            run.diagnostics.append(Diagnostic(0, f"series {s.series!r}: {len(s.points)} point(s), MAD skipped",
                                              "warning"))
        else:
            outliers.extend(detect_series_outliers(s.points, config, s.description))
    outliers.sort(key=lambda o: (-o.timestamp.toordinal(), o.description, o.value))
    run.csv("flags.csv", ["series", "statistical_type", "unit", "value", "color"], flags)
    run.csv("outliers.csv", ["description", "value", "timestamp"],
            ([o.description, format_number(o.value), format_date(o.timestamp)] for o in outliers))
    if flagged_series:
        run.figure(_plotting().flag_history, "flags.png",
                   [s for s, _ in flagged_series], [f for _, f in flagged_series])
    run.write_diagnostics()
    log.info("%d series, %d flagged, %d outliers", len(series), len(flags), len(outliers))
    return run.status


# --- query ------------------------------------------------------------------

def cmd_query(args, settings):
    contains = None
    if args.antecedent_contains:
        try:
            contains = [int(float(x)) for x in args.antecedent_contains.split(",")]
        except ValueError:
            raise ConfigError(f"--antecedent-contains expects comma-separated codes, got "
                              f"{args.antecedent_contains!r}") from None
    filters = {
        "min_confidence": args.min_confidence, "min_lift": args.min_lift,
        "antecedent_contains": contains, "consequent": args.consequent,
        "origin": args.origin, "destination": args.destination,
        "min_antecedent_size": args.min_antecedent_size,
    }
    hits = query_rules(read_rules_csv(args.rules), **filters)
    if args.top:
        hits = hits[:args.top]
    if args.out is None:
        write_rules_csv(sys.stdout, hits)
        return 0
    run = Run(args.out, "query", settings, {"rules": args.rules}, extra={**filters, "top": args.top})
    with run.path("query.csv").open("w", newline="", encoding="utf-8") as fh:
        write_rules_csv(fh, hits, [run.header])
    return 0


# --- argument parsing -------------------------------------------------------

def _global_options(parser, suppress):
    # the same flags are accepted before and after the subcommand; on the
    # subparser they default to SUPPRESS so they cannot clobber earlier values
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", default=d(None), help="INI file with [run], [mining], ... sections")
    parser.add_argument("--seed", dest="run__seed", type=int, default=d(None))
    parser.add_argument("--out", default=d(None), help="output directory")
    parser.add_argument("--plots", action="store_true", default=d(False), help="also write PNG figures")
    parser.add_argument("-v", "--verbose", action="count", default=d(0))


def _setting_flag(parser, section, key, flag=None, **kw):
    kind = SETTINGS[section][key][0]
    flag = flag or "--" + key.replace("_", "-")
    parser.add_argument(flag, dest=f"{section}__{key}", type=kind, default=None, **kw)


def build_parser():
    parser = argparse.ArgumentParser(prog="trademl", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"trademl {__version__}")
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mine", help="association rules between HS chapters")
    _global_options(p, suppress=True)
    p.add_argument("trade", help="trade CSV (reporter,partner,year,hs_chapter,value)")
    _setting_flag(p, "mining", "min_support")
    _setting_flag(p, "mining", "max_antecedent", help="largest antecedent size")
    _setting_flag(p, "mining", "min_confidence")
    _setting_flag(p, "mining", "scope", choices=SCOPES)
    _setting_flag(p, "mining", "min_value", help="chapters at or below this value are left out of a basket")
    _setting_flag(p, "mining", "min_antecedent_size")
    _setting_flag(p, "mining", "hs_max", help="highest accepted commodity code (96 for HS-2)")
    _setting_flag(p, "mining", "top", help="only list the first N rules in rules.csv (0 = all)")
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("cluster", help="k-means over country trade vectors")
    _global_options(p, suppress=True)
    p.add_argument("trade", nargs="?", help="trade CSV; per-year totals become the vectors")
    p.add_argument("--vectors", help="country,f1,f2,... CSV used instead of trade totals")
    _setting_flag(p, "cluster", "k", help="fixed k, or 'auto' to pick by silhouette")
    _setting_flag(p, "cluster", "k_min")
    _setting_flag(p, "cluster", "k_max")
    _setting_flag(p, "cluster", "seeds_per_k")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("train", help="cluster-filtered boosted model plus all-data baseline")
    _global_options(p, suppress=True)
    p.add_argument("--features", required=True, help="feature CSV with origin,destination,year,commodity,target")
    p.add_argument("--trade", required=True, help="trade CSV used to cluster countries")
    _setting_flag(p, "cluster", "k", flag="--cluster-k")
    _setting_flag(p, "cluster", "k_min")
    _setting_flag(p, "cluster", "k_max")
    _setting_flag(p, "cluster", "seeds_per_k")
    _setting_flag(p, "eml", "training_cluster")
    _setting_flag(p, "eml", "commodity")
    _setting_flag(p, "eml", "holdout_fraction")
    for key in SETTINGS["boost"]:
        _setting_flag(p, "boost", key)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score a feature CSV with a saved model")
    _global_options(p, suppress=True)
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("validate", help="historical-range flags and MAD outliers for time series")
    _global_options(p, suppress=True)
    p.add_argument("series", help="CSV with series,statistical_type,unit,timestamp,value")
    _setting_flag(p, "mad", "threshold", flag="--mad-threshold")
    _setting_flag(p, "mad", "consistency_constant")
    p.add_argument("--detrend", dest="mad__detrend", action="store_const", const=True, default=None)
    _setting_flag(p, "flags", "window", choices=("observations", "calendar"),
                  help="flag windows count points or calendar years")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("query", help="filter a rules CSV (stdout, or <out>/query.csv with --out)")
    _global_options(p, suppress=True)
    p.add_argument("rules")
    p.add_argument("--min-confidence", type=float)
    p.add_argument("--min-lift", type=float)
    p.add_argument("--antecedent-contains", help="comma-separated HS codes that must all be in the antecedent")
    p.add_argument("--consequent", type=int)
    p.add_argument("--origin")
    p.add_argument("--destination")
    p.add_argument("--min-antecedent-size", type=int)
    p.add_argument("--top", type=int, default=0)
    p.set_defaults(func=cmd_query)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
        format="trademl: %(message)s", stream=sys.stderr,
    )
    if args.out is None and args.command != "query":
        args.out = "trademl-out"
    try:
        settings = resolve_settings(args.command, args)
        t0 = time.perf_counter()
        status = args.func(args, settings)
        log.info("%s finished in %.2fs", args.command, time.perf_counter() - t0)
        return status
    except (TradeMLError, OSError) as exc:
        print(f"trademl: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
