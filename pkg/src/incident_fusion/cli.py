"""Command-line front end: synth, priors, detect, train, evaluate, sweep.

Settings come from built-in defaults, then an optional ``--config`` file
(flat ``key = value`` lines under per-module sections), then flags.
Exit codes: 0 success, 2 input or configuration error, 3 not enough data.
"""
from __future__ import annotations

import argparse
import configparser
import json
import sys
from contextlib import contextmanager
from pathlib import Path

from . import classify, evaluation, synth
from .classify import FitError, Scheme, ThresholdError
from .evaluation import UndefinedMetric
from .fusion import FusionConfig
from .geo import GeoPoint, GridConfig, InvalidInput
from .ingest import FormatError, read_ground_truth_file, read_reports_file
from .pipeline import STRATEGIES, Detector, build_feature_rows
from .priors import PriorEstimationError, estimate_priors, read_priors_csv, write_priors_csv

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DATA = 3

MINUTE_MS = 60_000


class UsageError(Exception):
    """Bad input or configuration (exit 2)."""


class DataError(Exception):
    """Valid input that is too thin to work with (exit 3)."""


# option name -> (config section, type, default)
OPTIONS = {
    "seed": ("run", int, 0),
    "t_prime_min": ("fusion", float, 25.0),
    "t_step_min": ("fusion", float, 1.0),
    "delta_m": ("fusion", float, 100.0),
    "res": ("fusion", int, 6),
    "threshold": ("fusion", float, 0.5),
    "grouping": ("grouping", str, "segmentation"),
    "eps": ("grouping", float, 0.8),
    "min_pts": ("grouping", int, 2),
    "scheme": ("classify", str, "M6"),
    "max_depth": ("classify", int, 5),
    "n_trees": ("classify", int, 100),
    "k": ("classify", int, 5),
    "origin_lat": ("grid", float, synth.NASHVILLE.lat),
    "origin_lon": ("grid", float, synth.NASHVILLE.lon),
    "utc_offset": ("grid", float, 0.0),
    "epsilon": ("priors", float, 1e-6),
}


def _flag(name):
    return "--" + name.replace("_", "-")


def _add(p, *names, help_=None):
    for name in names:
        section, typ, default = OPTIONS[name]
        text = (help_ or {}).get(name, name.replace("_", " "))
        kw = {"choices": [s.value for s in Scheme]} if name == "scheme" else {}
        if name == "grouping":
            kw = {"choices": list(STRATEGIES)}
        p.add_argument(_flag(name), type=typ, default=None, metavar=None if kw else typ.__name__.upper(),
                       help=f"{text} (default: {default}; config [{section}] {name})", **kw)


def _common(p):
    p.add_argument("--config", type=Path, default=None, help="key = value config file with per-module sections")
    p.add_argument("--out", type=Path, default=None, help="output directory (default: stdout)")
    _add(p, "seed", "origin_lat", "origin_lon", "utc_offset")


def _grid_flags(p):
    _add(p, "t_prime_min", "t_step_min", "delta_m", "res")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="incident-fusion", description=__doc__.splitlines()[0],
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scenario")
    _common(p)
    p.add_argument("--history-days", type=int, default=0,
                   help="also write history_ground_truth.csv covering this many days (default: 0, none)")
    p.add_argument("--lead-time", action="store_true", help="use the sparse lead-time scenario instead of the benchmark")

    p = sub.add_parser("priors", help="estimate region-by-hour priors from ground truth")
    p.add_argument("ground_truth", type=Path)
    _common(p)
    _add(p, "res", "epsilon")

    p = sub.add_parser("detect", help="run the streaming detector")
    p.add_argument("reports", type=Path)
    p.add_argument("priors", type=Path)
    _common(p)
    _grid_flags(p)
    _add(p, "threshold", "grouping", "eps", "min_pts", "scheme")
    p.add_argument("--ground-truth", type=Path, default=None, help="also write a lead-time report against these records")
    p.add_argument("--dump-beliefs", type=Path, default=None, help="write final belief states (JSON lines)")
    p.add_argument("--dump-clusters", type=Path, default=None, help="write final clusters (JSON lines)")

    for name, text in (("train", "fit a classifier and learn its threshold"),
                       ("evaluate", "k-fold cross-validated metrics")):
        p = sub.add_parser(name, help=text)
        _data_inputs(p)
        _common(p)
        _grid_flags(p)
        _add(p, "scheme", "eps", "min_pts", "max_depth", "n_trees")
        if name == "evaluate":
            _add(p, "k")

    p = sub.add_parser("sweep", help="grid search over (T', t_s, delta, res)")
    p.add_argument("grid", type=Path, help="grid file with a [sweep] section of comma-separated values")
    p.add_argument("--reports", type=Path, required=True)
    p.add_argument("--ground-truth", type=Path, required=True)
    p.add_argument("--history", type=Path, required=True, help="ground truth used to estimate priors")
    _common(p)
    _add(p, "scheme", "eps", "min_pts", "max_depth", "n_trees", "k", "epsilon")
    return ap


def _data_inputs(p):
    p.add_argument("--features", type=Path, default=None, help="feature CSV (otherwise built from the three inputs below)")
    p.add_argument("--reports", type=Path, default=None)
    p.add_argument("--ground-truth", type=Path, default=None)
    p.add_argument("--priors", type=Path, default=None)
    p.add_argument("--dump-features", type=Path, default=None, help="write the feature rows used")


# -- settings ---------------------------------------------------------------------

def load_config(path: Path | None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    if path is None:
        return cp
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise UsageError(f"bad config file {path}: {exc}") from None
    return cp


def resolve(args, cp: configparser.ConfigParser) -> dict:
    """Merge defaults < config file < flags for every known option."""
    out = {}
    for name, (section, typ, default) in OPTIONS.items():
        val = getattr(args, name, None)
        if val is None and cp.has_option(section, name):
            raw = cp.get(section, name)
            try:
                val = typ(raw)
            except ValueError:
                raise UsageError(f"config [{section}] {name}: bad value {raw!r}") from None
        out[name] = default if val is None else val
    return out


def fusion_config(s: dict) -> FusionConfig:
    try:
        return FusionConfig(delta_m=s["delta_m"], T_prime_ms=int(round(s["t_prime_min"] * MINUTE_MS)),
                            t_s_ms=int(round(s["t_step_min"] * MINUTE_MS)), resolution=s["res"],
                            alert_threshold=s["threshold"])
    except InvalidInput as exc:
        raise UsageError(str(exc)) from None


def grid_config(s: dict) -> GridConfig:
    return GridConfig(GeoPoint(s["origin_lat"], s["origin_lon"]), s["res"])


def scheme_of(s: dict) -> Scheme:
    try:
        return Scheme(s["scheme"])
    except ValueError:
        raise UsageError(f"unknown scheme {s['scheme']!r}; use M1..M10") from None


@contextmanager
def output(out_dir: Path | None, name: str):
    if out_dir is None:
        yield sys.stdout
        return
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / name, "w", encoding="utf-8", newline="") as fh:
        yield fh


def _need(path, what):
    if path is None:
        raise UsageError(f"missing {what}")
    if not Path(path).is_file():
        raise UsageError(f"{what} not found: {path}")


def _load_reports(path):
    _need(path, "reports file")
    res = read_reports_file(path)
    if res.errors:
        first = res.errors[0]
        raise UsageError(f"{path}: {len(res.errors)} bad line(s); line {first.line}: {first.message}")
    return res.records


def _load_ground_truth(path):
    _need(path, "ground-truth file")
    res = read_ground_truth_file(path)
    if res.errors:
        first = res.errors[0]
        raise UsageError(f"{path}: {len(res.errors)} bad line(s); line {first.line}: {first.message}")
    return res.records


def _load_priors(path, res):
    _need(path, "priors file")
    with open(path, encoding="utf-8") as fh:
        try:
            table = read_priors_csv(fh)
        except ValueError as exc:
            raise UsageError(f"{path}: {exc}") from None
    bad = {c.resolution for c, _ in table.entries} - {res}
    if bad:
        raise UsageError(f"priors are at resolution {sorted(bad)} but the grid uses --res {res}")
    return table


# -- commands --------------------------------------------------------------------

def cmd_synth(args, s, cp) -> int:
    section = dict(cp.items("synth")) if cp.has_section("synth") else {}
    section.pop("seed", None)
    make = synth.lead_time_config if args.lead_time else synth.default_benchmark_config
    base = make(s["seed"], origin=GeoPoint(s["origin_lat"], s["origin_lon"]))
    cfg = synth.parse_synth_config(section, base)
    scenario = synth.generate(cfg)
    if args.out is None:
        sys.stdout.write(scenario.render()["reports"])
        return EXIT_OK
    paths = scenario.write(args.out)
    if args.history_days > 0:
        hist_cfg = synth.SynthConfig(**{**cfg.__dict__, "seed": s["seed"] + synth.HISTORY_SEED_OFFSET,
                                        "duration_ms": args.history_days * synth.DAY_MS})
        hist = synth.generate(hist_cfg)
        with open(args.out / "history_ground_truth.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write(hist.render()["ground_truth"])
    print(f"wrote {len(scenario.reports)} reports and {len(scenario.ground_truth)} records to {args.out}",
          file=sys.stderr)
    return EXIT_OK


def cmd_priors(args, s, cp) -> int:
    records = _load_ground_truth(args.ground_truth)
    if not records:
        raise UsageError(f"{args.ground_truth}: no ground-truth records")
    table = estimate_priors(records, grid_config(s), epsilon_floor=s["epsilon"], utc_offset_hours=s["utc_offset"])
    with output(args.out, "priors.csv") as fh:
        write_priors_csv(table, fh)
    return EXIT_OK


def _decision_obj(d) -> dict:
    return {"cluster_id": d.cluster_id, "decided_at_ms": d.decided_at_ms, "alert": d.alert,
            "p_incident": d.p_incident, "argmax_region": str(d.argmax_region),
            "joint_probability": d.joint_probability}


def _belief_obj(b) -> dict:
    return {"cluster_id": b.cluster_id, "p_incident": b.p_incident, "step_count": b.step_count,
            "last_updated_step": b.last_updated_step,
            "region_dist": {str(c): p for c, p in sorted(b.region_dist.items())}}


def _cluster_obj(c) -> dict:
    return {"cluster_id": c.id, "born_ms": c.born_ms, "status": c.status.value,
            "anchor": None if c.anchor is None else str(c.anchor),
            "members": [r.id for r in c.members], "covered_regions": [str(x) for x in sorted(c.covered_regions)]}


def _write_jsonl(path: Path, objs) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for o in objs:
            fh.write(json.dumps(o) + "\n")


def cmd_detect(args, s, cp) -> int:
    fcfg = fusion_config(s)
    grid = grid_config(s)
    reports = _load_reports(args.reports)
    table = _load_priors(args.priors, s["res"])
    strategy = s["grouping"]
    if args.scheme is not None or cp.has_option("classify", "scheme"):
        strategy = scheme_of(s).grouping or strategy
    if strategy not in STRATEGIES:
        raise UsageError(f"grouping must be one of {STRATEGIES}")
    det = Detector(grid, fcfg, table, strategy, s["eps"], s["min_pts"], threshold=s["threshold"],
                   utc_offset_hours=s["utc_offset"])
    result = det.run(reports)
    with output(args.out, "decisions.jsonl") as fh:
        for d in result.decisions:
            fh.write(json.dumps(_decision_obj(d)) + "\n")
    if args.dump_beliefs is not None:
        _write_jsonl(args.dump_beliefs, (_belief_obj(b) for b in result.beliefs))
    if args.dump_clusters is not None:
        _write_jsonl(args.dump_clusters, (_cluster_obj(c) for c in result.clusters))
    if args.ground_truth is not None:
        truth = _load_ground_truth(args.ground_truth)
        rep = evaluation.lead_time(result.decisions, truth, grid, fcfg.T_prime_ms)
        if args.out is None:
            sys.stderr.write(rep.render())
        else:
            (args.out / "lead_time.txt").write_text(rep.render(), encoding="utf-8")
    return EXIT_OK


def _rows(args, s, scheme: Scheme):
    if args.features is not None:
        _need(args.features, "feature file")
        with open(args.features, encoding="utf-8", newline="") as fh:
            try:
                rows = classify.read_feature_rows(fh)
            except ValueError as exc:
                raise UsageError(f"{args.features}: {exc}") from None
        missing = [n for n in scheme.features if rows and n not in rows[0].features]
        if missing:
            raise UsageError(f"{args.features}: scheme {scheme.value} needs columns {missing}")
    else:
        fcfg = fusion_config(s)
        grid = grid_config(s)
        reports = _load_reports(args.reports)
        truth = _load_ground_truth(args.ground_truth)
        table = _load_priors(args.priors, s["res"])
        strategies = (scheme.grouping,) if scheme.grouping else ()
        rows = build_feature_rows(reports, truth, table, grid, fcfg, strategies, s["eps"], s["min_pts"],
                                  s["utc_offset"])
    if args.dump_features is not None:
        args.dump_features.parent.mkdir(parents=True, exist_ok=True)
        with open(args.dump_features, "w", encoding="utf-8", newline="") as fh:
            classify.write_feature_rows(rows, fh)
    if not rows:
        raise DataError("no feature rows")
    return rows


def cmd_train(args, s, cp) -> int:
    scheme = scheme_of(s)
    rows = _rows(args, s, scheme)
    X, y = classify.design_matrix(rows, scheme.features)
    model = classify.fit_model(scheme.classifier, X, y, scheme.features, max_depth=s["max_depth"],
                               n_trees=s["n_trees"], seed=s["seed"])
    thr, f1 = classify.learn_threshold(classify.predict_proba(model, X), y)
    model.threshold = thr
    with output(args.out, "model.txt") as fh:
        classify.dump_model(model, fh)
    print(f"scheme={scheme.value} classifier={scheme.classifier} threshold={thr!r} train_f1={f1:.6f}",
          file=sys.stderr)
    return EXIT_OK


def cmd_evaluate(args, s, cp) -> int:
    scheme = scheme_of(s)
    rows = _rows(args, s, scheme)
    if s["k"] < 2:
        raise UsageError("--k must be at least 2")
    cv = evaluation.evaluate_scheme(rows, scheme, k=s["k"], seed=s["seed"], max_depth=s["max_depth"],
                                    n_trees=s["n_trees"])
    with output(args.out, "metrics.csv") as fh:
        evaluation.write_metrics_csv(scheme.value, cv, fh)
    m = cv.mean()
    print(f"scheme={scheme.value} folds={cv.path} precision={m['precision']:.4f} recall={m['recall']:.4f} "
          f"f1={m['f1']:.4f} auc={m['auc']:.4f}", file=sys.stderr)
    return EXIT_OK


SWEEP_KEYS = {"t_prime_min": ("T_prime_min", float), "t_step_min": ("t_s_min", float),
              "delta_m": ("delta_m", float), "res": ("res", int)}


def read_sweep_grid(path: Path, s: dict) -> evaluation.SweepGrid:
    _need(path, "grid file")
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise UsageError(f"bad grid file {path}: {exc}") from None
    if not cp.has_section("sweep"):
        raise UsageError(f"{path}: missing [sweep] section")
    unknown = set(cp.options("sweep")) - set(SWEEP_KEYS)
    if unknown:
        raise UsageError(f"{path}: unknown sweep keys {sorted(unknown)}")
    kw = {}
    for key, (field_, typ) in SWEEP_KEYS.items():
        raw = cp.get("sweep", key, fallback=None)
        try:
            kw[field_] = tuple(typ(v) for v in raw.split(",")) if raw is not None else (s[key],)
        except ValueError:
            raise UsageError(f"{path}: bad value list for {key}: {raw!r}") from None
    try:
        return evaluation.SweepGrid(**kw)
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None


def cmd_sweep(args, s, cp) -> int:
    scheme = scheme_of(s)
    grid = read_sweep_grid(args.grid, s)
    reports = _load_reports(args.reports)
    truth = _load_ground_truth(args.ground_truth)
    history = _load_ground_truth(args.history)
    if not history:
        raise UsageError(f"{args.history}: no ground-truth records")
    origin = GeoPoint(s["origin_lat"], s["origin_lon"])

    def run(fcfg):
        return evaluation.run_pipeline_metrics(reports, truth, history, origin, fcfg, scheme, k=s["k"],
                                               seed=s["seed"], eps=s["eps"], min_pts=s["min_pts"],
                                               utc_offset_hours=s["utc_offset"], max_depth=s["max_depth"],
                                               n_trees=s["n_trees"])

    rows = evaluation.sweep(grid, FusionConfig(), run)
    with output(args.out, "sweep.csv") as fh:
        evaluation.write_sweep_csv(rows, fh)
    for r in rows:
        if r.error:
            print(f"combination T'={r.T_prime_min} t_s={r.t_s_min} delta={r.delta_m} res={r.res} failed: {r.error}",
                  file=sys.stderr)
    best = evaluation.best_combo(rows)
    if best is None:
        raise DataError("every sweep combination failed")
    print(f"best T_prime_min={best.T_prime_min} t_s_min={best.t_s_min} delta_m={best.delta_m} res={best.res} "
          f"f1={best.metrics['f1']:.4f}", file=sys.stderr)
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "priors": cmd_priors, "detect": cmd_detect, "train": cmd_train,
            "evaluate": cmd_evaluate, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cp = load_config(args.config)
        s = resolve(args, cp)
        return COMMANDS[args.command](args, s, cp)
    except (UsageError, FormatError, InvalidInput, PriorEstimationError, synth.ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DataError, FitError, ThresholdError, UndefinedMetric) as exc:
        print(f"error: not enough data: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
