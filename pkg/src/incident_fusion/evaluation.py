"""Classification metrics, k-fold cross-validation, sweeps and lead times."""
from __future__ import annotations

import bisect
import csv
import itertools
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import IO, Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from .classify import FitError, design_matrix, fit_model, learn_threshold, predict_proba, Scheme
from .fusion import FusionConfig
from .geo import GridConfig, cell_of

MINUTE_MS = 60_000


class UndefinedMetric(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @classmethod
    def from_predictions(cls, pred, labels) -> "ConfusionCounts":
        pred = np.asarray(pred, dtype=bool)
        labels = np.asarray(labels, dtype=bool)
        return cls(int(np.sum(pred & labels)), int(np.sum(pred & ~labels)),
                   int(np.sum(~pred & ~labels)), int(np.sum(~pred & labels)))


def _ratio(a, b):
    return a / b if b else 0.0


def precision_recall_f1(c: ConfusionCounts) -> tuple[float, float, float]:
    p = _ratio(c.tp, c.tp + c.fp)
    r = _ratio(c.tp, c.tp + c.fn)
    return p, r, _ratio(2 * p * r, p + r)


def roc_auc(scores, labels) -> float:
    """Mann-Whitney estimate: P(random positive outscores random negative), ties count 1/2."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("AUC needs both classes")
    ranks = rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


# -- cross-validation ---------------------------------------------------------

@dataclass
class FoldResult:
    fold: int
    precision: float
    recall: float
    f1: float
    auc: float
    threshold: float


@dataclass
class CVResult:
    folds: list = field(default_factory=list)
    path: str = "shuffle"
    partition: list = field(default_factory=list)

    def mean(self) -> dict:
        keys = ("precision", "recall", "f1", "auc")
        return {k: float(sum(getattr(f, k) for f in self.folds) / len(self.folds)) for k in keys}


def _both_classes(y, idx) -> bool:
    vals = y[idx]
    return bool(vals.any() and not vals.all())


def _partition_ok(y, folds) -> bool:
    all_idx = np.arange(len(y))
    for f in folds:
        train = np.setdiff1d(all_idx, f)
        if not _both_classes(y, train) or not _both_classes(y, f):
            return False
    return True


def make_folds(y, k: int = 5, seed: int = 0):
    """Shuffled near-equal folds; re-shuffles up to 10 times, then stratifies.

    Returns ``(folds, path)`` where ``path`` names the route taken.
    """
    y = np.asarray(y, dtype=bool)
    n = len(y)
    if n < k:
        raise FitError(f"need at least {k} rows for {k}-fold CV, got {n}")
    rng = np.random.default_rng(seed)
    for attempt in range(11):
        folds = np.array_split(rng.permutation(n), k)
        if _partition_ok(y, folds):
            return [np.sort(f) for f in folds], ("shuffle" if attempt == 0 else f"reshuffle({attempt})")
    # stratified: deal each class round-robin after shuffling
    order = np.concatenate([rng.permutation(np.flatnonzero(y)), rng.permutation(np.flatnonzero(~y))])
    buckets = [[] for _ in range(k)]
    for j, i in enumerate(order):
        buckets[j % k].append(i)
    folds = [np.sort(np.array(b, dtype=int)) for b in buckets]
    if not _partition_ok(y, folds):
        raise FitError("too few rows of one class to give every fold both classes")
    return folds, "stratified"


def kfold_cv(X, y, fit: Callable, k: int = 5, seed: int = 0) -> CVResult:
    """Fit on k-1 folds, tune the F1 threshold on the training fold, score the held-out fold."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    folds, path = make_folds(y, k, seed)
    res = CVResult(path=path, partition=folds)
    all_idx = np.arange(len(y))
    for i, test in enumerate(folds):
        train = np.setdiff1d(all_idx, test)
        model = fit(X[train], y[train])
        thr, _ = learn_threshold(predict_proba(model, X[train]), y[train])
        prob = predict_proba(model, X[test])
        counts = ConfusionCounts.from_predictions(prob >= thr, y[test])
        p, r, f1 = precision_recall_f1(counts)
        res.folds.append(FoldResult(i, p, r, f1, roc_auc(prob, y[test]), thr))
    return res


def evaluate_scheme(rows, scheme: Scheme, k: int = 5, seed: int = 0, max_depth: int = 5,
                    n_trees: int = 100) -> CVResult:
    X, y = design_matrix(rows, scheme.features)

    def fit(Xtr, ytr):
        return fit_model(scheme.classifier, Xtr, ytr, scheme.features, max_depth=max_depth,
                         n_trees=n_trees, seed=seed)

    return kfold_cv(X, y, fit, k=k, seed=seed)


METRICS_HEADER = ["scheme", "fold", "precision", "recall", "f1", "auc"]


def write_metrics_csv(scheme: str, cv: CVResult, out: IO[str]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for f in cv.folds:
        w.writerow([scheme, f.fold, f"{f.precision:.6f}", f"{f.recall:.6f}", f"{f.f1:.6f}", f"{f.auc:.6f}"])
    m = cv.mean()
    w.writerow([scheme, "mean", f"{m['precision']:.6f}", f"{m['recall']:.6f}", f"{m['f1']:.6f}", f"{m['auc']:.6f}"])


# -- hyper-parameter sweep ------------------------------------------------------

@dataclass(frozen=True)
class SweepGrid:
    T_prime_min: tuple = (25,)
    t_s_min: tuple = (1,)
    delta_m: tuple = (100.0,)
    res: tuple = (6,)

    def __post_init__(self):
        for name in ("T_prime_min", "t_s_min", "delta_m", "res"):
            vals = getattr(self, name)
            if not vals:
                raise ValueError(f"sweep grid {name} is empty")
            if any(v < 0 or (v == 0 and name != "res") for v in vals):
                raise ValueError(f"sweep grid {name} needs positive values")

    def combos(self):
        return itertools.product(self.T_prime_min, self.t_s_min, self.delta_m, self.res)


SWEEP_HEADER = ["T_prime_min", "t_s_min", "delta_m", "res", "precision", "recall", "f1", "auc"]


@dataclass
class SweepRow:
    T_prime_min: float
    t_s_min: float
    delta_m: float
    res: int
    metrics: dict | None
    error: str | None = None


def run_pipeline_metrics(reports, ground_truth, history, origin, fusion_cfg: FusionConfig, scheme: Scheme,
                         k: int = 5, seed: int = 0, eps: float = 0.8, min_pts: int = 2,
                         utc_offset_hours: float = 0.0, max_depth: int = 5, n_trees: int = 100) -> dict:
    """Priors from ``history`` -> feature rows -> k-fold metrics for one configuration."""
    from .pipeline import build_feature_rows
    from .priors import estimate_priors

    grid = GridConfig(origin, fusion_cfg.resolution)
    table = estimate_priors(history, grid, utc_offset_hours=utc_offset_hours)
    strategies = (scheme.grouping,) if scheme.grouping else ()
    rows = build_feature_rows(reports, ground_truth, table, grid, fusion_cfg, strategies, eps, min_pts,
                              utc_offset_hours)
    return evaluate_scheme(rows, scheme, k, seed, max_depth, n_trees).mean()


def sweep(grid: SweepGrid, base: FusionConfig, run: Callable[[FusionConfig], dict]) -> list[SweepRow]:
    """Evaluate ``run`` at every grid point; failures are recorded, not raised."""
    out = []
    for tp, ts, delta, res in grid.combos():
        try:
            cfg = replace(base, T_prime_ms=int(round(tp * MINUTE_MS)), t_s_ms=int(round(ts * MINUTE_MS)),
                          delta_m=float(delta), resolution=int(res))
            out.append(SweepRow(tp, ts, delta, int(res), run(cfg)))
        except Exception as exc:  # noqa: BLE001 - sweep keeps going
            out.append(SweepRow(tp, ts, delta, int(res), None, f"{type(exc).__name__}: {exc}"))
    return out


def best_combo(rows: Sequence[SweepRow]) -> SweepRow | None:
    ok = [r for r in rows if r.metrics is not None]
    return max(ok, key=lambda r: r.metrics["f1"]) if ok else None


def _fmt_num(v) -> str:
    return repr(int(v)) if float(v).is_integer() else repr(float(v))


def write_sweep_csv(rows: Sequence[SweepRow], out: IO[str]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in rows:
        m = r.metrics or {}
        vals = [f"{m[k]:.6f}" if k in m else "nan" for k in ("precision", "recall", "f1", "auc")]
        w.writerow([_fmt_num(r.T_prime_min), _fmt_num(r.t_s_min), _fmt_num(r.delta_m), r.res] + vals)


# -- lead time --------------------------------------------------------------------

@dataclass
class LeadMatch:
    cluster_id: str
    decided_at_ms: int
    record_ms: int
    lead_min: float


@dataclass
class LeadTimeReport:
    matches: list = field(default_factory=list)
    unmatched: int = 0

    @property
    def leads(self) -> list[float]:
        return [m.lead_min for m in self.matches]

    @property
    def mean_lead_min(self) -> float:
        return float(np.mean(self.leads)) if self.matches else float("nan")

    def render(self) -> str:
        lines = [f"cluster={m.cluster_id} decided_at_ms={m.decided_at_ms} record_ms={m.record_ms} "
                 f"lead_min={m.lead_min:.4f}" for m in self.matches]
        lines.append(f"matched={len(self.matches)} unmatched={self.unmatched}")
        lines.append(f"mean_lead_min={self.mean_lead_min:.4f}")
        return "\n".join(lines) + "\n"


def lead_time(decisions, ground_truth, grid: GridConfig, T_prime_ms: int) -> LeadTimeReport:
    """Match each alert to the nearest-in-time record in its argmax region within +/- T'.

    Lead is (record time - alert time) in minutes: positive means the alert
    came first.
    """
    by_cell = defaultdict(list)
    for g in ground_truth:
        by_cell[cell_of(g.location, grid)].append(g.timestamp)
    for ts in by_cell.values():
        ts.sort()
    rep = LeadTimeReport()
    for d in decisions:
        if not d.alert:
            continue
        ts = by_cell.get(d.argmax_region, [])
        i = bisect.bisect_left(ts, d.decided_at_ms)
        cands = [ts[j] for j in (i - 1, i) if 0 <= j < len(ts) and abs(ts[j] - d.decided_at_ms) <= T_prime_ms]
        if not cands:
            rep.unmatched += 1
            continue
        rec = min(cands, key=lambda t: (abs(t - d.decided_at_ms), t))
        rep.matches.append(LeadMatch(d.cluster_id, d.decided_at_ms, rec, (rec - d.decided_at_ms) / MINUTE_MS))
    return rep
