"""Per-step feature schemes and class-balanced classifiers.

Two model families are provided: an unregularised logistic regression
fitted with L-BFGS-B under a |w| <= 30 box (standardised feature space),
and a small random forest of Gini trees grown on balanced sample weights.
"""
from __future__ import annotations

import bisect
import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, Sequence

import numpy as np
from scipy.optimize import minimize

from .geo import CellId, GridConfig, cell_of

FEATURE_NAMES = ("avg_reliability", "report_count", "plausibility_seg", "plausibility_clu")
WEIGHT_BOUND = 30.0


class FitError(ValueError):
    """Training data cannot support a fit (e.g. a single class)."""


class NotFittedError(RuntimeError):
    pass


class ThresholdError(ValueError):
    pass


@dataclass
class FeatureRow:
    step: int
    region: CellId
    features: dict
    label: bool = False
    step_start_ms: int = 0


class Scheme(str, Enum):
    M1 = "M1"
    M2 = "M2"
    M3 = "M3"
    M4 = "M4"
    M5 = "M5"
    M6 = "M6"
    M7 = "M7"
    M8 = "M8"
    M9 = "M9"
    M10 = "M10"

    @property
    def classifier(self) -> str:
        return "forest" if int(self.value[1:]) % 2 else "logistic"

    @property
    def grouping(self) -> str | None:
        n = int(self.value[1:])
        if n <= 2:
            return None
        return "dbscan" if n in (3, 4, 7, 8) else "segmentation"

    @property
    def features(self) -> tuple[str, ...]:
        n = int(self.value[1:])
        base = ("avg_reliability", "report_count")
        plaus = ("plausibility_clu",) if self.grouping == "dbscan" else ("plausibility_seg",)
        if n <= 2:
            return base
        if n <= 6:
            return plaus
        return base + plaus


# -- features -----------------------------------------------------------------

def extract_baseline_features(reliabilities: Sequence[int]) -> dict:
    n = len(reliabilities)
    return {"avg_reliability": (sum(reliabilities) / n) if n else 0.0, "report_count": float(n)}


def extract_plausibility(joints: Iterable[dict], region: CellId) -> float:
    """Max joint posterior for ``region`` across the clusters that cover it."""
    return max((j[region] for j in joints if region in j), default=0.0)


def label_rows(rows: list[FeatureRow], ground_truth, grid: GridConfig, T_prime_ms: int) -> list[FeatureRow]:
    """Positive iff a record in the row's cell falls in [start, start + T')."""
    by_cell = defaultdict(list)
    for g in ground_truth:
        by_cell[cell_of(g.location, grid)].append(g.timestamp)
    for ts in by_cell.values():
        ts.sort()
    for row in rows:
        ts = by_cell.get(row.region, ())
        i = bisect.bisect_left(ts, row.step_start_ms)
        row.label = i < len(ts) and ts[i] < row.step_start_ms + T_prime_ms
    return rows


def design_matrix(rows: Sequence[FeatureRow], names: Sequence[str]):
    missing = [n for n in names if rows and n not in rows[0].features]
    if missing:
        raise FitError(f"rows lack feature columns {missing}")
    X = np.array([[r.features[n] for n in names] for r in rows], dtype=float).reshape(len(rows), len(names))
    y = np.array([bool(r.label) for r in rows], dtype=int)
    return X, y


def balanced_weights(y) -> np.ndarray:
    y = np.asarray(y, dtype=int)
    n = len(y)
    counts = np.bincount(y, minlength=2)
    if (counts == 0).any():
        raise FitError("both classes are required")
    return np.where(y == 1, n / (2.0 * counts[1]), n / (2.0 * counts[0]))


# -- logistic regression ------------------------------------------------------

@dataclass
class LinearModel:
    feature_names: tuple
    weights: np.ndarray
    intercept: float
    threshold: float | None = None
    info: dict = field(default_factory=dict, compare=False)

    kind = "logistic"


def _sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_loss_grad(theta, X, y, sw):
    """Weighted mean negative log-likelihood and its gradient.

    ``theta`` is ``[intercept, w_1..w_d]``.
    """
    z = theta[0] + X @ theta[1:]
    # log(1 + e^z) - y z, stably
    loss = np.sum(sw * (np.logaddexp(0.0, z) - y * z)) / len(y)
    r = sw * (_sigmoid(z) - y) / len(y)
    grad = np.concatenate([[r.sum()], X.T @ r])
    return loss, grad


def _projected_grad_norm(theta, grad, bounds):
    g = grad.copy()
    for i, (lo, hi) in enumerate(bounds):
        if lo is not None and theta[i] <= lo + 1e-12 and g[i] > 0:
            g[i] = 0.0
        if hi is not None and theta[i] >= hi - 1e-12 and g[i] < 0:
            g[i] = 0.0
    return float(np.linalg.norm(g))


def fit_logistic(X, y, feature_names: Sequence[str] | None = None, class_weight: str | None = "balanced",
                 max_iter: int = 1000, gtol: float = 1e-6) -> LinearModel:
    X = np.asarray(X, dtype=float)
    X = X.reshape(len(X), -1)
    y = np.asarray(y, dtype=int)
    if len(np.unique(y)) < 2:
        raise FitError("logistic fit needs both classes")
    sw = balanced_weights(y) if class_weight == "balanced" else np.ones(len(y))
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    Z = (X - mu) / sd
    d = X.shape[1]
    bounds = [(None, None)] + [(-WEIGHT_BOUND, WEIGHT_BOUND)] * d
    losses = []

    def fun(theta):
        return logistic_loss_grad(theta, Z, y, sw)

    res = minimize(
        fun, np.zeros(d + 1), jac=True, method="L-BFGS-B", bounds=bounds,
        callback=lambda th: losses.append(fun(th)[0]),
        options={"maxiter": max_iter, "gtol": gtol * 1e-3, "ftol": 0.0, "maxcor": 20},
    )
    theta = res.x
    _, g = fun(theta)
    w = theta[1:] / sd
    b = float(theta[0] - np.sum(theta[1:] * mu / sd))
    info = {"iterations": int(res.nit), "grad_norm": _projected_grad_norm(theta, g, bounds),
            "losses": losses, "standardized_theta": theta.copy()}
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{i}" for i in range(d))
    return LinearModel(names, w, b, info=info)


# -- random forest ------------------------------------------------------------

@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def depth(self) -> int:
        def walk(i):
            if self.left[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))
        return walk(0)

    def apply(self, X) -> np.ndarray:
        node = np.zeros(len(X), dtype=int)
        rows = np.arange(len(X))
        while True:
            inner = self.left[node] >= 0
            if not inner.any():
                return self.value[node]
            f = np.where(inner, self.feature[node], 0)
            go_left = X[rows, f] <= self.threshold[node]
            node = np.where(inner, np.where(go_left, self.left[node], self.right[node]), node)


def _best_split(X, y, w, feats):
    best = None
    total_w = w.sum()
    total_pos = (w * y).sum()
    parent = total_w - (total_pos ** 2 + (total_w - total_pos) ** 2) / total_w
    for f in feats:
        order = np.argsort(X[:, f], kind="stable")
        xs, ys, ws = X[order, f], y[order], w[order]
        cw = np.cumsum(ws)[:-1]
        cp = np.cumsum(ws * ys)[:-1]
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        rw = total_w - cw
        rp = total_pos - cp
        with np.errstate(divide="ignore", invalid="ignore"):
            imp = (cw - (cp ** 2 + (cw - cp) ** 2) / cw) + (rw - (rp ** 2 + (rw - rp) ** 2) / rw)
        imp = np.where(valid & (cw > 0) & (rw > 0), imp, np.inf)
        i = int(np.argmin(imp))
        if not np.isfinite(imp[i]):
            continue
        if best is None or imp[i] < best[0] - 1e-12:
            best = (imp[i], f, 0.5 * (xs[i] + xs[i + 1]))
    if best is None or best[0] >= parent - 1e-12:
        return None
    return best[1], best[2]


def _grow_tree(X, y, w, max_depth, n_sub, rng) -> Tree:
    feature, threshold, left, right, value = [], [], [], [], []

    def node(idx, depth):
        k = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        ww = w[idx]
        value.append(float((ww * y[idx]).sum() / ww.sum()))
        if depth >= max_depth or value[k] in (0.0, 1.0) or len(idx) < 2:
            return k
        feats = np.sort(rng.choice(X.shape[1], size=n_sub, replace=False))
        split = _best_split(X[idx], y[idx], ww, feats)
        if split is None:
            return k
        f, t = split
        mask = X[idx, f] <= t
        feature[k], threshold[k] = int(f), float(t)
        left[k] = node(idx[mask], depth + 1)
        right[k] = node(idx[~mask], depth + 1)
        return k

    node(np.arange(len(y)), 0)
    return Tree(np.array(feature), np.array(threshold), np.array(left), np.array(right), np.array(value))


@dataclass
class ForestModel:
    feature_names: tuple
    trees: list
    max_depth: int
    n_trees: int
    seed: int = 0
    threshold: float | None = None

    kind = "forest"


def fit_forest(X, y, feature_names: Sequence[str] | None = None, max_depth: int = 5, n_trees: int = 100,
               seed: int = 0, bootstrap: bool = True) -> ForestModel:
    X = np.asarray(X, dtype=float)
    X = X.reshape(len(X), -1)
    y = np.asarray(y, dtype=int)
    if len(np.unique(y)) < 2:
        raise FitError("forest fit needs both classes")
    base_w = balanced_weights(y)
    d = X.shape[1]
    n_sub = max(1, int(math.sqrt(d)))
    trees = []
    for child in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(child)
        if bootstrap:
            mult = np.bincount(rng.integers(0, len(y), len(y)), minlength=len(y)).astype(float)
        else:
            mult = np.ones(len(y))
        idx = np.flatnonzero(mult > 0)
        trees.append(_grow_tree(X[idx], y[idx], base_w[idx] * mult[idx], max_depth, n_sub, rng))
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{i}" for i in range(d))
    return ForestModel(names, trees, max_depth, n_trees, seed)


def predict_proba(model, X) -> np.ndarray:
    if model is None:
        raise NotFittedError("model has not been fitted")
    X = np.asarray(X, dtype=float)
    X = X.reshape(len(X), -1) if X.ndim > 1 else X.reshape(1, -1)
    if isinstance(model, LinearModel):
        if model.weights is None:
            raise NotFittedError("logistic model has no weights")
        return _sigmoid(model.intercept + X @ np.asarray(model.weights))
    if isinstance(model, ForestModel):
        if not model.trees:
            raise NotFittedError("forest has no trees")
        return np.mean([t.apply(X) for t in model.trees], axis=0)
    raise NotFittedError(f"unknown model type {type(model).__name__}")


def fit_model(kind: str, X, y, feature_names=None, max_depth: int = 5, n_trees: int = 100, seed: int = 0):
    if kind == "logistic":
        return fit_logistic(X, y, feature_names)
    if kind == "forest":
        return fit_forest(X, y, feature_names, max_depth=max_depth, n_trees=n_trees, seed=seed)
    raise ValueError(f"unknown classifier kind {kind!r}")


# -- decision threshold ---------------------------------------------------------

def _f1_at(probs, labels, thr):
    pred = probs >= thr
    tp = int(np.sum(pred & labels))
    fp = int(np.sum(pred & ~labels))
    fn = int(np.sum(~pred & labels))
    return 0.0 if tp == 0 else 2.0 * tp / (2.0 * tp + fp + fn)


def learn_threshold(probs, labels) -> tuple[float, float]:
    """F1-maximising cut over the observed probabilities (smallest on ties).

    Returns ``(threshold, f1)``; rows with prob >= threshold are positive.
    """
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    if not labels.any():
        raise ThresholdError("no positive labels to tune a threshold on")
    best_t, best_f = None, -1.0
    for t in np.unique(probs):
        f = _f1_at(probs, labels, t)
        if f > best_f:
            best_t, best_f = float(t), f
    return best_t, best_f


# -- serialisation --------------------------------------------------------------

FEATURE_CSV_HEADER = ["step", "step_start_ms", "cell"] + list(FEATURE_NAMES) + ["label"]


def write_feature_rows(rows: Iterable[FeatureRow], out: IO[str]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(FEATURE_CSV_HEADER)
    for r in rows:
        w.writerow([r.step, r.step_start_ms, str(r.region)]
                   + [repr(float(r.features.get(n, 0.0))) for n in FEATURE_NAMES] + [int(bool(r.label))])


def read_feature_rows(lines: Iterable[str]) -> list[FeatureRow]:
    """Read feature rows; only ``label`` is mandatory, other columns are optional."""
    rd = csv.DictReader(lines)
    if rd.fieldnames is None or "label" not in rd.fieldnames:
        raise ValueError("feature file needs a header with a 'label' column")
    names = [n for n in rd.fieldnames if n in FEATURE_NAMES]
    out = []
    for k, rec in enumerate(rd):
        try:
            label = int(rec["label"])
            if label not in (0, 1):
                raise ValueError
            feats = {n: float(rec[n]) for n in names}
            step = int(rec["step"]) if rec.get("step") not in (None, "") else k
            start = int(rec["step_start_ms"]) if rec.get("step_start_ms") not in (None, "") else 0
            cell = CellId.parse(rec["cell"]) if rec.get("cell") else CellId(0, 0, 0)
        except (TypeError, ValueError):
            raise ValueError(f"bad feature row {k + 2}: {rec}") from None
        out.append(FeatureRow(step, cell, feats, bool(label), start))
    return out


def dump_model(model, out: IO[str]) -> None:
    out.write(f"model={model.kind} version=1\n")
    out.write(f"features={','.join(model.feature_names)}\n")
    if model.threshold is not None:
        out.write(f"threshold={float(model.threshold)!r}\n")
    if isinstance(model, LinearModel):
        out.write(f"intercept={float(model.intercept)!r}\n")
        for name, w in zip(model.feature_names, model.weights):
            out.write(f"weight.{name}={float(w)!r}\n")
        return
    out.write(f"n_trees={model.n_trees}\nmax_depth={model.max_depth}\nseed={model.seed}\n")
    for k, t in enumerate(model.trees):
        out.write(f"tree={k} nodes={len(t.value)}\n")
        for i in range(len(t.value)):
            out.write(f"node={i} {int(t.feature[i])} {float(t.threshold[i])!r} "
                      f"{int(t.left[i])} {int(t.right[i])} {float(t.value[i])!r}\n")


def load_model(lines: Iterable[str]):
    lines = [ln.rstrip("\n") for ln in lines if ln.strip()]
    if not lines:
        raise ValueError("empty model file")
    head = dict(tok.split("=", 1) for tok in lines[0].split())
    if head.get("version") != "1" or head.get("model") not in ("logistic", "forest"):
        raise ValueError(f"unsupported model header {lines[0]!r}")
    kv = {}
    trees, cur = [], None
    for ln in lines[1:]:
        key, _, val = ln.partition("=")
        if key == "tree":
            cur = []
            trees.append(cur)
        elif key == "node":
            cur.append(val.split()[1:])
        else:
            kv[key] = val
    names = tuple(kv["features"].split(",")) if kv.get("features") else ()
    threshold = float(kv["threshold"]) if "threshold" in kv else None
    if head["model"] == "logistic":
        w = np.array([float(kv[f"weight.{n}"]) for n in names])
        return LinearModel(names, w, float(kv["intercept"]), threshold)
    built = []
    for nodes in trees:
        cols = list(zip(*nodes))
        built.append(Tree(np.array([int(v) for v in cols[0]]), np.array([float(v) for v in cols[1]]),
                          np.array([int(v) for v in cols[2]]), np.array([int(v) for v in cols[3]]),
                          np.array([float(v) for v in cols[4]])))
    return ForestModel(names, built, int(kv["max_depth"]), int(kv["n_trees"]), int(kv["seed"]), threshold)
