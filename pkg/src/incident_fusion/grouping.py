"""Time discretisation and grouping of reports into incident hypotheses."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from itertools import count
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .geo import CellId, GridConfig, InvalidInput, ReportArea, area_overlaps, cell_of, project_many
from .ingest import Report

NOISE = -1


@dataclass(frozen=True)
class TimeStepConfig:
    t_s_ms: int = 60_000
    T_prime_ms: int = 25 * 60_000

    def __post_init__(self):
        if not 0 < self.t_s_ms <= self.T_prime_ms:
            raise InvalidInput("need 0 < t_s_ms <= T_prime_ms")
        if self.T_prime_ms % self.t_s_ms:
            raise InvalidInput("T_prime_ms must be an integer multiple of t_s_ms")


class ClusterStatus(str, Enum):
    ACTIVE = "active"
    ALERTED = "alerted"
    EXPIRED = "expired"


@dataclass
class Cluster:
    id: str
    members: list = field(default_factory=list)
    born_ms: int = 0
    covered_regions: set = field(default_factory=set)
    status: ClusterStatus = ClusterStatus.ACTIVE
    anchor: CellId | None = None  # seeding region for segmentation clusters

    def add(self, report: Report, regions: Iterable[CellId] = ()) -> None:
        self.born_ms = min(self.born_ms, report.pub_millis) if self.members else report.pub_millis
        self.members.append(report)
        self.covered_regions.update(regions)


# -- time -------------------------------------------------------------------

def step_origin(first_ms: int, t_s_ms: int) -> int:
    return (first_ms // t_s_ms) * t_s_ms


def discretize(reports: Sequence[Report], cfg: TimeStepConfig, t0: int | None = None):
    """Bucket time-sorted reports into half-open steps of ``t_s_ms``.

    Returns ``[(m, [reports...]), ...]`` covering every step from the first
    to the last non-empty one, empty steps included.
    """
    if not reports:
        return []
    if t0 is None:
        t0 = step_origin(reports[0].pub_millis, cfg.t_s_ms)
    last = (reports[-1].pub_millis - t0) // cfg.t_s_ms
    steps = [(m, []) for m in range(last + 1)]
    for r in reports:
        m = (r.pub_millis - t0) // cfg.t_s_ms
        if m < 0:
            raise InvalidInput(f"report {r.id} precedes the step origin")
        steps[m][1].append(r)
    return steps


def cluster_time_period(c: Cluster) -> int:
    times = [r.pub_millis for r in c.members]
    return max(times) - min(times)


# -- segmentation -------------------------------------------------------------

def report_regions(r: Report, grid: GridConfig, delta_m: float) -> dict:
    return area_overlaps(ReportArea(r.location, delta_m), grid)


def segment_group(reports: Sequence[Report], grid: GridConfig, T_prime_ms: int,
                  delta_m: float = 100.0) -> list[Cluster]:
    """Region-anchored grouping.

    A report joins the open cluster of its own cell if that cluster was
    born less than ``T_prime_ms`` earlier, otherwise it seeds a new one.
    """
    ids = count()
    open_by_cell: dict[CellId, Cluster] = {}
    out = []
    for r in sorted(reports, key=lambda r: r.pub_millis):
        cell = cell_of(r.location, grid)
        c = open_by_cell.get(cell)
        if c is None or r.pub_millis - c.born_ms >= T_prime_ms:
            c = Cluster(id=f"S{next(ids)}", anchor=cell)
            open_by_cell[cell] = c
            out.append(c)
        c.add(r, report_regions(r, grid, delta_m))
    return out


# -- density clustering -----------------------------------------------------

@dataclass(frozen=True)
class FeatureScaler:
    """z-score parameters for (x_m, y_m, t_ms) report features."""
    mean: tuple
    std: tuple
    origin: object

    @classmethod
    def fit(cls, reports: Sequence[Report], grid: GridConfig) -> "FeatureScaler":
        raw = raw_features(reports, grid)
        if len(raw) == 0:
            return cls((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), grid.origin)
        std = raw.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return cls(tuple(raw.mean(axis=0)), tuple(std), grid.origin)

    def transform_raw(self, raw: np.ndarray) -> np.ndarray:
        return (raw - np.asarray(self.mean)) / np.asarray(self.std)


def raw_features(reports: Sequence[Report], grid: GridConfig) -> np.ndarray:
    if not reports:
        return np.zeros((0, 3))
    xy = project_many([r.location.lat for r in reports], [r.location.lon for r in reports], grid.origin)
    t = np.array([r.pub_millis for r in reports], dtype=float)
    return np.column_stack([xy, t])


def standardize(reports: Sequence[Report], grid: GridConfig) -> np.ndarray:
    """Per-batch z-scored (x, y, t) features."""
    return FeatureScaler.fit(reports, grid).transform_raw(raw_features(reports, grid))


def dbscan(features, eps: float, min_pts: int = 2, promote_noise: bool = True) -> np.ndarray:
    """Density clustering with deterministic, index-ordered expansion.

    With ``promote_noise`` every noise point becomes its own singleton
    cluster (numbered after the dense clusters).
    """
    if eps <= 0 or min_pts < 1:
        raise InvalidInput("need eps > 0 and min_pts >= 1")
    X = np.asarray(features, dtype=float)
    n = len(X)
    if n == 0:
        return np.zeros(0, dtype=int)
    X = X.reshape(n, -1)
    tree = cKDTree(X)
    hoods = [sorted(h) for h in tree.query_ball_point(X, eps)]
    labels = np.full(n, NOISE, dtype=int)
    visited = np.zeros(n, dtype=bool)
    k = 0
    for i in range(n):
        if visited[i]:
            continue
        visited[i] = True
        if len(hoods[i]) < min_pts:
            continue
        labels[i] = k
        queue = list(hoods[i])
        head = 0
        while head < len(queue):
            j = queue[head]
            head += 1
            if labels[j] == NOISE:
                labels[j] = k
            if visited[j]:
                continue
            visited[j] = True
            if len(hoods[j]) >= min_pts:
                queue.extend(hoods[j])
        k += 1
    if promote_noise:
        for i in np.flatnonzero(labels == NOISE):
            labels[i] = k
            k += 1
    return labels


class UndefinedScore(ValueError):
    pass


def silhouette(features, labels) -> float:
    X = np.asarray(features, dtype=float)
    labels = np.asarray(labels)
    X = X.reshape(len(labels), -1)
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise UndefinedScore("silhouette needs at least 2 clusters")
    D = cdist(X, X)
    idx = {u: np.flatnonzero(labels == u) for u in uniq}
    scores = np.zeros(len(X))
    for i in range(len(X)):
        own = idx[labels[i]]
        if len(own) == 1:
            continue
        a = D[i, own].sum() / (len(own) - 1)
        b = min(D[i, idx[u]].mean() for u in uniq if u != labels[i])
        m = max(a, b)
        scores[i] = (b - a) / m if m > 0 else 0.0
    return float(scores.mean())


DEFAULT_EPS_GRID = (0.5, 0.6, 0.7, 0.8, 0.9)


def sweep_eps(features, eps_values: Sequence[float] = DEFAULT_EPS_GRID, min_pts: int = 2):
    """Pick the eps with the best silhouette over the non-noise points.

    Candidates with fewer than two dense clusters score -inf; ties favour
    the smaller eps. Returns ``(best_eps, {eps: score})``.
    """
    X = np.asarray(features, dtype=float)
    scores = {}
    for eps in eps_values:
        lab = dbscan(X, eps, min_pts, promote_noise=False)
        keep = lab != NOISE
        if len(np.unique(lab[keep])) < 2:
            scores[eps] = -math.inf
            continue
        scores[eps] = silhouette(X[keep], lab[keep])
    best = max(scores.values())
    if best == -math.inf:
        raise UndefinedScore("no eps candidate produced two or more clusters")
    best_eps = min(e for e, s in scores.items() if s == best)
    return best_eps, scores


# -- report / cluster association -------------------------------------------

def associate(new_reports: Sequence[Report], clusters: Sequence[Cluster], now_ms: int,
              scaler: FeatureScaler, eps: float, T_prime_ms: int, grid: GridConfig):
    """Match each new report to at most one live cluster.

    A report goes to the cluster whose nearest member is closest in
    standardised space-time, if that distance is <= eps and the cluster is
    younger than ``T_prime_ms``; ties prefer the earlier-born cluster.
    Returns one cluster (or ``None``) per report.
    """
    live = [c for c in clusters if c.status != ClusterStatus.EXPIRED and now_ms - c.born_ms <= T_prime_ms]
    if not new_reports:
        return []
    if not live:
        return [None] * len(new_reports)
    q = scaler.transform_raw(raw_features(new_reports, grid))
    out = []
    member_feats = [scaler.transform_raw(raw_features(c.members, grid)) for c in live]
    for i in range(len(new_reports)):
        best = None
        for c, mf in zip(live, member_feats):
            d = float(np.sqrt(((mf - q[i]) ** 2).sum(axis=1)).min())
            if d > eps:
                continue
            key = (d, c.born_ms)
            if best is None or key < best[0]:
                best = (key, c)
        out.append(best[1] if best else None)
    return out
