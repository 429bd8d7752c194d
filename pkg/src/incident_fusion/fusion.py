"""Bayesian fusion of report reliabilities.

Detection is a two-class naive Bayes over "incident" vs "no incident";
localization weights each covered cell by the product of the reports'
circle overlaps with it, times the cell prior. Both are evaluated in
log space. A cluster's posterior at one step becomes its prior at the
next.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .geo import CellId, InvalidInput

P_CLAMP = 1e-9


class DegenerateLocalization(ValueError):
    """Every candidate region is ruled out by at least one report."""


@dataclass(frozen=True)
class FusionConfig:
    delta_m: float = 100.0
    T_prime_ms: int = 25 * 60_000
    t_s_ms: int = 60_000
    resolution: int = 6
    alert_threshold: float = 0.5

    def __post_init__(self):
        if not (self.delta_m > 0 and self.T_prime_ms > 0 and self.t_s_ms > 0):
            raise InvalidInput("delta_m, T_prime_ms and t_s_ms must be positive")
        if self.resolution < 0:
            raise InvalidInput("resolution must be >= 0")
        if self.T_prime_ms % self.t_s_ms:
            raise InvalidInput("T_prime_ms must be a multiple of t_s_ms")

    @property
    def max_steps(self) -> int:
        return self.T_prime_ms // self.t_s_ms


@dataclass(frozen=True)
class BeliefState:
    cluster_id: str
    p_incident: float
    region_dist: dict = field(default_factory=dict)  # CellId -> P(R | I=1, evidence)
    step_count: int = 0
    last_updated_step: int = -1


class Status(str, Enum):
    ACTIVE = "active"
    ALERTED = "alerted"
    EXPIRED = "expired"


@dataclass(frozen=True)
class DetectionDecision:
    cluster_id: str
    decided_at_ms: int
    alert: bool
    p_incident: float
    argmax_region: CellId
    joint_probability: float


def reliability_to_prob(r: int) -> float:
    if isinstance(r, bool) or int(r) != r or not 1 <= r <= 10:
        raise InvalidInput(f"reliability {r!r} outside integers 1..10")
    return r / 10.0


def clamp_prob(p: float) -> float:
    return min(max(p, P_CLAMP), 1.0 - P_CLAMP)


def _log_sigmoid_ratio(log1: float, log0: float) -> float:
    # log1, log0: unnormalised log-masses of the two classes
    d = log0 - log1
    if d > 0:
        e = math.exp(-d)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(d))


def detect_posterior(p_list: Sequence[float], prior_incident: float) -> float:
    """P(incident | reports) for independent reports with hit rates ``p_list``."""
    if not 0.0 < prior_incident < 1.0:
        raise InvalidInput(f"prior {prior_incident} must lie strictly inside (0, 1)")
    if len(p_list) == 0:
        return prior_incident
    log1 = math.log(prior_incident)
    log0 = math.log1p(-prior_incident)
    for p in p_list:
        if not 0.0 < p < 1.0:
            raise InvalidInput(f"report probability {p} must lie strictly inside (0, 1); clamp first")
        log1 += math.log(p)
        log0 += math.log1p(-p)
    return _log_sigmoid_ratio(log1, log0)


def localize_posterior(overlaps, region_priors) -> np.ndarray:
    """Posterior over regions given an incident.

    ``overlaps`` is n_reports x n_regions; regions any report misses get 0.
    """
    ov = np.asarray(overlaps, dtype=float)
    pri = np.asarray(region_priors, dtype=float)
    if ov.ndim == 1:
        ov = ov.reshape(1, -1)
    if ov.shape[1] != pri.shape[0]:
        raise InvalidInput(f"overlap columns {ov.shape[1]} != number of priors {pri.shape[0]}")
    if ov.shape[0] == 0:
        ov = np.ones((0, pri.shape[0]))
    if np.any(ov < 0) or np.any(ov > 1) or np.any(pri < 0):
        raise InvalidInput("overlaps must lie in [0, 1] and priors be non-negative")
    alive = np.all(ov > 0, axis=0) & (pri > 0)
    if not alive.any():
        raise DegenerateLocalization("no region has a positive numerator")
    logs = np.full(pri.shape[0], -np.inf)
    with np.errstate(divide="ignore"):
        logs[alive] = np.log(ov[:, alive]).sum(axis=0) + np.log(pri[alive])
    logs -= logs[alive].max()
    w = np.where(alive, np.exp(logs), 0.0)
    return w / w.sum()


def localize_fallback(overlaps, region_priors) -> np.ndarray:
    """Overlap-sum weighting used when the strict product degenerates."""
    ov = np.asarray(overlaps, dtype=float).reshape(-1, len(region_priors))
    w = ov.sum(axis=0) * np.asarray(region_priors, dtype=float)
    if w.sum() <= 0:
        w = np.asarray(region_priors, dtype=float)
    return w / w.sum()


def localize(overlaps, region_priors) -> np.ndarray:
    try:
        return localize_posterior(overlaps, region_priors)
    except DegenerateLocalization:
        return localize_fallback(overlaps, region_priors)


def joint_posterior(p_incident: float, region_dist: Mapping[CellId, float]) -> dict:
    return {c: p_incident * v for c, v in region_dist.items()}


def initial_belief(cluster_id: str, cells: Sequence[CellId], cell_priors: Sequence[float]) -> BeliefState:
    """Belief before any evidence: P(I=1) = sum of covered priors."""
    total = float(sum(cell_priors))
    if not 0.0 < total < 1.0:
        raise InvalidInput(f"covered priors sum to {total}; need (0, 1)")
    dist = {c: p / total for c, p in zip(cells, cell_priors)}
    return BeliefState(cluster_id, total, dist, 0, -1)


def sequential_update(state: BeliefState, p_values: Sequence[float],
                      overlaps: Sequence[Mapping[CellId, float]],
                      new_region_priors: Mapping[CellId, float] | None = None,
                      step: int | None = None) -> BeliefState:
    """Fold one step's reports into a cluster's belief.

    ``overlaps`` holds one {cell: fraction} map per report. Cells not yet
    in the belief enter with their table prior from ``new_region_priors``;
    existing cells carry their previous joint posterior. With no reports
    only the step counter advances.
    """
    if len(p_values) != len(overlaps):
        raise InvalidInput("need one overlap map per report")
    next_step = state.last_updated_step + 1 if step is None else step
    if not p_values:
        return replace(state, step_count=state.step_count + 1, last_updated_step=next_step)

    new_region_priors = new_region_priors or {}
    regions = list(state.region_dist)
    known = set(regions)
    for ov in overlaps:
        for c in sorted(ov):
            if c not in known and ov[c] > 0:
                regions.append(c)
                known.add(c)
    priors = []
    for c in regions:
        if c in state.region_dist:
            priors.append(state.p_incident * state.region_dist[c])
        else:
            if c not in new_region_priors:
                raise InvalidInput(f"no prior supplied for newly covered region {c}")
            priors.append(new_region_priors[c])
    pri = np.asarray(priors, dtype=float)
    pri = pri / pri.sum()
    ov = np.array([[m.get(c, 0.0) for c in regions] for m in overlaps])
    dist = localize(ov, pri)
    p = detect_posterior([clamp_prob(v) for v in p_values], clamp_prob(state.p_incident))
    return BeliefState(
        state.cluster_id,
        p,
        {c: float(v) for c, v in zip(regions, dist)},
        state.step_count + 1,
        next_step,
    )


def argmax_region(region_dist: Mapping[CellId, float]) -> CellId:
    # ties go to the smallest cell id
    return min(region_dist, key=lambda c: (-region_dist[c], c))


def make_decision(state: BeliefState, decided_at_ms: int, alert: bool) -> DetectionDecision:
    best = argmax_region(state.region_dist)
    return DetectionDecision(
        state.cluster_id, decided_at_ms, alert, state.p_incident, best,
        state.p_incident * state.region_dist[best],
    )


def lifecycle_tick(state: BeliefState, cfg: FusionConfig, threshold: float,
                   decided_at_ms: int = 0) -> tuple[Status, DetectionDecision | None]:
    if state.p_incident >= threshold:
        return Status.ALERTED, make_decision(state, decided_at_ms, True)
    if state.step_count >= cfg.max_steps:
        return Status.EXPIRED, make_decision(state, decided_at_ms, False)
    return Status.ACTIVE, None
