"""Streaming detection loop and per-(region, step) feature extraction.

``Detector`` walks the time steps in order: it groups each step's reports
into live clusters, folds them into the clusters' beliefs, and ticks the
alert/expire lifecycle. ``build_feature_rows`` runs the same loop to
record plausibility scores for the classifier.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from itertools import count
from typing import Callable, Sequence

import numpy as np

from . import fusion
from .classify import FeatureRow, extract_baseline_features, label_rows
from .fusion import BeliefState, DetectionDecision, FusionConfig, Status
from .geo import CellId, GridConfig, ReportArea, area_overlaps, cell_of
from .grouping import (
    Cluster,
    ClusterStatus,
    FeatureScaler,
    TimeStepConfig,
    associate,
    dbscan,
    raw_features,
    step_origin,
)
from .ingest import Report
from .priors import PriorTable, hour_of, lookup

STRATEGIES = ("segmentation", "dbscan")


@dataclass
class Track:
    cluster: Cluster
    belief: BeliefState
    hour: int
    decided: bool = False


@dataclass
class StepView:
    """What the detector knows at the end of one step."""
    step: int
    start_ms: int
    reports: list
    tracks: list

    def plausibility(self) -> dict:
        out: dict[CellId, float] = {}
        for t in self.tracks:
            for c, v in fusion.joint_posterior(t.belief.p_incident, t.belief.region_dist).items():
                if v > out.get(c, -1.0):
                    out[c] = v
        return out


@dataclass
class DetectResult:
    decisions: list = field(default_factory=list)
    clusters: list = field(default_factory=list)
    beliefs: list = field(default_factory=list)


class Detector:
    def __init__(self, grid: GridConfig, cfg: FusionConfig, priors: PriorTable,
                 strategy: str = "segmentation", eps: float = 0.8, min_pts: int = 2,
                 threshold: float | None = None, utc_offset_hours: float = 0.0):
        if strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")
        self.grid = grid
        self.cfg = cfg
        self.priors = priors
        self.strategy = strategy
        self.eps = eps
        self.min_pts = min_pts
        self.threshold = cfg.alert_threshold if threshold is None else threshold
        self.utc_offset_hours = utc_offset_hours
        self.time_cfg = TimeStepConfig(cfg.t_s_ms, cfg.T_prime_ms)

    def _new_track(self, reports, overlaps, ids, anchor=None) -> Track:
        born = min(r.pub_millis for r in reports)
        hour = hour_of(born, self.utc_offset_hours)
        cells = sorted({c for ov in overlaps for c in ov})
        cl = Cluster(id=f"C{next(ids)}", anchor=anchor)
        state = fusion.initial_belief(cl.id, cells, [lookup(self.priors, c, hour) for c in cells])
        return Track(cl, state, hour)

    def _group(self, batch, overlaps, live, ids, scaler, now_ms):
        """Split a step batch into (live-track index -> report indices, new tracks)."""
        assignment: dict[int, list[int]] = defaultdict(list)
        fresh: list[tuple[Track, list[int]]] = []
        if self.strategy == "segmentation":
            by_anchor = {t.cluster.anchor: k for k, t in enumerate(live)}
            pending: dict[CellId, list[int]] = {}
            for i, r in enumerate(batch):
                cell = cell_of(r.location, self.grid)
                k = by_anchor.get(cell)
                if k is not None and r.pub_millis - live[k].cluster.born_ms < self.cfg.T_prime_ms:
                    assignment[k].append(i)
                else:
                    pending.setdefault(cell, []).append(i)
            for cell, idx in pending.items():
                t = self._new_track([batch[i] for i in idx], [overlaps[i] for i in idx], ids, anchor=cell)
                fresh.append((t, idx))
            return assignment, fresh
        matches = associate(batch, [t.cluster for t in live], now_ms, scaler, self.eps,
                            self.cfg.T_prime_ms, self.grid)
        pos = {id(t.cluster): k for k, t in enumerate(live)}
        left = []
        for i, m in enumerate(matches):
            if m is None:
                left.append(i)
            else:
                assignment[pos[id(m)]].append(i)
        if left:
            feats = scaler.transform_raw(raw_features([batch[i] for i in left], self.grid))
            labels = dbscan(feats, self.eps, self.min_pts)
            for lab in sorted(set(labels.tolist()), key=lambda v: int(np.flatnonzero(labels == v)[0])):
                idx = [left[j] for j in np.flatnonzero(labels == lab)]
                t = self._new_track([batch[i] for i in idx], [overlaps[i] for i in idx], ids)
                fresh.append((t, idx))
        return assignment, fresh

    def run(self, reports: Sequence[Report], on_step: Callable[[StepView], None] | None = None,
            t0: int | None = None) -> DetectResult:
        reports = sorted(reports, key=lambda r: r.pub_millis)
        result = DetectResult()
        if not reports:
            return result
        t_s = self.cfg.t_s_ms
        if t0 is None:
            t0 = step_origin(reports[0].pub_millis, t_s)
        scaler = FeatureScaler.fit(reports, self.grid) if self.strategy == "dbscan" else None
        ids = count()
        live: list[Track] = []
        pos = 0
        m = 0
        n = len(reports)
        while pos < n or live:
            start = t0 + m * t_s
            end = start + t_s
            batch = []
            while pos < n and reports[pos].pub_millis < end:
                batch.append(reports[pos])
                pos += 1
            if not batch and not live:
                # jump over idle stretches
                m = (reports[pos].pub_millis - t0) // t_s
                continue
            overlaps = [area_overlaps(ReportArea(r.location, self.cfg.delta_m), self.grid) for r in batch]
            assignment, fresh = self._group(batch, overlaps, live, ids, scaler, end)
            for t, idx in fresh:
                live.append(t)
                assignment[len(live) - 1] = idx
            still = []
            for k, t in enumerate(live):
                idx = assignment.get(k, [])
                ps, ovs = [], []
                for i in idx:
                    t.cluster.add(batch[i], overlaps[i])
                    ps.append(fusion.reliability_to_prob(batch[i].reliability))
                    ovs.append(overlaps[i])
                new_cells = {c for ov in ovs for c in ov if c not in t.belief.region_dist}
                t.belief = fusion.sequential_update(
                    t.belief, ps, ovs, {c: lookup(self.priors, c, t.hour) for c in new_cells}, step=m)
                if t.decided:
                    if t.belief.step_count < self.cfg.max_steps:
                        still.append(t)
                    continue
                status, decision = fusion.lifecycle_tick(t.belief, self.cfg, self.threshold, end)
                if decision is not None:
                    result.decisions.append(decision)
                    t.decided = True
                if status == Status.ALERTED:
                    t.cluster.status = ClusterStatus.ALERTED
                    if t.belief.step_count < self.cfg.max_steps:
                        still.append(t)
                elif status == Status.EXPIRED:
                    t.cluster.status = ClusterStatus.EXPIRED
                else:
                    still.append(t)
            if on_step is not None:
                on_step(StepView(m, start, batch, live))
            kept = {id(t) for t in still}
            for t in live:
                if id(t) not in kept:
                    result.clusters.append(t.cluster)
                    result.beliefs.append(t.belief)
            live = still
            m += 1
        return result


# -- features -------------------------------------------------------------------

def build_feature_rows(reports: Sequence[Report], ground_truth, priors: PriorTable, grid: GridConfig,
                       cfg: FusionConfig, strategies: Sequence[str] = STRATEGIES, eps: float = 0.8,
                       min_pts: int = 2, utc_offset_hours: float = 0.0) -> list[FeatureRow]:
    """One row per (region, step) holding at least one report location."""
    reports = sorted(reports, key=lambda r: r.pub_millis)
    if not reports:
        return []
    t0 = step_origin(reports[0].pub_millis, cfg.t_s_ms)
    rows: dict[tuple[int, CellId], FeatureRow] = {}
    rel: dict[tuple[int, CellId], list[int]] = defaultdict(list)
    for r in reports:
        m = (r.pub_millis - t0) // cfg.t_s_ms
        rel[(m, cell_of(r.location, grid))].append(r.reliability)
    for (m, cell), rs in rel.items():
        feats = extract_baseline_features(rs)
        feats["plausibility_seg"] = 0.0
        feats["plausibility_clu"] = 0.0
        rows[(m, cell)] = FeatureRow(m, cell, feats, False, t0 + m * cfg.t_s_ms)

    for strategy in strategies:
        key = "plausibility_seg" if strategy == "segmentation" else "plausibility_clu"
        det = Detector(grid, cfg, priors, strategy, eps, min_pts, threshold=float("inf"),
                       utc_offset_hours=utc_offset_hours)

        def record(view: StepView, key=key):
            if not view.reports:
                return
            plaus = view.plausibility()
            for r in view.reports:
                row = rows[(view.step, cell_of(r.location, grid))]
                row.features[key] = plaus.get(row.region, 0.0)

        det.run(reports, on_step=record, t0=t0)
    out = sorted(rows.values(), key=lambda r: (r.step, r.region))
    return label_rows(out, ground_truth, grid, cfg.T_prime_ms)
