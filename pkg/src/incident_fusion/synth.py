"""Seeded synthetic incident/report scenarios.

Incidents arrive per cell-hour as Poisson events. Each one produces an
official record after a fixed recording delay and a Poisson number of
crowd reports that precede the record by exponential lead times and are
scattered around the incident with Gaussian jitter. Unrelated "false"
reports are sprinkled uniformly in space and time.
"""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geo import (
    CellId,
    GeoPoint,
    GridConfig,
    InvalidInput,
    LocalXY,
    axial_center_xy,
    cell_of_xy,
    cells_within,
    edge_length_m,
    unproject,
)
from .ingest import GroundTruthRecord, Report, write_ground_truth, write_reports

NASHVILLE = GeoPoint(36.1627, -86.7816)
OCT_1_2019_MS = 1_569_888_000_000
DAY_MS = 86_400_000
HOUR_MS = 3_600_000

TRUE_RELIABILITY = (0.01, 0.03, 0.07, 0.11, 0.17, 0.21, 0.17, 0.12, 0.07, 0.04)
FALSE_RELIABILITY = (0.18, 0.27, 0.23, 0.14, 0.09, 0.04, 0.02, 0.01, 0.01, 0.01)
# relative incident intensity by hour of day: quiet nights, morning and evening peaks
RUSH_HOUR_PROFILE = (0.2, 0.15, 0.1, 0.1, 0.15, 0.4, 1.0, 2.2, 2.6, 1.4, 0.9, 0.9,
                     1.0, 1.0, 1.1, 1.5, 2.4, 2.8, 1.8, 1.0, 0.7, 0.5, 0.4, 0.3)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ForcedIncident:
    cell_q: int
    cell_r: int
    offset_ms: int
    n_reports: int


@dataclass(frozen=True)
class SynthConfig:
    origin: GeoPoint = NASHVILLE
    resolution: int = 6
    extent_radius_m: float = 41_500.0
    start_ms: int = OCT_1_2019_MS
    duration_ms: int = 14 * DAY_MS
    incident_rate: float = 0.004          # per cell-hour, before hotspot scaling
    hotspot_shape: float = 1.0            # gamma shape of per-cell rate multipliers; 0 = uniform
    map_seed: int = 2019                  # fixes the hotspot map across scenario seeds
    hourly_profile: tuple = ()            # 24 relative weights for incident hour; () = flat
    reports_per_incident_mean: float = 4.0
    report_location_sigma_m: float = 100.0
    report_lead_mean_ms: float = 6 * 60_000
    recording_delay_ms: int = 15 * 60_000
    false_report_rate: float = 0.03       # per cell-hour
    true_reliability: tuple = TRUE_RELIABILITY
    false_reliability: tuple = FALSE_RELIABILITY
    forced_incidents: tuple = ()
    seed: int = 0

    def validate(self) -> None:
        for name in ("incident_rate", "false_report_rate", "reports_per_incident_mean",
                     "report_lead_mean_ms", "recording_delay_ms", "hotspot_shape", "duration_ms"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not self.report_location_sigma_m > 0:
            raise ConfigError("report_location_sigma_m must be > 0")
        for name in ("true_reliability", "false_reliability"):
            pmf = getattr(self, name)
            if len(pmf) != 10 or any(p < 0 for p in pmf) or abs(sum(pmf) - 1.0) > 1e-9:
                raise ConfigError(f"{name} must be 10 non-negative probabilities summing to 1")
        prof = self.hourly_profile
        if prof and (len(prof) != 24 or any(w < 0 for w in prof) or sum(prof) <= 0):
            raise ConfigError("hourly_profile must be 24 non-negative weights with a positive sum")
        if not self.cells():
            raise ConfigError("extent contains no grid cells")

    @property
    def grid(self) -> GridConfig:
        return GridConfig(self.origin, self.resolution)

    def cells(self) -> list[CellId]:
        if self.extent_radius_m <= 0:
            return []
        edge = edge_length_m(self.resolution)
        k = int(self.extent_radius_m // (1.5 * edge)) + 1
        out = []
        for c in cells_within(CellId(self.resolution, 0, 0), k):
            x, y = axial_center_xy(c.q, c.r, edge)
            if math.hypot(x, y) <= self.extent_radius_m:
                out.append(c)
        return sorted(out)


@dataclass
class Scenario:
    config: SynthConfig
    reports: list = field(default_factory=list)
    ground_truth: list = field(default_factory=list)
    manifest: dict = field(default_factory=dict)   # report id -> incident id or "false"

    def write(self, out_dir) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "reports": out / "reports.jsonl",
            "ground_truth": out / "ground_truth.csv",
            "manifest": out / "manifest.csv",
        }
        for key, text in self.render().items():
            with open(paths[key], "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return paths

    def render(self) -> dict:
        rep = io.StringIO()
        write_reports(self.reports, rep)
        gt = io.StringIO()
        write_ground_truth(self.ground_truth, gt)
        man = io.StringIO()
        w = csv.writer(man, lineterminator="\n")
        w.writerow(["report_id", "incident_id_or_false"])
        for r in self.reports:
            w.writerow([r.id, self.manifest[r.id]])
        return {"reports": rep.getvalue(), "ground_truth": gt.getvalue(), "manifest": man.getvalue()}


def _uniform_in_cell(rng, cell: CellId, edge: float):
    cx, cy = axial_center_xy(cell.q, cell.r, edge)
    while True:
        x = cx + rng.uniform(-edge, edge)
        y = cy + rng.uniform(-edge, edge)
        if cell_of_xy(x, y, cell.resolution) == cell:
            return x, y


def _sample_reliability(rng, pmf) -> int:
    return int(rng.choice(10, p=np.asarray(pmf) / np.sum(pmf))) + 1


def _make_report(rng, origin, x, y, t_ms, reliability) -> tuple:
    loc = unproject(LocalXY(x, y), origin)
    confidence = int(min(10, max(0, reliability + rng.integers(-2, 3))))
    rating = int(rng.integers(1, 7))
    return (int(round(t_ms)), loc, reliability, confidence, rating)


def generate(cfg: SynthConfig) -> Scenario:
    cfg.validate()
    cells = cfg.cells()
    edge = edge_length_m(cfg.resolution)
    hours = cfg.duration_ms / HOUR_MS
    if cfg.hotspot_shape > 0:
        mrng = np.random.default_rng(cfg.map_seed)
        mult = mrng.gamma(cfg.hotspot_shape, 1.0 / cfg.hotspot_shape, size=len(cells))
        mult /= mult.mean()
    else:
        mult = np.ones(len(cells))
    rng = np.random.default_rng(cfg.seed)
    hour_pmf = None
    if cfg.hourly_profile:
        hour_pmf = np.asarray(cfg.hourly_profile, dtype=float)
        hour_pmf = hour_pmf / hour_pmf.sum()

    def incident_time():
        if hour_pmf is None:
            return cfg.start_ms + rng.uniform(0, cfg.duration_ms)
        # day-aligned sampling; retry the (rare) draws past the window end
        while True:
            day = rng.integers(0, max(1, math.ceil(cfg.duration_ms / DAY_MS)))
            t0 = cfg.start_ms - cfg.start_ms % DAY_MS + day * DAY_MS
            t = t0 + rng.choice(24, p=hour_pmf) * HOUR_MS + rng.uniform(0, HOUR_MS)
            if cfg.start_ms <= t < cfg.start_ms + cfg.duration_ms:
                return t

    incidents = []  # (t_ms, x, y, n_reports)
    for cell, m in zip(cells, mult):
        for _ in range(rng.poisson(cfg.incident_rate * m * hours)):
            t = incident_time()
            x, y = _uniform_in_cell(rng, cell, edge)
            incidents.append((t, x, y, int(rng.poisson(cfg.reports_per_incident_mean))))
    for f in cfg.forced_incidents:
        x, y = axial_center_xy(f.cell_q, f.cell_r, edge)
        incidents.append((cfg.start_ms + f.offset_ms, x, y, f.n_reports))
    incidents.sort(key=lambda inc: inc[0])

    raw = []  # (t_ms, loc, reliability, confidence, rating, incident_id)
    ground_truth = []
    for k, (t, x, y, n_rep) in enumerate(incidents):
        inc_id = f"INC{k:06d}"
        record_ms = int(round(t + cfg.recording_delay_ms))
        ground_truth.append(GroundTruthRecord(unproject(LocalXY(x, y), cfg.origin), record_ms, inc_id))
        for _ in range(n_rep):
            rx = x + rng.normal(0.0, cfg.report_location_sigma_m)
            ry = y + rng.normal(0.0, cfg.report_location_sigma_m)
            lead = rng.exponential(cfg.report_lead_mean_ms) if cfg.report_lead_mean_ms > 0 else 0.0
            rel = _sample_reliability(rng, cfg.true_reliability)
            raw.append(_make_report(rng, cfg.origin, rx, ry, record_ms - lead, rel) + (inc_id,))
    for cell in cells:
        for _ in range(rng.poisson(cfg.false_report_rate * hours)):
            t = cfg.start_ms + rng.uniform(0, cfg.duration_ms)
            x, y = _uniform_in_cell(rng, cell, edge)
            rel = _sample_reliability(rng, cfg.false_reliability)
            raw.append(_make_report(rng, cfg.origin, x, y, t, rel) + ("false",))

    raw.sort(key=lambda r: (r[0], r[1].lat, r[1].lon))
    scenario = Scenario(cfg, ground_truth=sorted(ground_truth, key=lambda g: (g.timestamp, g.unit_segment_id)))
    for i, (t, loc, rel, conf, rating, inc) in enumerate(raw):
        rid = f"R{i:07d}"
        scenario.reports.append(Report(rid, "ACCIDENT", conf, rating, rel, loc, max(t, 0)))
        scenario.manifest[rid] = inc
    return scenario


BENCHMARK_INCIDENTS = 290
BENCHMARK_REPORTS = 3300
BENCHMARK_HOTSPOT_SHAPE = 0.15


def default_benchmark_config(seed: int = 0, **overrides) -> SynthConfig:
    """~1/10 of the reference study scale: ~3,300 reports and ~290 incidents
    over two weeks on a ~200-cell resolution-6 extent.

    Incidents concentrate on a few hotspot cells and follow a rush-hour
    daily profile, so priors learned from a separate history carry signal.
    """
    base = SynthConfig(seed=seed)
    n_cells = len(base.cells())
    cell_hours = n_cells * base.duration_ms / HOUR_MS
    true_reports = BENCHMARK_INCIDENTS * base.reports_per_incident_mean
    params = dict(
        incident_rate=BENCHMARK_INCIDENTS / cell_hours,
        false_report_rate=(BENCHMARK_REPORTS - true_reports) / cell_hours,
        hotspot_shape=BENCHMARK_HOTSPOT_SHAPE,
        hourly_profile=RUSH_HOUR_PROFILE,
        seed=seed,
    )
    params.update(overrides)
    return SynthConfig(**params)


def default_benchmark(seed: int = 0) -> Scenario:
    return generate(default_benchmark_config(seed))


HISTORY_SEED_OFFSET = 1000
HISTORY_DAYS = 30


def default_history(seed: int = 0, days: int = HISTORY_DAYS) -> Scenario:
    """An independent month on the same map, used to estimate priors for the
    benchmark with the same ``seed`` without leaking its labels."""
    return generate(default_benchmark_config(seed + HISTORY_SEED_OFFSET, duration_ms=days * DAY_MS))


def lead_time_config(seed: int = 0, **overrides) -> SynthConfig:
    """Sparse-reporting scenario for measuring alert lead times.

    With about one report per reported incident and no false reports, the
    alert-triggering report is usually the incident's only report, so its
    measured lead is not inflated by taking the earliest of several
    exponential leads. Four times the benchmark incident rate over four
    weeks gives several hundred matched alerts per seed.
    """
    base = default_benchmark_config(seed)
    params = dict(incident_rate=4 * base.incident_rate, false_report_rate=0.0,
                  reports_per_incident_mean=0.5, duration_ms=28 * DAY_MS)
    params.update(overrides)
    return default_benchmark_config(seed, **params)


def pmf_mean(pmf) -> float:
    return float(sum((k + 1) * p for k, p in enumerate(pmf)))


def parse_synth_config(section: dict, base: SynthConfig | None = None) -> SynthConfig:
    """Override ``base`` (default: the benchmark) with flat ``key = value``
    strings; unknown keys are rejected."""
    base = default_benchmark_config() if base is None else base
    kwargs = {}
    fields_ = SynthConfig.__dataclass_fields__
    for key, val in section.items():
        if key not in fields_ or key in ("origin", "forced_incidents"):
            raise ConfigError(f"unknown synth option {key!r}")
        cur = getattr(base, key)
        try:
            if isinstance(cur, tuple):
                kwargs[key] = tuple(float(v) for v in val.split(","))
            elif isinstance(cur, int) and not isinstance(cur, bool):
                kwargs[key] = int(float(val))
            else:
                kwargs[key] = float(val)
        except ValueError:
            raise ConfigError(f"bad value for {key}: {val!r}") from None
    cfg = SynthConfig(**{**base.__dict__, **kwargs})
    cfg.validate()
    return cfg
