import math
from collections import Counter

import numpy as np
import pytest

from incident_fusion.ingest import parse_ground_truth, parse_reports
from incident_fusion.synth import (
    DAY_MS,
    FALSE_RELIABILITY,
    HOUR_MS,
    RUSH_HOUR_PROFILE,
    TRUE_RELIABILITY,
    ConfigError,
    ForcedIncident,
    SynthConfig,
    default_benchmark,
    default_benchmark_config,
    default_history,
    generate,
    parse_synth_config,
    pmf_mean,
)


@pytest.fixture(scope="module")
def bench0():
    return default_benchmark(0)


def test_byte_identical(bench0):
    assert default_benchmark(0).render() == bench0.render()
    assert default_benchmark(1).render()["reports"] != bench0.render()["reports"]


@pytest.mark.parametrize("seed", range(5))
def test_benchmark_scale(seed):
    s = default_benchmark(seed)
    assert abs(len(s.reports) - 3300) <= 330
    assert abs(len(s.ground_truth) - 290) <= 0.15 * 290


def test_benchmark_shape(bench0):
    cfg = bench0.config
    assert 180 <= len(cfg.cells()) <= 220
    assert cfg.duration_ms == 14 * DAY_MS
    assert cfg.report_lead_mean_ms == 6 * 60_000
    assert pmf_mean(TRUE_RELIABILITY) == pytest.approx(6.0, abs=0.1)
    assert pmf_mean(FALSE_RELIABILITY) == pytest.approx(3.0, abs=0.1)


def test_manifest_integrity(bench0):
    gt_ids = {g.unit_segment_id for g in bench0.ground_truth}
    linked = {v for v in bench0.manifest.values() if v != "false"}
    assert linked <= gt_ids
    assert set(bench0.manifest) == {r.id for r in bench0.reports}
    text = bench0.render()["manifest"].splitlines()
    assert text[0] == "report_id,incident_id_or_false"
    assert len(text) == len(bench0.reports) + 1


def test_files_parse_back(bench0):
    out = bench0.render()
    reps = parse_reports(out["reports"])
    assert reps.errors == [] and len(reps.records) == len(bench0.reports)
    gt = parse_ground_truth(out["ground_truth"])
    assert gt.errors == [] and len(gt.records) == len(bench0.ground_truth)


def test_reliability_split_by_truth(bench0):
    true_rel = [r.reliability for r in bench0.reports if bench0.manifest[r.id] != "false"]
    false_rel = [r.reliability for r in bench0.reports if bench0.manifest[r.id] == "false"]
    assert np.mean(true_rel) == pytest.approx(6.0, abs=0.3)
    assert np.mean(false_rel) == pytest.approx(3.0, abs=0.3)


def test_zero_rates_empty():
    s = generate(SynthConfig(incident_rate=0.0, false_report_rate=0.0))
    assert s.reports == [] and s.ground_truth == []
    out = s.render()
    assert out["reports"] == ""
    assert out["ground_truth"] == "latitude,longitude,timestamp,unit_segment_id\n"


def test_forced_incident_three_reports():
    cfg = SynthConfig(incident_rate=0.0, false_report_rate=0.0,
                      forced_incidents=(ForcedIncident(0, 0, 3_600_000, 3),))
    s = generate(cfg)
    assert len(s.ground_truth) == 1 and len(s.reports) == 3
    inc = s.ground_truth[0].unit_segment_id
    assert all(s.manifest[r.id] == inc for r in s.reports)
    assert all(r.pub_millis <= s.ground_truth[0].timestamp for r in s.reports)


@pytest.mark.parametrize("over", [dict(extent_radius_m=0.0), dict(incident_rate=-1.0),
                                  dict(report_location_sigma_m=0.0), dict(true_reliability=(0.5, 0.5)),
                                  dict(hourly_profile=(1.0,) * 23)])
def test_bad_config(over):
    with pytest.raises(ConfigError):
        generate(SynthConfig(**over))


def test_incident_frequency_converges():
    # a flat map over 100 x the benchmark window
    cfg = SynthConfig(extent_radius_m=8000.0, duration_ms=1400 * DAY_MS, incident_rate=0.004,
                      hotspot_shape=0.0, false_report_rate=0.0, reports_per_incident_mean=0.0)
    s = generate(cfg)
    expected = cfg.incident_rate * len(cfg.cells()) * cfg.duration_ms / HOUR_MS
    assert abs(len(s.ground_truth) - expected) <= 3 * math.sqrt(expected)


def test_report_lead_mean():
    cfg = SynthConfig(extent_radius_m=8000.0, duration_ms=60 * DAY_MS, incident_rate=0.03,
                      hotspot_shape=0.0, false_report_rate=0.0)
    s = generate(cfg)
    rec = {g.unit_segment_id: g.timestamp for g in s.ground_truth}
    leads = [rec[s.manifest[r.id]] - r.pub_millis for r in s.reports]
    assert len(leads) >= 1000
    assert np.mean(leads) == pytest.approx(cfg.report_lead_mean_ms, rel=0.10)


def test_hourly_profile_followed():
    s = generate(default_benchmark_config(0, duration_ms=60 * DAY_MS, false_report_rate=0.0))
    delay = s.config.recording_delay_ms
    hours = Counter(((g.timestamp - delay) % DAY_MS) // HOUR_MS for g in s.ground_truth)
    pmf = np.array(RUSH_HOUR_PROFILE) / sum(RUSH_HOUR_PROFILE)
    n = len(s.ground_truth)
    peak = int(np.argmax(pmf))
    assert hours[peak] / n == pytest.approx(pmf[peak], abs=0.03)
    assert hours[3] / n < 0.02


def test_history_is_independent(bench0):
    h = default_history(0, days=3)
    assert h.config.seed == 1000 and h.config.duration_ms == 3 * DAY_MS
    assert h.config.map_seed == bench0.config.map_seed


def test_parse_synth_config():
    cfg = parse_synth_config({"incident_rate": "0.01", "seed": "4", "hotspot_shape": "0"})
    assert cfg.incident_rate == 0.01 and cfg.seed == 4 and cfg.hotspot_shape == 0.0
    with pytest.raises(ConfigError):
        parse_synth_config({"nope": "1"})
    with pytest.raises(ConfigError):
        parse_synth_config({"seed": "abc"})
