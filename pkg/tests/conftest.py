import math

import numpy as np
import pytest

from incident_fusion import _geom_py
from incident_fusion.geo import GeoPoint, GridConfig, LocalXY, unproject
from incident_fusion.ingest import GroundTruthRecord, Report

try:
    from incident_fusion import _geomkernels
except ImportError:  # pragma: no cover - depends on build
    _geomkernels = None

ORIGIN = GeoPoint(36.1627, -86.7816)
T0 = 1_569_888_000_000
MIN = 60_000

KERNELS = [pytest.param(_geom_py, id="python")]
if _geomkernels is not None:
    KERNELS.append(pytest.param(_geomkernels, id="compiled"))


@pytest.fixture
def grid():
    return GridConfig(ORIGIN, 6)


@pytest.fixture(params=KERNELS)
def kernel(request):
    return request.param


def at_xy(x, y, origin=ORIGIN):
    return unproject(LocalXY(x, y), origin)


def report(rid="r", t=T0, x=0.0, y=0.0, reliability=7, typ="ACCIDENT", origin=ORIGIN):
    return Report(rid, typ, 5, 3, reliability, at_xy(x, y, origin), t)


def record(t=T0, x=0.0, y=0.0, sid="S1", origin=ORIGIN):
    return GroundTruthRecord(at_xy(x, y, origin), t, sid)


def hex_contains(px, py, cx, cy, edge):
    """Independent point-in-pointy-top-hexagon test via the three slab widths."""
    dx, dy = px - cx, py - cy
    inr = 0.5 * math.sqrt(3.0) * edge
    ok = np.ones(np.shape(dx), dtype=bool)
    for deg in (0.0, 60.0, 120.0):
        a = math.radians(deg)
        ok &= np.abs(dx * math.cos(a) + dy * math.sin(a)) <= inr
    return ok


def mc_overlap(cx, cy, radius, hx, hy, edge, n, rng):
    """Monte-Carlo share of a true disc inside a hexagon."""
    rad = radius * np.sqrt(rng.uniform(0.0, 1.0, n))
    ang = rng.uniform(0.0, 2.0 * np.pi, n)
    px = cx + rad * np.cos(ang)
    py = cy + rad * np.sin(ang)
    return float(hex_contains(px, py, hx, hy, edge).mean())


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
