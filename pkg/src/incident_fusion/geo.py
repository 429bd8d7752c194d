"""Local projection, axial hexagon grid and circle/hexagon overlap.

Cells are pointy-top hexagons laid over an equirectangular projection
centred on ``GridConfig.origin``. Resolution follows an aperture-7
hierarchy: each finer level shrinks the edge by sqrt(7), with resolution 6
pinned to a 3229 m edge.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Iterable

import numpy as np

if os.environ.get("INCIDENT_FUSION_PURE_PYTHON"):
    from . import _geom_py as _kernels

    BACKEND = "python"
else:
    try:
        from . import _geomkernels as _kernels

        BACKEND = "compiled"
    except ImportError:  # pragma: no cover - depends on build
        from . import _geom_py as _kernels

        BACKEND = "python"

EARTH_RADIUS_M = 6_371_000.0
DEG = math.pi / 180.0
SQRT3 = math.sqrt(3.0)
RES6_EDGE_M = 3229.0

AXIAL_DIRECTIONS = ((1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1))


class InvalidInput(ValueError):
    """Coordinates or parameters outside their valid domain."""


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise InvalidInput(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise InvalidInput(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise InvalidInput(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class LocalXY:
    x_m: float
    y_m: float


def edge_length_m(resolution: int) -> float:
    if resolution < 0:
        raise InvalidInput(f"resolution must be >= 0, got {resolution}")
    return RES6_EDGE_M * math.sqrt(7.0) ** (6 - resolution)


@dataclass(frozen=True)
class GridConfig:
    origin: GeoPoint
    resolution: int = 6

    def __post_init__(self):
        edge_length_m(self.resolution)

    @property
    def edge_m(self) -> float:
        return edge_length_m(self.resolution)


@dataclass(frozen=True, order=True)
class CellId:
    resolution: int
    q: int
    r: int

    def __str__(self):
        return f"{self.resolution}:{self.q}:{self.r}"

    @classmethod
    def parse(cls, text: str) -> "CellId":
        res, q, r = (int(v) for v in text.split(":"))
        return cls(res, q, r)


@dataclass(frozen=True)
class ReportArea:
    center: GeoPoint
    radius_m: float

    def __post_init__(self):
        if not (self.radius_m > 0 and math.isfinite(self.radius_m)):
            raise InvalidInput(f"radius must be positive, got {self.radius_m}")


# -- projection ---------------------------------------------------------------

def project(p: GeoPoint, origin: GeoPoint) -> LocalXY:
    x = (p.lon - origin.lon) * math.cos(origin.lat * DEG) * EARTH_RADIUS_M * DEG
    y = (p.lat - origin.lat) * EARTH_RADIUS_M * DEG
    return LocalXY(x, y)


def unproject(xy: LocalXY, origin: GeoPoint) -> GeoPoint:
    lat = origin.lat + xy.y_m / (EARTH_RADIUS_M * DEG)
    lon = origin.lon + xy.x_m / (math.cos(origin.lat * DEG) * EARTH_RADIUS_M * DEG)
    return GeoPoint(lat, lon)


def project_many(lats, lons, origin: GeoPoint) -> np.ndarray:
    """Vectorised ``project``; returns an (n, 2) array of metres."""
    lats = np.asarray(lats, dtype=float)
    lons = np.asarray(lons, dtype=float)
    x = (lons - origin.lon) * math.cos(origin.lat * DEG) * EARTH_RADIUS_M * DEG
    y = (lats - origin.lat) * EARTH_RADIUS_M * DEG
    return np.column_stack([x, y])


# -- hexagon lattice ----------------------------------------------------------

def axial_center_xy(q: int, r: int, edge: float) -> tuple[float, float]:
    return edge * SQRT3 * (q + 0.5 * r), edge * 1.5 * r


def center_xy(c: CellId) -> tuple[float, float]:
    return axial_center_xy(c.q, c.r, edge_length_m(c.resolution))


def center_of(c: CellId, cfg: GridConfig) -> GeoPoint:
    x, y = center_xy(c)
    return unproject(LocalXY(x, y), cfg.origin)


def _axial_round(fq: float, fr: float) -> tuple[int, int]:
    fs = -fq - fr
    q, r, s = round(fq), round(fr), round(fs)
    dq, dr, ds = abs(q - fq), abs(r - fr), abs(s - fs)
    if dq > dr and dq > ds:
        q = -r - s
    elif dr > ds:
        r = -q - s
    return int(q), int(r)


def cell_of_xy(x: float, y: float, resolution: int) -> CellId:
    """Hexagon containing a projected point.

    Nearest centre wins; points equidistant (within 1e-9 edge) from several
    centres go to the lexicographically smallest (q, r).
    """
    edge = edge_length_m(resolution)
    fq = (SQRT3 / 3.0 * x - y / 3.0) / edge
    fr = (2.0 / 3.0 * y) / edge
    q0, r0 = _axial_round(fq, fr)
    cands = []
    for dq, dr in ((0, 0),) + AXIAL_DIRECTIONS:
        q, r = q0 + dq, r0 + dr
        cx, cy = axial_center_xy(q, r, edge)
        cands.append((math.hypot(x - cx, y - cy), q, r))
    dmin = min(c[0] for c in cands)
    q, r = min((q, r) for d, q, r in cands if d <= dmin + 1e-9 * edge)
    return CellId(resolution, q, r)


def cell_of(p: GeoPoint, cfg: GridConfig) -> CellId:
    xy = project(p, cfg.origin)
    return cell_of_xy(xy.x_m, xy.y_m, cfg.resolution)


def neighbors(c: CellId) -> list[CellId]:
    return [CellId(c.resolution, c.q + dq, c.r + dr) for dq, dr in AXIAL_DIRECTIONS]


def hex_distance(a: CellId, b: CellId) -> int:
    dq, dr = a.q - b.q, a.r - b.r
    return (abs(dq) + abs(dr) + abs(dq + dr)) // 2


def cells_within(c: CellId, k: int) -> list[CellId]:
    """All cells at hex distance <= k from ``c`` (ring order not guaranteed)."""
    out = []
    for dq in range(-k, k + 1):
        for dr in range(max(-k, -dq - k), min(k, -dq + k) + 1):
            out.append(CellId(c.resolution, c.q + dq, c.r + dr))
    return out


def cell_polygon_xy(c: CellId) -> np.ndarray:
    """Six CCW vertices in projected metres, first vertex at 30 degrees."""
    edge = edge_length_m(c.resolution)
    cx, cy = center_xy(c)
    ang = np.radians(30.0 + 60.0 * np.arange(6))
    return np.column_stack([cx + edge * np.cos(ang), cy + edge * np.sin(ang)])


def cell_polygon(c: CellId, cfg: GridConfig) -> list[GeoPoint]:
    return [unproject(LocalXY(x, y), cfg.origin) for x, y in cell_polygon_xy(c)]


# -- circle overlap -----------------------------------------------------------

_EQUAL_AREA_SCALE = math.sqrt(2.0 * math.pi / (64 * math.sin(2.0 * math.pi / 64)))
_NORMALS = [(math.cos(math.radians(60.0 * k)), math.sin(math.radians(60.0 * k))) for k in range(6)]


def overlaps_xy(x: float, y: float, radius: float, resolution: int) -> dict[CellId, float]:
    """Map of every cell the circle touches to its overlap fraction."""
    edge = edge_length_m(resolution)
    home = cell_of_xy(x, y, resolution)
    hx, hy = axial_center_xy(home.q, home.r, edge)
    rp = radius * _EQUAL_AREA_SCALE
    reach = max((x - hx) * nx + (y - hy) * ny for nx, ny in _NORMALS)
    if 0.5 * SQRT3 * edge - reach >= rp:
        return {home: 1.0}
    # ring k is at least 1.5*k*edge from the home centre
    k = int((rp + 2.0 * edge) // (1.5 * edge))
    cells = cells_within(home, k)
    centers = np.array([center_xy(c) for c in cells])
    fracs = _kernels.circle_hex_fractions(x, y, radius, centers, edge)
    return {c: float(f) for c, f in zip(cells, fracs) if f > 0.0}


def covered_cells(a: ReportArea, cfg: GridConfig) -> set[CellId]:
    xy = project(a.center, cfg.origin)
    return set(overlaps_xy(xy.x_m, xy.y_m, a.radius_m, cfg.resolution))


def circle_cell_overlap(a: ReportArea, c: CellId, cfg: GridConfig) -> float:
    """Share of the report circle's area lying inside cell ``c``.

    The circle is approximated by an equal-area regular 64-gon clipped
    against the hexagon.
    """
    xy = project(a.center, cfg.origin)
    edge = edge_length_m(c.resolution)
    frac = _kernels.circle_hex_fractions(xy.x_m, xy.y_m, a.radius_m, np.array([center_xy(c)]), edge)
    return float(frac[0])


def area_overlaps(a: ReportArea, cfg: GridConfig) -> dict[CellId, float]:
    xy = project(a.center, cfg.origin)
    return overlaps_xy(xy.x_m, xy.y_m, a.radius_m, cfg.resolution)


def polygon_area_m2(vertices: Iterable[tuple[float, float]]) -> float:
    return float(_kernels.polygon_area(np.asarray(list(vertices), dtype=float)))


def clip_area_m2(subject, clip) -> float:
    return float(_kernels.clip_area(subject, clip))
