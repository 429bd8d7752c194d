import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from incident_fusion import geo
from incident_fusion.geo import (
    CellId,
    GeoPoint,
    GridConfig,
    InvalidInput,
    LocalXY,
    ReportArea,
    area_overlaps,
    cell_of,
    cell_of_xy,
    cell_polygon,
    cell_polygon_xy,
    center_of,
    center_xy,
    circle_cell_overlap,
    covered_cells,
    edge_length_m,
    hex_distance,
    neighbors,
    project,
    unproject,
)

from conftest import ORIGIN, at_xy, hex_contains, mc_overlap

EDGE6 = edge_length_m(6)


class TestProjection:
    def test_origin_maps_to_zero(self):
        xy = project(ORIGIN, ORIGIN)
        assert xy.x_m == 0.0 and xy.y_m == 0.0

    def test_north_shift(self):
        # 0.001 deg of latitude = R * pi / 180 * 0.001
        xy = project(GeoPoint(ORIGIN.lat + 0.001, ORIGIN.lon), ORIGIN)
        assert xy.x_m == pytest.approx(0.0, abs=1e-9)
        assert xy.y_m == pytest.approx(111.19492664455873, abs=1e-9)

    def test_east_shift_at_36(self):
        o = GeoPoint(36.0, 0.0)
        xy = project(GeoPoint(36.0, 0.001), o)
        assert xy.x_m == pytest.approx(111194.92664455873 * 0.001 * math.cos(math.radians(36.0)), rel=1e-12)
        assert xy.x_m == pytest.approx(89.95, abs=0.01)

    @given(st.floats(-1e5, 1e5), st.floats(-1e5, 1e5))
    def test_round_trip(self, x, y):
        p = unproject(LocalXY(x, y), ORIGIN)
        back = project(p, ORIGIN)
        q = unproject(back, ORIGIN)
        assert abs(q.lat - p.lat) < 1e-9 and abs(q.lon - p.lon) < 1e-9
        assert back.x_m == pytest.approx(x, abs=1e-6) and back.y_m == pytest.approx(y, abs=1e-6)

    def test_project_many_matches_scalar(self):
        rng = np.random.default_rng(3)
        lats = ORIGIN.lat + rng.uniform(-0.3, 0.3, 50)
        lons = ORIGIN.lon + rng.uniform(-0.3, 0.3, 50)
        many = geo.project_many(lats, lons, ORIGIN)
        for (x, y), la, lo in zip(many, lats, lons):
            xy = project(GeoPoint(la, lo), ORIGIN)
            assert (x, y) == (xy.x_m, xy.y_m)

    @pytest.mark.parametrize("lat,lon", [(91, 0), (-90.5, 0), (0, 181), (float("nan"), 0), (0, float("inf"))])
    def test_bad_coordinates(self, lat, lon):
        with pytest.raises(InvalidInput):
            GeoPoint(lat, lon)


class TestGridScale:
    def test_res6_edge(self):
        assert edge_length_m(6) == 3229.0

    @pytest.mark.parametrize("res", range(0, 10))
    def test_aperture_seven(self, res):
        assert edge_length_m(res + 1) == pytest.approx(edge_length_m(res) / math.sqrt(7), rel=1e-12)
        assert edge_length_m(res + 1) < edge_length_m(res)

    def test_negative_resolution(self):
        with pytest.raises(InvalidInput):
            GridConfig(ORIGIN, -1)


class TestCellOf:
    def test_origin_cell(self, grid):
        assert cell_of(ORIGIN, grid) == CellId(6, 0, 0)

    @pytest.mark.parametrize("res", [4, 6, 9])
    def test_center_round_trip(self, res):
        cfg = GridConfig(ORIGIN, res)
        for c in geo.cells_within(CellId(res, 0, 0), 6):
            assert cell_of(center_of(c, cfg), cfg) == c

    def test_interior_stability(self):
        rng = np.random.default_rng(0)
        for c in geo.cells_within(CellId(6, 0, 0), 3):
            cx, cy = center_xy(c)
            for _ in range(5):
                a = rng.uniform(0, 2 * math.pi)
                d = rng.uniform(0, 0.0099 * EDGE6)
                assert cell_of_xy(cx + d * math.cos(a), cy + d * math.sin(a), 6) == c

    def test_containment_matches_independent_test(self):
        rng = np.random.default_rng(1)
        pts = rng.uniform(-4 * EDGE6, 4 * EDGE6, size=(2000, 2))
        for x, y in pts:
            c = cell_of_xy(x, y, 6)
            cx, cy = center_xy(c)
            assert hex_contains(x, y, cx, cy, EDGE6 * (1 + 1e-12))
            assert math.hypot(x - cx, y - cy) <= EDGE6 * (1 + 1e-12)

    def test_vertex_tie_break(self):
        # the vertex at 30 degrees of the origin cell is shared by
        # (0,0), (1,0) and (0,1); the smallest (q, r) wins
        x, y = EDGE6 * math.cos(math.radians(30)), EDGE6 * math.sin(math.radians(30))
        assert cell_of_xy(x, y, 6) == CellId(6, 0, 0)
        # the vertex at 90 degrees is shared by (0,0), (0,1) and (-1,1)
        assert cell_of_xy(0.0, EDGE6, 6) == CellId(6, -1, 1)

    def test_edge_midpoint_tie_break(self):
        # midpoint of the edge shared with the east neighbour (1, 0)
        x = 0.5 * math.sqrt(3) * EDGE6
        assert cell_of_xy(x, 0.0, 6) == CellId(6, 0, 0)
        assert cell_of_xy(-x, 0.0, 6) == CellId(6, -1, 0)


class TestLattice:
    def test_neighbors_distance_one(self):
        c = CellId(6, 2, -3)
        ns = neighbors(c)
        assert len(set(ns)) == 6
        assert all(hex_distance(c, n) == 1 for n in ns)

    @pytest.mark.parametrize("k,count", [(0, 1), (1, 7), (2, 19), (5, 91)])
    def test_cells_within_count(self, k, count):
        cells = geo.cells_within(CellId(6, 0, 0), k)
        assert len(cells) == len(set(cells)) == count
        assert max(hex_distance(CellId(6, 0, 0), c) for c in cells) == k

    def test_cell_id_text(self):
        c = CellId(6, -3, 4)
        assert str(c) == "6:-3:4"
        assert CellId.parse(str(c)) == c


class TestPolygon:
    def test_area_regular_hexagon(self, grid):
        poly = cell_polygon(CellId(6, 0, 0), grid)
        xy = [project(p, ORIGIN) for p in poly]
        area = geo.polygon_area_m2([(v.x_m, v.y_m) for v in xy])
        assert area == pytest.approx(1.5 * math.sqrt(3) * EDGE6 ** 2, rel=1e-3)
        assert area == pytest.approx(2.598 * EDGE6 ** 2, rel=1e-3)

    def test_ccw(self):
        v = cell_polygon_xy(CellId(6, 1, 2))
        signed = 0.5 * sum(v[i - 1, 0] * v[i, 1] - v[i, 0] * v[i - 1, 1] for i in range(6))
        assert signed > 0

    def test_neighbours_share_two_vertices(self):
        c = CellId(6, 0, 0)
        vc = cell_polygon_xy(c)
        for n in neighbors(c):
            vn = cell_polygon_xy(n)
            d = np.linalg.norm(vc[:, None, :] - vn[None, :, :], axis=2)
            assert int((d < 1e-6).sum()) == 2

    def test_no_gaps_around_cell(self):
        # every sample point near the origin cell falls inside exactly one of the 7 hexagons
        rng = np.random.default_rng(2)
        pts = rng.uniform(-1.7 * EDGE6, 1.7 * EDGE6, size=(5000, 2))
        pts = pts[np.hypot(pts[:, 0], pts[:, 1]) < 1.7 * EDGE6]
        cells = [CellId(6, 0, 0)] + neighbors(CellId(6, 0, 0))
        hits = np.zeros(len(pts), dtype=int)
        for c in cells:
            cx, cy = center_xy(c)
            hits += hex_contains(pts[:, 0], pts[:, 1], cx, cy, EDGE6)
        assert (hits >= 1).all()


class TestOverlap:
    def test_small_circle_at_center_one_cell(self, grid):
        a = ReportArea(center_of(CellId(6, 2, 1), grid), 10.0)
        assert covered_cells(a, grid) == {CellId(6, 2, 1)}
        assert circle_cell_overlap(a, CellId(6, 2, 1), grid) == pytest.approx(1.0, abs=5e-4)

    def test_res6_delta100_interior(self, grid):
        a = ReportArea(at_xy(500.0, -300.0), 100.0)
        assert covered_cells(a, grid) == {CellId(6, 0, 0)}

    def test_vertex_three_cells(self, grid):
        x, y = EDGE6 * math.cos(math.radians(30)), EDGE6 * math.sin(math.radians(30))
        a = ReportArea(at_xy(x, y), 5.0)
        ov = area_overlaps(a, grid)
        assert set(ov) == {CellId(6, 0, 0), CellId(6, 1, 0), CellId(6, 0, 1)}
        for v in ov.values():
            assert v == pytest.approx(1 / 3, abs=5e-4)

    def test_outside_is_exact_zero(self, grid):
        a = ReportArea(at_xy(0.0, 0.0), 100.0)
        assert circle_cell_overlap(a, CellId(6, 3, 0), grid) == 0.0

    def test_edge_midpoint_half(self, grid):
        x = 0.5 * math.sqrt(3) * EDGE6
        a = ReportArea(at_xy(x, 0.0), 200.0)
        assert circle_cell_overlap(a, CellId(6, 0, 0), grid) == pytest.approx(0.5, abs=5e-4)
        assert circle_cell_overlap(a, CellId(6, 1, 0), grid) == pytest.approx(0.5, abs=5e-4)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-2e4, 2e4), st.floats(-2e4, 2e4), st.floats(1.0, 5000.0))
    def test_coverage_sums_to_one(self, x, y, radius):
        ov = geo.overlaps_xy(x, y, radius, 6)
        assert sum(ov.values()) == pytest.approx(1.0, abs=1e-6)
        assert all(0.0 < v <= 1.0 for v in ov.values())

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-2e4, 2e4), st.floats(-2e4, 2e4), st.floats(1.0, 5000.0))
    def test_covered_cells_match_per_cell_overlap(self, x, y, radius):
        grid = GridConfig(ORIGIN, 6)
        a = ReportArea(at_xy(x, y), radius)
        ov = area_overlaps(a, grid)
        for c, v in ov.items():
            assert circle_cell_overlap(a, c, grid) == pytest.approx(v, abs=1e-12)

    def test_monte_carlo_small_sample(self):
        # quick version of the acceptance oracle: 20 pairs at 2e5 samples
        rng = np.random.default_rng(11)
        grid = GridConfig(ORIGIN, 6)
        for _ in range(20):
            radius = rng.uniform(50, 3000)
            x, y = rng.uniform(-EDGE6, EDGE6, 2)
            a = ReportArea(at_xy(x, y), radius)
            c = rng.choice(sorted(covered_cells(a, grid)))
            cx, cy = center_xy(c)
            xy = project(a.center, ORIGIN)
            ref = mc_overlap(xy.x_m, xy.y_m, radius, cx, cy, EDGE6, 200_000, rng)
            assert circle_cell_overlap(a, c, grid) == pytest.approx(ref, abs=6e-3)

    def test_bad_radius(self):
        with pytest.raises(InvalidInput):
            ReportArea(ORIGIN, 0.0)
