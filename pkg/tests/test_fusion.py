import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from incident_fusion.fusion import (
    BeliefState,
    DegenerateLocalization,
    FusionConfig,
    Status,
    argmax_region,
    clamp_prob,
    detect_posterior,
    initial_belief,
    joint_posterior,
    lifecycle_tick,
    localize,
    localize_posterior,
    reliability_to_prob,
    sequential_update,
)
from incident_fusion.geo import CellId, InvalidInput

W1 = [0.3, 0.2, 0.1, 0.4]
W2 = [0.25, 0.15, 0.45, 0.15]
PRI4 = [0.01, 0.02, 0.03, 0.04]
CELLS = [CellId(6, i, 0) for i in range(4)]

probs = st.floats(0.01, 0.99)


def brute_joint(p_list, prior, overlaps, region_priors):
    """Enumerate (I, R) with I and R independent a priori and normalise directly."""
    q = np.asarray(region_priors, float) / np.sum(region_priors)
    weights = {}
    for inc, j in itertools.product((0, 1), range(len(q))):
        w = (prior if inc else 1 - prior) * q[j]
        for p, row in zip(p_list, overlaps):
            w *= (p if inc else 1 - p) * row[j]
        weights[inc, j] = w
    z = sum(weights.values())
    return [weights[1, j] / z for j in range(len(q))]


class TestReliability:
    @pytest.mark.parametrize("r,p", [(10, 1.0), (5, 0.5), (1, 0.1)])
    def test_division_by_ten(self, r, p):
        assert reliability_to_prob(r) == p

    @pytest.mark.parametrize("r", [0, 11, 2.5, True])
    def test_out_of_range(self, r):
        with pytest.raises(InvalidInput):
            reliability_to_prob(r)

    def test_clamp(self):
        assert clamp_prob(1.0) == 1 - 1e-9
        assert clamp_prob(0.0) == 1e-9
        assert clamp_prob(0.3) == 0.3


class TestDetect:
    def test_worked_example(self):
        assert detect_posterior([0.8, 0.9], 0.1) == pytest.approx(0.8, abs=1e-12)

    def test_single_report_low_prior(self):
        assert detect_posterior([0.8], 0.01) == pytest.approx(0.008 / 0.206, abs=1e-12)
        assert detect_posterior([0.8], 0.01) == pytest.approx(0.038835, abs=1e-6)

    @given(probs)
    def test_coin_flip_uninformative(self, prior):
        assert detect_posterior([0.5], prior) == pytest.approx(prior, abs=1e-12)

    def test_empty_returns_prior(self):
        assert detect_posterior([], 0.3) == 0.3

    def test_unclamped_one_rejected(self):
        with pytest.raises(InvalidInput):
            detect_posterior([1.0], 0.1)

    def test_maximal_report_not_infallible(self):
        p = detect_posterior([clamp_prob(reliability_to_prob(10))], 1e-12)
        assert 0.0 < p < 1.0

    def test_no_underflow_many_reports(self):
        assert detect_posterior([0.9] * 500, 0.01) == pytest.approx(1.0, abs=1e-12)
        # log-odds -1096 is below double range; 50 reports (-105) must stay positive
        assert 0.0 < detect_posterior([0.1] * 50, 0.99) < 1e-40

    @given(st.lists(probs, min_size=1, max_size=8), probs)
    def test_complement_symmetry(self, ps, prior):
        a = detect_posterior(ps, prior)
        b = detect_posterior([1 - p for p in ps], 1 - prior)
        assert a + b == pytest.approx(1.0, abs=1e-9)

    @given(st.lists(probs, min_size=2, max_size=8), probs, st.randoms(use_true_random=False))
    def test_permutation_invariance(self, ps, prior, rnd):
        shuffled = ps[:]
        rnd.shuffle(shuffled)
        assert detect_posterior(shuffled, prior) == pytest.approx(detect_posterior(ps, prior), abs=1e-12)

    @given(st.lists(probs, max_size=6), st.floats(0.05, 0.95), st.floats(0.01, 0.99))
    def test_monotone(self, ps, prior, extra):
        base = detect_posterior(ps, prior)
        after = detect_posterior(ps + [extra], prior)
        if extra > 0.5:
            assert after > base
        elif extra < 0.5:
            assert after < base
        else:
            assert after == pytest.approx(base, abs=1e-12)

    def test_batch_sequential_1000_cases(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = int(rng.integers(1, 9))
            ps = rng.uniform(0.01, 0.99, n).tolist()
            prior = float(rng.uniform(1e-4, 0.99))
            cut = int(rng.integers(0, n + 1))
            chained = detect_posterior(ps[cut:], detect_posterior(ps[:cut], prior))
            assert chained == pytest.approx(detect_posterior(ps, prior), abs=1e-9)


class TestLocalize:
    def test_worked_example(self):
        out = localize_posterior([W1, W2], PRI4)
        num = np.array([7.5e-4, 6e-4, 1.35e-3, 2.4e-3])
        np.testing.assert_allclose(out, num / num.sum(), rtol=0, atol=1e-12)
        np.testing.assert_allclose(out, [0.1471, 0.1176, 0.2647, 0.4706], rtol=0, atol=1e-4)

    def test_single_region(self):
        assert localize_posterior([[0.3], [0.7]], [0.2]).tolist() == [1.0]

    def test_uniform_symmetry(self):
        out = localize_posterior([[0.4, 0.4, 0.4]], [1, 1, 1])
        np.testing.assert_allclose(out, [1 / 3] * 3, atol=1e-15)

    def test_zero_overlap_excluded(self):
        out = localize_posterior([[0.5, 0.5, 0.0], [0.2, 0.0, 0.8]], [1, 1, 1])
        assert out.tolist() == [1.0, 0.0, 0.0]

    def test_degenerate(self):
        with pytest.raises(DegenerateLocalization):
            localize_posterior([[1.0, 0.0], [0.0, 1.0]], [0.5, 0.5])

    def test_fallback_overlap_sum(self):
        out = localize([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]], [0.5, 0.5])
        np.testing.assert_allclose(out, [1 / 3, 2 / 3], atol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInput):
            localize_posterior([[0.5, 0.5]], [1.0])

    def test_no_underflow(self):
        rows = [[1e-5, 2e-5]] * 200
        out = localize_posterior(rows, [0.5, 0.5])
        assert out.sum() == pytest.approx(1.0, abs=1e-9)
        assert out[1] == pytest.approx(1.0, abs=1e-12)

    @given(st.lists(st.lists(st.floats(0.01, 1.0), min_size=3, max_size=3), min_size=1, max_size=5),
           st.lists(st.floats(1e-4, 1.0), min_size=3, max_size=3), st.floats(0.1, 100.0),
           st.integers(0, 4), st.floats(0.1, 0.99))
    def test_scale_invariance(self, rows, pri, c, k, row_scale):
        base = localize_posterior(rows, pri)
        assert base.sum() == pytest.approx(1.0, abs=1e-9)
        np.testing.assert_allclose(localize_posterior(rows, [c * v for v in pri]), base, atol=1e-12)
        k %= len(rows)
        scaled = [list(r) for r in rows]
        scaled[k] = [v * row_scale for v in scaled[k]]
        np.testing.assert_allclose(localize_posterior(scaled, pri), base, atol=1e-12)

    def test_batch_sequential_fixed_regions(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            n = int(rng.integers(2, 6))
            ov = rng.uniform(0.01, 1, (n, 4))
            pri = rng.uniform(0.01, 1, 4)
            cut = int(rng.integers(1, n))
            chained = localize_posterior(ov[cut:], localize_posterior(ov[:cut], pri))
            np.testing.assert_allclose(chained, localize_posterior(ov, pri), atol=1e-9)


class TestJoint:
    def test_product(self):
        a, b = CellId(6, 0, 0), CellId(6, 1, 0)
        out = joint_posterior(0.8, {a: 0.25, b: 0.75})
        assert out[a] == pytest.approx(0.2) and out[b] == pytest.approx(0.6)

    def test_zero(self):
        assert set(joint_posterior(0.0, {CELLS[0]: 0.5, CELLS[1]: 0.5}).values()) == {0.0}

    @settings(max_examples=200)
    @given(st.integers(1, 3), st.integers(1, 3), st.data())
    def test_matches_brute_force(self, n_rep, n_reg, data):
        ps = data.draw(st.lists(probs, min_size=n_rep, max_size=n_rep))
        rows = [data.draw(st.lists(st.floats(0.01, 1.0), min_size=n_reg, max_size=n_reg)) for _ in range(n_rep)]
        pri = data.draw(st.lists(st.floats(1e-3, 0.3), min_size=n_reg, max_size=n_reg))
        prior = sum(pri) / (1 + sum(pri))
        cells = CELLS[:n_reg]
        dist = dict(zip(cells, localize_posterior(rows, pri)))
        got = joint_posterior(detect_posterior(ps, prior), dist)
        ref = brute_joint(ps, prior, rows, pri)
        for c, v in zip(cells, ref):
            assert got[c] == pytest.approx(v, abs=1e-9)
        assert sum(got.values()) == pytest.approx(detect_posterior(ps, prior), abs=1e-12)

    def test_five_hypothesis_example_discrepancy(self):
        # the five-way normalisation with the example's stated numerators;
        # its normaliser is 0.02021, the normalised posterior of R1 is ~0.0267
        r1 = 0.8 * 0.3 * 0.9 * 0.25 * 0.01
        assert r1 == pytest.approx(0.00054, abs=1e-15)
        z = r1 + 0.00024 + 0.00056 + 0.00087 + 0.1 * 0.2 * 0.9
        assert z == pytest.approx(0.02021, abs=1e-12)
        assert r1 / z == pytest.approx(0.0267, abs=1e-4)
        assert r1 / z != pytest.approx(0.02021, abs=1e-3)


class TestSequential:
    def belief(self):
        return initial_belief("C0", CELLS, PRI4)

    def test_initial_belief(self):
        b = self.belief()
        assert b.p_incident == pytest.approx(0.1, abs=1e-15)
        assert [b.region_dist[c] for c in CELLS] == pytest.approx([0.1, 0.2, 0.3, 0.4], abs=1e-15)
        assert b.step_count == 0

    def test_initial_belief_bad_sum(self):
        with pytest.raises(InvalidInput):
            initial_belief("C0", CELLS[:2], [0.6, 0.5])

    def test_worked_example_one_step(self):
        s = sequential_update(self.belief(), [0.8, 0.9],
                              [dict(zip(CELLS, W1)), dict(zip(CELLS, W2))])
        assert s.p_incident == pytest.approx(0.8, abs=1e-12)
        assert [s.region_dist[c] for c in CELLS] == pytest.approx([0.1471, 0.1176, 0.2647, 0.4706], abs=1e-4)
        assert s.step_count == 1

    def test_one_then_one_equals_batch(self):
        o1, o2 = dict(zip(CELLS, W1)), dict(zip(CELLS, W2))
        batch = sequential_update(self.belief(), [0.8, 0.9], [o1, o2])
        seq = sequential_update(sequential_update(self.belief(), [0.8], [o1]), [0.9], [o2])
        assert seq.p_incident == pytest.approx(batch.p_incident, abs=1e-9)
        for c in CELLS:
            assert seq.region_dist[c] == pytest.approx(batch.region_dist[c], abs=1e-9)
        assert seq.step_count == 2

    def test_empty_batch(self):
        b = self.belief()
        s = sequential_update(b, [], [])
        assert s.p_incident == b.p_incident and s.region_dist == b.region_dist
        assert s.step_count == 1

    def test_uninformative_report(self):
        b = self.belief()
        s = sequential_update(b, [0.5], [{c: 0.25 for c in CELLS}])
        assert s.p_incident == pytest.approx(b.p_incident, abs=1e-9)

    def test_new_region_enters_with_table_prior(self):
        b = initial_belief("C0", CELLS[:1], [0.05])
        new = CellId(6, 9, 9)
        s = sequential_update(b, [0.7], [{CELLS[0]: 0.5, new: 0.5}], {new: 0.01})
        # carried joint 0.05 vs table 0.01, equal overlaps
        assert s.region_dist[CELLS[0]] == pytest.approx(5 / 6, abs=1e-12)
        assert s.region_dist[new] == pytest.approx(1 / 6, abs=1e-12)

    def test_new_region_needs_prior(self):
        b = initial_belief("C0", CELLS[:1], [0.05])
        with pytest.raises(InvalidInput):
            sequential_update(b, [0.7], [{CellId(6, 9, 9): 1.0}])

    def test_clamped_prior_stays_open(self):
        s = BeliefState("C0", 1 - 1e-12, {CELLS[0]: 1.0})
        out = sequential_update(s, [0.1] * 3, [{CELLS[0]: 1.0}] * 3)
        assert 0.0 < out.p_incident < 1.0


class TestLifecycle:
    CFG = FusionConfig(T_prime_ms=5 * 60_000, t_s_ms=60_000)

    def test_alert(self):
        status, d = lifecycle_tick(BeliefState("C", 0.9, {CELLS[0]: 1.0}, 1), self.CFG, 0.5, 123)
        assert status == Status.ALERTED and d.alert and d.decided_at_ms == 123
        assert d.joint_probability == pytest.approx(0.9)

    def test_threshold_inclusive(self):
        assert lifecycle_tick(BeliefState("C", 0.5, {CELLS[0]: 1.0}, 1), self.CFG, 0.5)[0] == Status.ALERTED

    def test_expire(self):
        status, d = lifecycle_tick(BeliefState("C", 0.1, {CELLS[0]: 1.0}, 5), self.CFG, 0.5)
        assert status == Status.EXPIRED and not d.alert

    def test_active(self):
        assert lifecycle_tick(BeliefState("C", 0.1, {CELLS[0]: 1.0}, 4), self.CFG, 0.5) == (Status.ACTIVE, None)

    def test_argmax_tie_smallest_cell(self):
        assert argmax_region({CELLS[2]: 0.5, CELLS[1]: 0.5}) == CELLS[1]

    def test_config_validation(self):
        with pytest.raises(InvalidInput):
            FusionConfig(T_prime_ms=90_000, t_s_ms=60_000)
        with pytest.raises(InvalidInput):
            FusionConfig(delta_m=0)
        assert FusionConfig().max_steps == 25


def test_log_space_agrees_with_direct_products():
    rng = np.random.default_rng(2)
    for _ in range(200):
        ps = rng.uniform(0.05, 0.95, 4)
        prior = rng.uniform(0.01, 0.5)
        a = prior * math.prod(ps)
        b = (1 - prior) * math.prod(1 - ps)
        assert detect_posterior(ps.tolist(), prior) == pytest.approx(a / (a + b), abs=1e-12)
