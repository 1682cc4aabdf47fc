from __future__ import annotations

import math

import numpy as np
import pytest

from renlab.model import BinnedJumpModel, JumpModel, MeasureVec, RateModel, WaitingLaw
from renlab.harness import (
    ball_infimum,
    constrained_infimum,
    entropy_budget,
    exact_ldp,
    mc_ldp,
    tail_xi_estimate,
    tv_distance,
)
from renlab.rate import rate_primal, relative_entropy, stationary_measure

M2 = RateModel(("a", "b"), [0.5, 0.5], [1.0, 2.0])
CENTER = MeasureVec([0.5, 0.5])


class TestBallInfimum:
    def test_center_at_minimizer(self):
        res = ball_infimum(M2, stationary_measure(M2), 0.1)
        assert res.value <= 1e-12
        assert res.certified

    def test_full_ball_reaches_global_minimum(self):
        res = ball_infimum(M2, MeasureVec([0.95, 0.05]), 1.0)
        assert res.value <= 1e-10

    def test_against_dense_grid(self):
        res = ball_infimum(M2, CENTER, 0.05)
        ps = np.arange(0.45, 0.55 + 1e-12, 1e-4)
        grid = min(rate_primal(M2, MeasureVec([p, 1 - p])) for p in ps)
        assert res.value == pytest.approx(grid, abs=2e-4)
        assert res.certified
        assert tv_distance(res.argmin.weights, CENTER.weights) <= 0.05 + 1e-9

    def test_monotone_in_radius(self):
        vals = [ball_infimum(M2, CENTER, e).value for e in (0.02, 0.05, 0.1, 0.2, 0.5)]
        assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_with_singular_sites(self):
        m = RateModel(("a", "b"), [0.5, 0.5], [1.0, 2.0], ("e",), [0.0])
        center = MeasureVec([0.5, 0.4], [0.1])
        res = ball_infimum(m, center, 0.05)
        assert res.value >= 0.0
        assert math.isfinite(res.value)


class TestConstrainedInfimum:
    def test_pinned_constraint(self):
        # on two sites the constraint nu(g)=2 forces nu=(1/2,1/2)
        res = constrained_infimum(M2, np.array([1.0, 3.0]), 2.0)
        assert res.value == pytest.approx(rate_primal(M2, CENTER), abs=1e-9)
        assert res.certified

    def test_zero_at_typical_value(self):
        g = np.array([1.0, 3.0])
        mu = stationary_measure(M2)
        res = constrained_infimum(M2, g, float(mu.ac @ g))
        assert res.value <= 1e-10

    def test_target_out_of_range(self):
        with pytest.raises(ValueError, match="outside"):
            constrained_infimum(M2, np.array([1.0, 3.0]), 5.0)


class TestExactLdp:
    def test_point_ball_probability(self):
        rep = exact_ldp(M2, MeasureVec([1.0, 0.0]), 0.01, [3], rate_inf=1.0)
        assert rep.probs[0] == pytest.approx(0.125, abs=1e-14)

    def test_probabilities_grow_toward_one(self):
        # comparable lattices: multiples of 3 share the grid geometry
        rep = exact_ldp(M2, stationary_measure(M2), 0.3, [3, 6, 9, 12], rate_inf=1e-9)
        assert all(a < b for a, b in zip(rep.probs, rep.probs[1:]))

    def test_slope_brackets(self):
        ball = ball_infimum(M2, CENTER, 0.05)
        ball2 = ball_infimum(M2, CENTER, 0.10)
        rep = exact_ldp(M2, CENTER, 0.05, list(range(6, 31)), rate_inf=ball.value)
        tol = 0.20 * ball.value
        assert ball2.value - tol <= rep.slope <= ball.value + tol
        assert rep.rel_gap <= 0.20


class TestMcLdp:
    def test_law_of_large_numbers_regime(self):
        m = RateModel(("a", "b"), [0.6, 0.4], [1.0, 1.0])
        rep = mc_ldp(m, MeasureVec(m.mu.copy()), 0.2, [40, 60, 80], 2000, 3, rate_inf=1e-9)
        assert rep.probs[-1] > 0.99
        assert abs(rep.slope) < 0.005

    def test_underflow_flagged_and_excluded(self):
        rep = mc_ldp(M2, MeasureVec([1.0, 0.0]), 0.01, [5, 40], 1000, 3, rate_inf=0.7)
        assert rep.flags[1] == "underflow"
        assert rep.probs[1] == 0.0

    def test_importance_sampling_is_unbiased(self):
        ball = 0.0213307
        plain = mc_ldp(M2, CENTER, 0.05, [10], 150_000, 21, use_is=False, rate_inf=ball)
        tilted = mc_ldp(M2, CENTER, 0.05, [10], 150_000, 22, use_is=True, rate_inf=ball)
        diff = abs(plain.probs[0] - tilted.probs[0])
        comb = math.hypot(plain.stderrs[0], tilted.stderrs[0])
        assert diff <= 4 * comb

    def test_is_slope_matches_ball_infimum(self):
        ball = ball_infimum(M2, CENTER, 0.05)
        rep = mc_ldp(M2, CENTER, 0.05, [40, 60, 80, 100, 120], 50_000, 2024,
                     use_is=True, rate_inf=ball.value)
        assert rep.rel_gap <= 0.15

    def test_jump_model_smoke(self):
        jm = JumpModel(("y",), [1.0], (WaitingLaw.exponential(1.0),))
        bjm = BinnedJumpModel(jm, tuple(np.arange(0.0, 12.0, 2.0)), 10.0)
        rm = bjm.model
        center = stationary_measure(rm)
        rep = mc_ldp(bjm, center, 0.2, [50, 120], 2000, 17, rate_inf=1e-9)
        assert rep.probs[-1] > rep.probs[0]
        assert rep.probs[-1] > 0.8

    def test_requires_positive_tilt(self):
        with pytest.raises(ValueError):
            mc_ldp(M2, MeasureVec([1.0, 0.0]), 0.05, [10], 1000, 1, use_is=True, rate_inf=1.0)


class TestTailXiEstimate:
    def test_exponential_exact(self):
        est = tail_xi_estimate(WaitingLaw.exponential(2.0), np.linspace(1, 12, 12))
        assert est.xi == pytest.approx(2.0, abs=1e-6)
        assert est.slope == pytest.approx(2.0, abs=1e-9)  # tail exactly linear in L
        assert est.method == "analytic"

    def test_gamma_reproduces_abscissa(self):
        est = tail_xi_estimate(WaitingLaw.gamma(1.25, 2.0), np.linspace(4, 14, 6))
        assert est.xi == pytest.approx(2.0, abs=1e-6)
        assert est.slope == pytest.approx(2.0, rel=0.06)  # fit carries the prefactor bias

    def test_pareto_slope_vanishes(self):
        est = tail_xi_estimate(WaitingLaw.pareto(1.0, 1.0), np.linspace(800, 1200, 9))
        assert est.xi == 0.0
        assert 0 < est.slope <= 0.01

    def test_deterministic_truncates_grid(self):
        est = tail_xi_estimate(WaitingLaw.deterministic(3.0), [1.0, 2.0, 2.5, 4.0, 5.0])
        assert est.warnings
        assert len(est.L_used) == 3

    def test_sampled_exponential(self):
        rng = np.random.default_rng(12)
        x = rng.exponential(scale=3.0, size=1_000_000)
        est = tail_xi_estimate(x, np.linspace(3, 24, 8))
        assert est.method == "sampled"
        assert est.xi == pytest.approx(1.0 / 3.0, rel=0.10)

    def test_sampled_truncation_warning(self):
        rng = np.random.default_rng(1)
        x = rng.exponential(scale=1.0, size=2000
                            )
        est = tail_xi_estimate(x, [0.5, 1.0, 2.0, 50.0, 60.0])
        assert est.warnings

    def test_grid_checks(self):
        with pytest.raises(ValueError):
            tail_xi_estimate(WaitingLaw.exponential(1.0), [1.0, 2.0])
        with pytest.raises(ValueError):
            tail_xi_estimate(WaitingLaw.exponential(1.0), [2.0, 1.0, 3.0])


class TestEntropyBudget:
    def test_m2_converges_to_rate(self):
        eb = entropy_budget(M2, CENTER, [1000.0], 4000, 9)
        assert eb.limit == pytest.approx(rate_primal(M2, CENTER))
        assert eb.values[0] == pytest.approx(eb.limit, rel=0.05)

    def test_at_stationary_measure_is_zero(self):
        eb = entropy_budget(M2, stationary_measure(M2), [10.0, 100.0], 500, 3)
        assert eb.entropy == 0.0
        assert all(v == 0.0 for v in eb.values)

    def test_unit_clock_deterministic_value(self):
        m = RateModel(("a", "b"), [0.5, 0.5], [1.0, 1.0])
        nu = MeasureVec([0.8, 0.2])
        eb = entropy_budget(m, nu, [7.5], 500, 1)
        h = relative_entropy(nu.ac, m.mu)
        assert eb.values[0] == pytest.approx(h * math.ceil(7.5) / 7.5, abs=1e-12)
        assert eb.stderrs[0] == 0.0

    def test_rejects_singular_inputs(self):
        m = RateModel(("a", "b"), [0.5, 0.5], [1.0, 2.0], ("s",), [0.7])
        with pytest.raises(ValueError):
            entropy_budget(m, MeasureVec([0.5, 0.3], [0.2]), [10.0], 500, 1)
