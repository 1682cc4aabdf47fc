from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from renlab.model import (
    BinnedJumpModel,
    JumpModel,
    MeasureVec,
    RateModel,
    WaitingLaw,
    interval_prob,
    partial_moment,
)
from renlab.rate import (
    dual_ascent,
    minimizer_classification,
    nubar,
    rate_dual,
    rate_primal,
    recovery_sequence,
    relative_entropy,
    stationary_measure,
)

M2 = RateModel(("a", "b"), [0.5, 0.5], [1.0, 2.0])
H_EXAMPLE = (2.0 / 3.0) * math.log(4.0 / 3.0) + (1.0 / 3.0) * math.log(2.0 / 3.0)
I_HALF = 0.75 * H_EXAMPLE  # rate of (.5,.5) on M2


def random_simplex(rng, m):
    return rng.dirichlet(np.ones(m))


class TestRelativeEntropy:
    def test_identity_is_zero(self):
        assert relative_entropy([0.3, 0.7], [0.3, 0.7]) == 0.0

    def test_scalar_example(self):
        assert relative_entropy([2 / 3, 1 / 3], [0.5, 0.5]) == pytest.approx(H_EXAMPLE, abs=1e-15)
        assert H_EXAMPLE == pytest.approx(0.0566, abs=5e-5)

    def test_variational_form_grid_search(self):
        # sup_phi nu(phi) - log mu(e^phi); one free coordinate by shift invariance
        nu = np.array([2 / 3, 1 / 3])
        mu = np.array([0.5, 0.5])
        phis = np.linspace(-2.0, 2.0, 40001)
        vals = nu[0] * phis - np.log(mu[0] * np.exp(phis) + mu[1])
        assert vals.max() == pytest.approx(relative_entropy(nu, mu), abs=1e-7)

    def test_singular_gives_infinity(self):
        assert relative_entropy([1.0, 0.0], [0.0, 1.0]) == math.inf

    def test_input_checks(self):
        with pytest.raises(ValueError, match="length"):
            relative_entropy([1.0], [0.5, 0.5])
        with pytest.raises(ValueError, match="normalized"):
            relative_entropy([0.5, 0.4], [0.5, 0.5])


class TestNubarStationary:
    def test_unit_clock_nubar_is_normalized_ac(self):
        m = RateModel(("a", "b"), [0.4, 0.6], [1.0, 1.0])
        nu = MeasureVec([0.25, 0.25])
        np.testing.assert_allclose(nubar(nu, m), [0.5, 0.5])

    def test_m2_example(self):
        np.testing.assert_allclose(nubar(MeasureVec([0.5, 0.5]), M2), [2 / 3, 1 / 3])

    def test_zero_ac_mass_errors(self):
        with pytest.raises(ValueError, match="nubar undefined"):
            nubar(MeasureVec([0.0, 0.0]), M2)

    def test_stationary_measure(self):
        np.testing.assert_allclose(stationary_measure(M2).ac, [1 / 3, 2 / 3])
        m = RateModel(("a", "b"), [0.4, 0.6], [1.0, 1.0])
        np.testing.assert_allclose(stationary_measure(m).ac, m.mu)
        single = RateModel(("a",), [1.0], [2.5])
        np.testing.assert_allclose(stationary_measure(single).ac, [1.0])


class TestRatePrimal:
    def test_zero_exactly_at_stationary(self):
        assert rate_primal(M2, stationary_measure(M2)) <= 1e-15

    def test_half_half_value(self):
        assert rate_primal(M2, MeasureVec([0.5, 0.5])) == pytest.approx(I_HALF, abs=1e-15)
        assert I_HALF == pytest.approx(0.042475, abs=5e-7)

    def test_defect_term(self):
        m = RateModel(("a", "b"), [0.5, 0.5], [1.0, 2.0], xi_inf=2.0)
        nu0 = MeasureVec([0.5, 0.5])
        scaled = MeasureVec([0.4, 0.4])  # mass 0.8, defect 0.2
        assert rate_primal(m, scaled) == pytest.approx(0.8 * rate_primal(m, nu0) + 0.4, rel=1e-12)

    def test_zero_exponent_site_is_free(self):
        m = RateModel(("a", "b"), [0.5, 0.5], [1.0, 2.0], ("e",), [0.0])
        nu = MeasureVec([1 / 3 * 0.7, 2 / 3 * 0.7], [0.3])
        assert rate_primal(m, nu) <= 1e-15

    def test_infinite_exponent_propagates(self):
        m = RateModel(("a",), [1.0], [1.0], ("s",), [math.inf])
        assert rate_primal(m, MeasureVec([0.5], [0.5])) == math.inf
        assert rate_primal(m, MeasureVec([1.0], [0.0])) == 0.0

    def test_sanov_recovery_unit_clock(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            m = rng.integers(2, 6)
            mu = random_simplex(rng, m)
            nu = random_simplex(rng, m)
            model = RateModel(tuple(map(str, range(m))), mu, np.ones(m))
            target = relative_entropy(nu, mu)
            assert abs(rate_primal(model, MeasureVec(nu)) - target) <= 1e-12

    def test_entropy_budget_identity(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            m = rng.integers(2, 6)
            model = RateModel(tuple(map(str, range(m))), random_simplex(rng, m),
                              rng.uniform(0.3, 4.0, m))
            nu = MeasureVec(random_simplex(rng, m))
            q = float((nu.ac / model.tau).sum())
            lhs = q * relative_entropy(nubar(nu, model), model.mu)
            assert lhs == rate_primal(model, nu)


class TestRateDual:
    def test_m2_agreement_and_certificate(self):
        nu = MeasureVec([0.5, 0.5])
        value, cert = rate_dual(M2, nu)
        assert value == pytest.approx(I_HALF, abs=1e-9)
        assert abs(cert.constraint_residual) <= 1e-9
        total = float((M2.mu * np.exp(M2.tau * cert.f_support)).sum())
        assert total <= 1.0 + 1e-9

    def test_minimizer_certificate_is_flat(self):
        value, cert = rate_dual(M2, stationary_measure(M2))
        assert abs(value) <= 1e-9
        np.testing.assert_allclose(cert.f_support, [0.0, 0.0], atol=1e-9)

    def test_pure_singular_mass(self):
        m = RateModel(("a",), [1.0], [1.0], ("s",), [0.7])
        value, cert = rate_dual(m, MeasureVec([0.0], [1.0]))
        assert value == pytest.approx(0.7, abs=1e-12)
        assert cert.f_singular[0] == 0.7
        assert abs(cert.constraint_residual) <= 1e-9

    def test_gradient_ascent_agrees(self):
        nu = MeasureVec([0.5, 0.5])
        best, _ = dual_ascent(M2, nu)
        assert best == pytest.approx(I_HALF, abs=1e-6)

    def test_randomized_primal_dual(self):
        rng = np.random.default_rng(7)
        finite_gaps = []
        diverged = 0
        for _ in range(100):
            m = int(rng.integers(2, 7))
            nsing = int(rng.integers(0, 3))
            model = RateModel(
                tuple(f"s{j}" for j in range(m)),
                random_simplex(rng, m),
                rng.uniform(0.2, 5.0, m),
                tuple(f"x{j}" for j in range(nsing)),
                rng.choice([0.0, 0.7, math.inf], size=nsing),
                xi_inf=float(rng.choice([2.0, math.inf])),
            )
            w = random_simplex(rng, m + nsing)
            if rng.random() < 0.25:
                w = w * 0.85  # leave a defect
            nu = MeasureVec(w[:m], w[m:])
            p = rate_primal(model, nu)
            d, _ = rate_dual(model, nu)
            if math.isinf(p) or math.isinf(d):
                assert math.isinf(p) and math.isinf(d)
                diverged += 1
            else:
                finite_gaps.append(abs(p - d))
        assert max(finite_gaps) <= 1e-6
        assert diverged > 0


class TestConvexityAndRegularity:
    @settings(max_examples=100, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_convexity(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(2, 6))
        model = RateModel(tuple(map(str, range(m))), random_simplex(rng, m),
                          rng.uniform(0.2, 4.0, m), ("s",), [rng.choice([0.0, 0.7, 2.0])])
        w1, w2 = random_simplex(rng, m + 1), random_simplex(rng, m + 1)
        a = rng.uniform(0.05, 0.95)
        nu1, nu2 = MeasureVec(w1[:m], w1[m:]), MeasureVec(w2[:m], w2[m:])
        mix = MeasureVec(a * w1[:m] + (1 - a) * w2[:m], a * w1[m:] + (1 - a) * w2[m:])
        lhs = rate_primal(model, mix)
        rhs = a * rate_primal(model, nu1) + (1 - a) * rate_primal(model, nu2)
        assert lhs <= rhs + 1e-9

    def test_lower_semicontinuity_along_sequences(self):
        # no jump up in the limit: the value at a limit point never exceeds
        # the liminf along any convergent sequence (sublevel sets closed)
        rng = np.random.default_rng(5)
        for _ in range(30):
            m = int(rng.integers(2, 5))
            model = RateModel(tuple(map(str, range(m))), random_simplex(rng, m),
                              rng.uniform(0.3, 3.0, m))
            limit = random_simplex(rng, m)
            direction = random_simplex(rng, m) - limit
            vals = []
            for k in range(1, 18):
                point = limit + direction * 4.0 ** (-k)
                point = np.maximum(point, 0)
                point /= point.sum()
                vals.append(rate_primal(model, MeasureVec(point)))
            assert rate_primal(model, MeasureVec(limit)) <= min(vals[-3:]) + 1e-6


class TestMinimizers:
    def test_no_zero_set_unique_minimizer(self):
        rep = minimizer_classification(M2)
        assert rep.case == "unique"
        assert rep.e_labels == ()
        assert rep.ok
        np.testing.assert_allclose(rep.stationary.ac, [1 / 3, 2 / 3])

    def test_zero_set_gives_segment(self):
        m = RateModel(("a", "b"), [0.5, 0.5], [1.0, 2.0], ("e", "f"), [0.0, 0.7])
        rep = minimizer_classification(m)
        assert rep.case == "segment"
        assert rep.e_labels == ("e",)
        assert all(v <= 1e-12 for _, v in rep.zeros)
        assert all(v > 1e-12 for _, v in rep.perturbed)
        assert rep.ok

    def test_infinite_mean_flag(self):
        jm = JumpModel(("y",), [1.0], (WaitingLaw.pareto(0.8, 1.0),))
        bjm = BinnedJumpModel(jm, tuple(np.arange(0.0, 6.5, 0.5)), 6.0)
        assert bjm.model.infinite_mean
        rep = minimizer_classification(bjm)
        assert rep.case == "concentrated"
        assert rep.e_labels == ("y[tail]",)
        assert all(v <= 1e-12 for _, v in rep.zeros)


class TestRecoverySequence:
    def bjm(self):
        jm = JumpModel(("y",), [1.0], (WaitingLaw.exponential(1.0),))
        return BinnedJumpModel(jm, tuple(np.arange(0.0, 4.5, 0.5)), 4.0)

    def test_pure_window_matches_closed_form(self):
        bjm = self.bjm()
        rm = bjm.model
        L, M = 5.0, 20.0
        step = recovery_sequence(bjm, MeasureVec(np.zeros(rm.n_support), [1.0]), L, M)
        phi = bjm.jump.laws[0]
        pw = interval_prob(phi, L, M)
        mean_w = partial_moment(phi, L, M) / pw
        assert step.j_value == pytest.approx(-math.log(pw) / mean_w, abs=1e-9)
        assert step.nu.sing.sum() == 0.0

    def test_without_atoms_passthrough(self):
        bjm = self.bjm()
        rm = bjm.model
        nu = MeasureVec(rm.mu.copy(), np.zeros(rm.n_singular))
        step = recovery_sequence(bjm, nu, 5.0, 20.0)
        assert step.model is rm
        assert step.j_value == rate_primal(rm, nu)

    def test_gap_shrinks_toward_the_rate(self):
        bjm = self.bjm()
        rm = bjm.model
        ac = np.zeros(rm.n_support)
        ac[0], ac[1], ac[2] = 0.35, 0.15, 0.10
        nu = MeasureVec(ac, [0.4])
        i_val = rate_primal(rm, nu)
        gaps = []
        for L in (5.0, 10.0, 20.0, 40.0):
            step = recovery_sequence(bjm, nu, L, 4 * L)
            assert math.isfinite(step.j_value)
            gaps.append(abs(i_val - step.j_value))
        assert all(g1 > g2 for g1, g2 in zip(gaps, gaps[1:]))

    def test_zero_exponent_atom_recovers_to_zero(self):
        jm = JumpModel(("y",), [1.0], (WaitingLaw.pareto(1.5, 0.25),))
        bjm = BinnedJumpModel(jm, tuple(np.arange(0.0, 4.25, 0.25)), 4.0)
        rm = bjm.model
        nu = MeasureVec(np.zeros(rm.n_support), [1.0])
        values = [recovery_sequence(bjm, nu, L, 4 * L).j_value for L in (10.0, 100.0, 1000.0)]
        assert values[0] > values[1] > values[2]
        assert values[2] < 0.01  # the tail exponent here is zero

    def test_window_errors(self):
        bjm = self.bjm()
        rm = bjm.model
        nu = MeasureVec(np.zeros(rm.n_support), [1.0])
        with pytest.raises(ValueError, match="tail threshold"):
            recovery_sequence(bjm, nu, 2.0, 8.0)
        with pytest.raises(ValueError, match="no mass"):
            recovery_sequence(bjm, nu, 800.0, 900.0)
