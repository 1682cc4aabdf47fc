from __future__ import annotations

import math
import os
import subprocess
import sys

import numpy as np
import pytest
from scipy import stats

from renlab.model import BinnedJumpModel, JumpModel, MeasureVec, RateModel, WaitingLaw
from renlab.rate import rate_dual
from renlab.simulate import (
    SizeCapError,
    _run_paths,
    assemble_pi,
    empirical_moments,
    exact_distribution,
    mc_empirical_law,
    sample_trajectory,
    tilted_model,
)

M2 = RateModel(("a", "b"), [0.5, 0.5], [1.0, 2.0])


def jump_model():
    jm = JumpModel(("y", "z"), [0.4, 0.6], (WaitingLaw.exponential(1.0), WaitingLaw.gamma(2.0, 1.5)))
    return BinnedJumpModel(jm, tuple(np.arange(0.0, 8.5, 0.5)), 8.0)


class TestTrajectory:
    def test_unit_clock(self):
        m = RateModel(("a", "b", "c"), [0.2, 0.3, 0.5], [1.0, 1.0, 1.0])
        tr = sample_trajectory(m, 5.0, 17)
        assert tr.n_t == 4
        assert len(tr.visited) == 5
        counts = np.bincount(tr.visited, minlength=3)
        np.testing.assert_allclose(tr.pi.ac, counts / 5.0)

    def test_hand_traced_path(self):
        # seed 13 draws (a, a, b); the split identity gives 2/3 on a, 1/3 on b
        tr = sample_trajectory(M2, 3.0, 13)
        assert tr.visited == (0, 0, 1)
        assert tr.n_t == 2
        np.testing.assert_allclose(tr.pi.ac, [2.0 / 3.0, 1.0 / 3.0])
        np.testing.assert_allclose(tr.arrivals, [0.0, 1.0, 2.0, 4.0])

    def test_seed_determinism(self):
        a = sample_trajectory(M2, 50.0, 99)
        b = sample_trajectory(M2, 50.0, 99)
        assert a.visited == b.visited
        assert np.array_equal(a.arrivals, b.arrivals)
        assert np.array_equal(a.pi.ac, b.pi.ac)

    @pytest.mark.parametrize("model,t", [(M2, 37.3), (jump_model(), 23.7)])
    def test_invariants_and_reconstruction(self, model, t):
        rm = model if isinstance(model, RateModel) else model.model
        for seed in range(25):
            tr = sample_trajectory(model, t, seed)
            assert tr.arrivals[0] == 0.0
            assert np.all(np.diff(tr.arrivals) > 0)
            assert tr.arrivals[tr.n_t] < t <= tr.arrivals[tr.n_t + 1]
            assert len(tr.visited) == tr.n_t + 1
            assert abs(tr.pi.total - 1.0) < 1e-12
            rebuilt = assemble_pi(rm.n_support, rm.n_singular, tr.visited,
                                  np.diff(tr.arrivals), t)
            assert np.array_equal(rebuilt.ac, tr.pi.ac)
            assert np.array_equal(rebuilt.sing, tr.pi.sing)


class TestExactDistribution:
    def test_m2_t3(self):
        law = exact_distribution(M2, 3)
        assert law.atoms[(3, 0)] == 0.125  # the all-a path
        assert law.total() == pytest.approx(1.0, abs=1e-12)

    def test_unit_clock_is_multinomial(self):
        m = RateModel(("a", "b", "c"), [0.2, 0.3, 0.5], [1.0, 1.0, 1.0])
        t = 5
        law = exact_distribution(m, t)
        assert law.total() == pytest.approx(1.0, abs=1e-12)
        for key, p in law.atoms.items():
            counts = [k for k in key]
            assert sum(counts) == t
            expect = stats.multinomial.pmf(counts, t, m.mu)
            assert p == pytest.approx(expect, rel=1e-9)

    def test_caps_and_preconditions(self):
        with pytest.raises(SizeCapError):
            exact_distribution(M2, 31)
        big = RateModel(tuple("abcdefg"), np.full(7, 1 / 7), np.ones(7))
        with pytest.raises(SizeCapError):
            exact_distribution(big, 5)
        frac = RateModel(("a",), [1.0], [0.5])
        with pytest.raises(ValueError):
            exact_distribution(frac, 5)

    def test_monte_carlo_agreement(self):
        n = 200_000
        law = exact_distribution(M2, 10)
        freq = mc_empirical_law(M2, 10, n, 421)
        assert sum(freq.values()) == n
        for key, p in law.atoms.items():
            if p < 1e-3:
                continue
            se = math.sqrt(p * (1 - p) / n)
            assert abs(freq.get(key, 0) / n - p) < 4 * se


class TestTiltedModel:
    def test_identity(self):
        out = tilted_model(M2, np.zeros(2))
        np.testing.assert_allclose(out.mu, M2.mu)

    def test_dual_certificate_tilt_gives_nubar(self):
        nu = MeasureVec([0.5, 0.5])
        _, cert = rate_dual(M2, nu)
        out = tilted_model(M2, cert.f_support)
        np.testing.assert_allclose(out.mu, [2.0 / 3.0, 1.0 / 3.0], rtol=1e-9)

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError, match="not normalized"):
            tilted_model(M2, np.array([0.5, 0.5]))


class TestEmpiricalMoments:
    def test_unit_clock_exact(self):
        m = RateModel(("a",), [1.0], [1.0])
        est = empirical_moments(m, 100.0, 200, 3)
        assert est.mean == 99.0 / 100.0
        assert est.stderr == 0.0

    def test_renewal_limit_m2(self):
        est = empirical_moments(M2, 500.0, 4000, 11)
        assert est.mean == pytest.approx(1.0 / 1.5, rel=0.02)

    def test_jump_poisson(self):
        jm = JumpModel(("y",), [1.0], (WaitingLaw.exponential(1.0),))
        bjm = BinnedJumpModel(jm, tuple(np.arange(0.0, 10.5, 0.5)), 10.0)
        est = empirical_moments(bjm, 400.0, 4000, 5)
        assert est.mean == pytest.approx(1.0, rel=0.02)

    def test_requires_replicas(self):
        with pytest.raises(ValueError):
            empirical_moments(M2, 10.0, 99, 0)

    def test_thread_count_does_not_change_results(self):
        a = empirical_moments(M2, 50.0, 20_000, 7, threads=1)
        b = empirical_moments(M2, 50.0, 20_000, 7, threads=4)
        assert a == b


class TestBoundedExponentialFunctional:
    def test_no_growth_under_normalized_tilt(self):
        # f from the dual certificate satisfies mu(e^(tau f)) = 1, so the
        # t-normalized exponential functional must not trend upward
        nu = MeasureVec([0.5, 0.5])
        _, cert = rate_dual(M2, nu)
        f = cert.f_support
        values = []
        for t in range(10, 55, 5):
            def summarize(occ, n_t, logw, t=t):
                v = np.exp(t * ((occ[:, :2] / t) @ f))
                return float(v.sum()), v.size

            parts = _run_paths(M2, float(t), 20_000, 31, summarize)
            values.append(sum(p[0] for p in parts) / 20_000 / t)
        assert max(values) / min(values) < 10.0


@pytest.mark.skipif(os.environ.get("RENLAB_BACKEND", "") != "", reason="backend pinned by env")
class TestBackendParity:
    def test_bitwise_identical_outputs(self):
        code = (
            "import numpy as np, json, sys\n"
            "from renlab import backend\n"
            "from renlab.model import RateModel, JumpModel, BinnedJumpModel, WaitingLaw\n"
            "from renlab.simulate import _run_paths\n"
            "m2 = RateModel(('a','b'), [0.5,0.5], [1.0,2.0])\n"
            "jm = JumpModel(('y','z'), [0.4,0.6], (WaitingLaw.exponential(1.0), WaitingLaw.gamma(2.0,1.5)))\n"
            "bjm = BinnedJumpModel(jm, tuple(np.arange(0,8.5,0.5)), 8.0)\n"
            "out = []\n"
            "def summ(occ, n_t, logw):\n"
            "    return occ.sum(axis=0).tolist(), int(n_t.sum()), (None if logw is None else logw.sum())\n"
            "out.append(_run_paths(m2, 17.3, 9000, 123, summ))\n"
            "out.append(_run_paths(bjm, 9.7, 5000, 99, summ))\n"
            "out.append(_run_paths(m2, 11.0, 3000, 5, summ, tilt=np.array([2/3,1/3])))\n"
            "print(json.dumps([backend.BACKEND, repr(out)]))\n"
        )
        outs = {}
        for env_backend in ("", "python"):
            env = dict(os.environ)
            if env_backend:
                env["RENLAB_BACKEND"] = env_backend
            else:
                env.pop("RENLAB_BACKEND", None)
            r = subprocess.run([sys.executable, "-c", code], capture_output=True, env=env, text=True)
            assert r.returncode == 0, r.stderr
            backend_name, payload = __import__("json").loads(r.stdout)
            outs[backend_name] = payload
        assert set(outs) == {"cython", "python"}, "both backends must be exercised"
        assert outs["cython"] == outs["python"]
