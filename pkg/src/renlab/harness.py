"""Numerical verification of the large-deviation decay of the empirical
measure: ball infima of the rate, exact and Monte-Carlo decay slopes,
importance sampling, tail-exponent estimation, and the entropy budget of
the tilted process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import convex
from .model import EPS_MASS, MeasureVec, RateModel, WaitingLaw, abscissa, tail_prob
from .rate import DUAL_CAP, nubar, rate_primal, relative_entropy, stationary_measure
from .simulate import _run_paths, exact_distribution

__all__ = [
    "BallInfimum",
    "LdpReport",
    "XiEstimate",
    "EntropyBudget",
    "ball_infimum",
    "constrained_infimum",
    "mc_ldp",
    "exact_ldp",
    "tail_xi_estimate",
    "entropy_budget",
    "tv_distance",
]


def tv_distance(w1: np.ndarray, w2: np.ndarray) -> float:
    """Total variation on the finite site set: half the L1 distance."""
    return 0.5 * float(np.abs(np.asarray(w1) - np.asarray(w2)).sum())


@dataclass(frozen=True)
class BallInfimum:
    value: float
    argmin: MeasureVec
    certified: bool
    spread: float


def _capped_objective(model: RateModel):
    """Rate with singular exponents capped, plus its gradient; smooth enough
    for projected descent while agreeing with the true rate wherever the
    true rate is finite."""
    tau = model.tau
    mu = model.mu
    n_sup = model.n_support
    xi_cap = np.minimum(model.xi, DUAL_CAP)

    def objective(x: np.ndarray) -> float:
        ac = x[:n_sup]
        r = ac / tau
        q = float(r.sum())
        val = float(x[n_sup:] @ xi_cap)
        if q > 0.0:
            nb = r / q
            mask = nb > 0.0
            val += q * float(nb[mask] @ np.log(nb[mask] / mu[mask]))
        return val

    def gradient(x: np.ndarray) -> np.ndarray:
        ac = x[:n_sup]
        r = ac / tau
        q = float(r.sum())
        g = np.empty_like(x)
        if q > 0.0:
            ratio = np.maximum(r / q / mu, 1e-280)
            g[:n_sup] = np.log(ratio) / tau
        else:
            g[:n_sup] = 0.0
        g[n_sup:] = xi_cap
        return g

    return objective, gradient


def _solve(model: RateModel, project, starts, iters=3000) -> tuple[np.ndarray, float, float]:
    objective, gradient = _capped_objective(model)
    x, val, spread = convex.projected_descent(objective, gradient, project, starts, iters=iters)
    # Dykstra can stop a few ulp outside the simplex; snap back
    x = np.maximum(x, 0.0)
    x = x / x.sum()
    return x, val, spread


def ball_infimum(model: RateModel, center: MeasureVec, eps: float, tol: float = 1e-5) -> BallInfimum:
    """Minimize the rate over the closed TV ball of radius ``eps`` around
    ``center`` inside the probability simplex, by projected gradient descent
    with restarts; certified when the restarts agree within ``tol``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not center.matches(model):
        raise ValueError("center does not match the model's site layout")
    c = center.weights
    radius = 2.0 * eps  # TV eps == L1 2*eps

    def project(v):
        return convex.project_simplex_l1(v, c, radius)

    mu_meas = stationary_measure(model).weights
    starts = [c, mu_meas, 0.5 * (c + mu_meas), 0.25 * c + 0.75 * mu_meas]
    rng = np.random.default_rng(7)
    starts += [rng.dirichlet(np.ones(model.n_sites)) for _ in range(2)]
    x, _, spread = _solve(model, project, starts)
    arg = MeasureVec.from_weights(model, x)
    true_val = rate_primal(model, arg)
    return BallInfimum(float(true_val), arg, spread <= tol, float(spread))


def _tilted_family_point(model: RateModel, g: np.ndarray, b: float) -> np.ndarray:
    """Member of the stationarity family nubar ~ mu exp(tau (a + b g)),
    mapped back to a measure; ``a`` normalizes nubar by bisection."""
    tau, mu = model.tau, model.mu
    base = np.log(mu) + tau * b * g[: model.n_support]

    def total(a: float) -> float:
        return float(np.exp(base + tau * a).sum())

    lo, hi, width = -1.0, 1.0, 1.0
    while total(lo) > 1.0:
        lo -= width
        width *= 2.0
    width = 1.0
    while total(hi) < 1.0:
        hi += width
        width *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if total(mid) < 1.0:
            lo = mid
        else:
            hi = mid
    nb = np.exp(base + tau * 0.5 * (lo + hi))
    w = tau * nb
    return w / w.sum()


def _tilt_start(model: RateModel, g: np.ndarray, target: float) -> np.ndarray:
    """Bracket the tilt parameter so the family point matches the target
    observable mean; the family contains the constrained optimizer, so this
    lands projected descent essentially at the answer."""
    def mean_of(b: float) -> float:
        x = _tilted_family_point(model, g, b)
        return float(x @ g[: model.n_support])

    lo, hi, width = -1.0, 1.0, 1.0
    for _ in range(80):
        if mean_of(lo) <= target:
            break
        lo -= width
        width *= 2.0
    width = 1.0
    for _ in range(80):
        if mean_of(hi) >= target:
            break
        hi += width
        width *= 2.0
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        if mean_of(mid) < target:
            lo = mid
        else:
            hi = mid
    return _tilted_family_point(model, g, 0.5 * (lo + hi))


def constrained_infimum(model: RateModel, observable: np.ndarray, target: float,
                        tol: float = 1e-5) -> BallInfimum:
    """Minimize the rate over {nu in simplex : nu(observable) = target};
    the contraction of the decay rate to a scalar observable.

    Projected descent with restarts, warm-started inside the exponential
    stationarity family that contains the optimizer (supported on the
    a.c. sites; singular sites only lower the observable's reach when
    their exponent is zero, which this solver does not exploit).
    """
    g = np.asarray(observable, dtype=np.float64)
    if g.size != model.n_sites:
        raise ValueError("observable must give one value per site")
    lo, hi = float(g.min()), float(g.max())
    if not (lo <= target <= hi):
        raise ValueError(f"target {target!r} outside the observable range [{lo!r}, {hi!r}]")

    def project(v):
        return convex.project_simplex_affine(v, g, target)

    warm = np.zeros(model.n_sites)
    warm[: model.n_support] = _tilt_start(model, g, target)
    x, _, spread = _solve(model, project, [warm], iters=600)
    arg = MeasureVec.from_weights(model, x)
    value = float(rate_primal(model, arg))
    certified = _kkt_stationary(model, g, x, tol=1e-6)
    return BallInfimum(value, arg, certified, float(spread))


def _kkt_stationary(model: RateModel, g: np.ndarray, x: np.ndarray, tol: float) -> bool:
    """Convexity certificate for the constrained minimum: the rate gradient
    must be affine in the observable across the supported coordinates.
    Entropy minimizers are interior, so coordinates left at zero are solver
    dust rather than active bounds and carry no slack condition."""
    _, gradient = _capped_objective(model)
    gr = gradient(x)
    on = x > 1e-9
    if on.sum() < 2:
        return True
    A = np.stack([np.ones(int(on.sum())), g[on]], axis=1)
    coef, *_ = np.linalg.lstsq(A, gr[on], rcond=None)
    resid = float(np.abs(gr[on] - A @ coef).max())
    scale = max(1.0, float(np.abs(gr[on]).max()))
    return resid <= max(tol, 1e-4) * scale


def _wls_line(x: np.ndarray, y: np.ndarray, w: np.ndarray):
    """Weighted least squares fit y ~ a + b x; returns (b, se_b, a)."""
    sw = w.sum()
    xm = (w * x).sum() / sw
    ym = (w * y).sum() / sw
    sxx = (w * (x - xm) ** 2).sum()
    slope = (w * (x - xm) * (y - ym)).sum() / sxx
    intercept = ym - slope * xm
    dof = max(x.size - 2, 1)
    resid = y - intercept - slope * x
    sigma2 = (w * resid**2).sum() / dof * (x.size / sw if sw > 0 else 1.0)
    se = math.sqrt(max(sigma2, 0.0) / sxx) if sxx > 0 else math.inf
    return float(slope), float(se), float(intercept)


@dataclass(frozen=True)
class LdpReport:
    """Decay of P(TV(pi_t, center) < eps) across horizons, with the fitted
    slope of -log p / t against the rate infimum over the ball."""

    center: MeasureVec
    eps: float
    metric: str
    t_grid: tuple[float, ...]
    probs: tuple[float, ...]
    stderrs: tuple[float, ...]
    methods: tuple[str, ...]
    flags: tuple[str, ...]
    slope: float
    slope_stderr: float
    intercept: float
    rate_inf: float
    rel_gap: float

    def csv_rows(self):
        yield ("t", "p", "stderr", "method")
        for t, p, se, m in zip(self.t_grid, self.probs, self.stderrs, self.methods):
            yield (t, p, se, m)

    def as_json_dict(self, model: RateModel | None = None) -> dict:
        center = self.center.as_dict(model) if model is not None else list(self.center.weights)
        return {
            "center": center,
            "eps": self.eps,
            "metric": self.metric,
            "points": [
                {"t": t, "p": p, "stderr": se, "method": m, "flag": fl}
                for t, p, se, m, fl in zip(self.t_grid, self.probs, self.stderrs, self.methods, self.flags)
            ],
            "slope": self.slope,
            "slope_stderr": self.slope_stderr,
            "intercept": self.intercept,
            "rate_inf": self.rate_inf,
            "rel_gap": self.rel_gap,
        }


def _fit_report(center, eps, t_grid, probs, stderrs, methods, flags, rate_inf) -> LdpReport:
    ts, ys, ws = [], [], []
    have_stderr = any(se > 0 for se in stderrs)
    for t, p, se, fl in zip(t_grid, probs, stderrs, flags):
        if fl:
            continue
        ts.append(t)
        ys.append(-math.log(p))
        if have_stderr and se > 0:
            ws.append((p / se) ** 2)  # 1/Var[-log p] by the delta method
        else:
            ws.append(1.0)
    if len(ts) >= 2:
        slope, slope_se, intercept = _wls_line(np.array(ts), np.array(ys), np.array(ws))
    else:
        slope, slope_se, intercept = math.nan, math.inf, math.nan
    gap = abs(slope - rate_inf) / rate_inf if rate_inf > 0 else abs(slope)
    return LdpReport(
        center, eps, "tv", tuple(float(t) for t in t_grid), tuple(probs), tuple(stderrs),
        tuple(methods), tuple(flags), slope, slope_se, intercept, rate_inf, gap,
    )


def mc_ldp(model, center: MeasureVec, eps: float, t_grid, n: int, seed: int,
           use_is: bool = False, threads: int = 1, rate_inf: float | None = None) -> LdpReport:
    """Monte-Carlo estimate of P(TV(pi_t, center) < eps) for each horizon.

    With ``use_is`` the states are drawn i.i.d. from the tilt nubar(center)
    and every path is reweighted by its exact likelihood ratio, which leaves
    the estimator unbiased while concentrating paths near the target.
    """
    if n < 1000:
        raise ValueError("need n >= 1000 replicas")
    rm = model if isinstance(model, RateModel) else model.model
    if not center.matches(rm):
        raise ValueError("center does not match the model's site layout")
    if abs(center.total - 1.0) > 1e-9:
        raise ValueError("center must be a probability vector")
    tilt = nubar(center, rm) if use_is else None
    cw = center.weights
    if rate_inf is None:
        rate_inf = ball_infimum(rm, center, eps).value

    probs, stderrs, methods, flags = [], [], [], []
    for ti, t in enumerate(t_grid):
        def summarize(occ, n_t, logw):
            pi = occ / t
            tv = 0.5 * np.abs(pi - cw[None, :]).sum(axis=1)
            ind = tv < eps
            stat = np.exp(logw) * ind if logw is not None else ind.astype(np.float64)
            return float(stat.sum()), float((stat * stat).sum()), int(ind.sum())

        parts = _run_paths(model, float(t), n, seed, summarize, tilt=tilt, stream_key=(ti,))
        tot = sum(p[0] for p in parts)
        tot2 = sum(p[1] for p in parts)
        hits = sum(p[2] for p in parts)
        p_hat = tot / n
        var = max(tot2 / n - p_hat**2, 0.0)
        se = math.sqrt(var / n)
        methods.append("is" if use_is else "mc")
        if hits == 0:
            probs.append(0.0)
            stderrs.append(0.0)
            flags.append("underflow")
        else:
            probs.append(p_hat)
            stderrs.append(se)
            flags.append("")
    return _fit_report(center, eps, t_grid, probs, stderrs, methods, flags, rate_inf)


def exact_ldp(model: RateModel, center: MeasureVec, eps: float, t_grid, cap: int = 30,
              rate_inf: float | None = None) -> LdpReport:
    """Exact ball probabilities from the enumerated law of pi_t (integer
    holding times), fitted like the Monte-Carlo report but with zero noise."""
    if not center.matches(model):
        raise ValueError("center does not match the model's site layout")
    cw = center.weights
    if rate_inf is None:
        rate_inf = ball_infimum(model, center, eps).value
    probs, flags = [], []
    for t in t_grid:
        law = exact_distribution(model, int(t), cap=cap)
        p = 0.0
        for key, pr in law.atoms.items():
            w = np.zeros(model.n_sites)
            w[: model.n_support] = np.asarray(key, dtype=np.float64) / t
            if tv_distance(w, cw) < eps:
                p += pr
        if p <= 0.0:
            probs.append(0.0)
            flags.append("underflow")
        else:
            probs.append(float(p))
            flags.append("")
    zeros = [0.0] * len(probs)
    return _fit_report(center, eps, t_grid, probs, zeros, ["exact"] * len(probs), flags, rate_inf)


@dataclass(frozen=True)
class XiEstimate:
    """Tail exponent with the regression diagnostics behind it."""

    xi: float
    method: str
    slope: float
    slope_stderr: float
    intercept: float
    L_used: tuple[float, ...]
    neg_log_tail: tuple[float, ...]
    warnings: tuple[str, ...]


def tail_xi_estimate(source, L_grid, n: int | None = None, seed: int | None = None) -> XiEstimate:
    """Estimate the tail exponent -lim (1/L) log P(T >= L).

    For a parametric law the exponent is its abscissa of convergence, exact;
    the grid regression is still run and reported as a diagnostic.  For a
    sample array the regression slope itself is the estimate, with a
    standard error from the binomial noise of the empirical survival.
    """
    L = np.asarray(list(L_grid), dtype=np.float64)
    if L.size < 3 or np.any(np.diff(L) <= 0):
        raise ValueError("L_grid must be increasing with at least 3 points")
    warns: list[str] = []

    if isinstance(source, WaitingLaw):
        tails = np.array([tail_prob(source, x) for x in L])
        keep = tails > 0.0
        if not keep.all():
            warns.append(f"tail vanishes from L={L[keep.sum()]:g}; grid truncated")
            L, tails = L[keep], tails[keep]
        y = -np.log(tails)
        slope, se, intercept = _wls_line(L, y, np.ones_like(L))
        return XiEstimate(abscissa(source), "analytic", slope, se, intercept,
                          tuple(L), tuple(y), tuple(warns))

    x = np.sort(np.asarray(source, dtype=np.float64))
    n_tot = x.size
    counts = n_tot - np.searchsorted(x, L, side="left")
    keep = counts > 0
    if not keep.all():
        warns.append(f"empty tail beyond L={L[keep.sum()]:g}; grid truncated")
        L, counts = L[keep], counts[keep]
    if L.size < 2:
        raise ValueError("not enough occupied grid points to fit a slope")
    p = counts / n_tot
    y = -np.log(p)
    se_log = np.sqrt((1.0 - p) / counts)
    w = 1.0 / np.maximum(se_log, 1e-12) ** 2
    slope, se, intercept = _wls_line(L, y, w)
    return XiEstimate(slope, "sampled", slope, se, intercept, tuple(L), tuple(y), tuple(warns))


@dataclass(frozen=True)
class EntropyBudget:
    """Per-horizon entropy cost H(nubar|mu) (E[N_t]+1)/t of following the
    tilted process, converging to the rate of the target measure."""

    t_grid: tuple[float, ...]
    values: tuple[float, ...]
    stderrs: tuple[float, ...]
    entropy: float
    limit: float


def entropy_budget(model: RateModel, nu: MeasureVec, t_grid, n: int, seed: int,
                   threads: int = 1) -> EntropyBudget:
    """Estimate the tilted-process entropy budget under i.i.d. nubar draws."""
    if float(nu.sing.sum()) > EPS_MASS or nu.defect > 1e-9:
        raise ValueError("entropy budget requires an absolutely continuous probability")
    nb = nubar(nu, model)
    h = relative_entropy(nb, model.mu)
    tilted = RateModel(model.support_labels, nb, model.tau,
                       model.singular_labels, model.xi, model.xi_inf)
    values, stderrs = [], []
    for ti, t in enumerate(t_grid):
        def summarize(occ, n_t, logw):
            x = n_t.astype(np.float64)
            return float(x.sum()), float((x * x).sum()), x.size

        parts = _run_paths(tilted, float(t), n, seed, summarize, threads=threads, stream_key=(ti,))
        tot = sum(p[0] for p in parts)
        tot2 = sum(p[1] for p in parts)
        cnt = sum(p[2] for p in parts)
        mean_n = tot / cnt
        var_n = max(tot2 / cnt - mean_n**2, 0.0)
        values.append(h * (mean_n + 1.0) / t)
        stderrs.append(h * math.sqrt(var_n / cnt) / t)
    limit = rate_primal(model, nu)
    return EntropyBudget(tuple(float(t) for t in t_grid), tuple(values), tuple(stderrs), h, limit)
