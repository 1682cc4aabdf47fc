"""Trajectory generation, empirical measures, exact small-horizon laws,
and exponential tilting.

RNG contract: paths are simulated in fixed blocks of ``BLOCK_ROWS``
trajectories.  Block ``b`` of a run with base seed ``s`` owns the
counter-based stream ``Philox(SeedSequence(entropy=s, spawn_key=(b,)))``
and always draws full-block uniform chunks, so every path is a
deterministic function of ``(base seed, block, row)`` alone.  Reductions
fold per-block summaries in block order, making results bit-identical for
a fixed seed regardless of worker count or backend.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import backend
from .model import (
    BinnedJumpModel,
    MeasureVec,
    RateModel,
    WaitingLaw,
    checked,
    quantile,
)

__all__ = [
    "Trajectory",
    "ExactLaw",
    "MeanCI",
    "SizeCapError",
    "sample_trajectory",
    "empirical_moments",
    "exact_distribution",
    "tilted_model",
    "mc_empirical_law",
    "quantile_samples",
    "assemble_pi",
]

BLOCK_ROWS = 4096
_MAX_CHUNKS = 100_000
_KIND_CODE = {"deterministic": 0, "exponential": 1, "gamma": 2, "pareto": 3}


class SizeCapError(ValueError):
    """Raised when an exact enumeration exceeds its configured size cap."""


def _block_rng(base_seed: int, block: int, stream_key: tuple[int, ...] = ()) -> np.random.Generator:
    key = tuple(int(k) for k in stream_key) + (int(block),)
    seq = np.random.SeedSequence(entropy=int(base_seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(seq))


def _cdf(weights: np.ndarray) -> np.ndarray:
    c = np.cumsum(weights)
    c[-1] = 1.0  # guard searchsorted against float shortfall
    return c


class _Tables:
    """Pre-baked sampling tables; ``draw`` consumes the canonical uniform
    layout (one state matrix, plus one time matrix for jump models)."""

    def __init__(self, model):
        if isinstance(model, RateModel):
            self.kind = "rate"
            self.model = model
            self.cdf = _cdf(model.mu)
            self.tau = model.tau
            self.n_sites = model.n_sites
        elif isinstance(model, BinnedJumpModel):
            self.kind = "jump"
            self.model = model.model
            jm = model.jump
            self.pcdf = _cdf(jm.p)
            self.kind_code = np.array([_KIND_CODE[l.kind] for l in jm.laws])
            self.pa = np.array([l.params[0] for l in jm.laws])
            self.pb = np.array([l.params[1] if len(l.params) > 1 else 0.0 for l in jm.laws])
            self.edges = np.asarray(model.edges)
            self.slot_table = model.slot_table
            self.n_sites = self.model.n_sites
        else:
            raise TypeError(f"cannot simulate from {type(model).__name__}")
        self.logratio = None

    def _holding_times(self, state: np.ndarray, u: np.ndarray) -> np.ndarray:
        t = np.empty_like(u)
        code = self.kind_code[state]
        for c in np.unique(code):
            m = code == c
            st, uu = state[m], u[m]
            if c == 0:
                t[m] = self.pa[st]
            elif c == 1:
                t[m] = -np.log1p(-uu) / self.pa[st]
            elif c == 2:
                t[m] = special.gammaincinv(self.pa[st], uu) / self.pb[st]
            else:
                t[m] = self.pb[st] * (1.0 - uu) ** (-1.0 / self.pa[st])
        return np.maximum(t, 1e-300)

    def draw(self, rng: np.random.Generator, canonical_rows: int, cols: int, rows: int):
        if self.kind == "rate":
            u = rng.random((canonical_rows, cols))[:rows]
            site = np.searchsorted(self.cdf, u, side="right").astype(np.int64)
            hold = self.tau[site]
            return np.ascontiguousarray(site), np.ascontiguousarray(hold)
        us = rng.random((canonical_rows, cols))[:rows]
        ut = rng.random((canonical_rows, cols))[:rows]
        state = np.searchsorted(self.pcdf, us, side="right")
        hold = self._holding_times(state, ut)
        slot = np.clip(np.searchsorted(self.edges, hold, side="right") - 1, 0, self.edges.size - 1)
        site = self.slot_table[state, slot]
        return np.ascontiguousarray(site), np.ascontiguousarray(hold)


class _TiltedRateTables(_Tables):
    """Importance-sampling proposal: sites i.i.d. from the tilt ``nubar``
    with per-visit log likelihood ratio log(mu/nubar)."""

    def __init__(self, model: RateModel, nubar: np.ndarray):
        super().__init__(model)
        if np.any(nubar <= 0):
            raise ValueError("importance-sampling tilt must charge every support site")
        self.cdf = _cdf(nubar)
        lr = np.zeros(self.n_sites)
        lr[: model.n_support] = np.log(model.mu) - np.log(nubar)
        self.logratio = lr


class _TiltedJumpTables(_Tables):
    """Binwise tilt for jump models: support sites i.i.d. from ``nubar``,
    holding time redrawn from the law conditioned on the site's bin.

    Tail (singular) sites are never proposed, so the reweighted estimator
    targets events restricted to tail-free paths; the gap is bounded by the
    expected number of tail visits per path.
    """

    def __init__(self, bjm: BinnedJumpModel, nubar: np.ndarray):
        super().__init__(bjm)
        if np.any(nubar <= 0):
            raise ValueError("importance-sampling tilt must charge every support site")
        from .model import tail_prob

        model = bjm.model
        jm = bjm.jump
        self.site_cdf = _cdf(nubar)
        self.site_state = bjm.site_state
        lo, hi = bjm.site_lo, bjm.site_hi
        qlo = np.array([1.0 - tail_prob(jm.laws[s], a) for s, a in zip(self.site_state, lo)])
        qhi = np.array(
            [1.0 if math.isinf(b) else 1.0 - tail_prob(jm.laws[s], b) for s, b in zip(self.site_state, hi)]
        )
        self.qlo, self.qspan = qlo, qhi - qlo
        true_site_prob = model.mu * bjm.support_mass
        lr = np.zeros(self.n_sites)
        lr[: model.n_support] = np.log(true_site_prob) - np.log(nubar)
        self.logratio = lr

    def draw(self, rng, canonical_rows, cols, rows):
        us = rng.random((canonical_rows, cols))[:rows]
        ut = rng.random((canonical_rows, cols))[:rows]
        site = np.searchsorted(self.site_cdf, us, side="right").astype(np.int64)
        state = self.site_state[site]
        q = self.qlo[site] + ut * self.qspan[site]
        hold = self._holding_times(state, q)
        return np.ascontiguousarray(site), np.ascontiguousarray(hold)


def _chunk_cols(model, t: float) -> int:
    if isinstance(model, RateModel):
        mean = model.mu_mean_tau
    else:
        mean = model.jump.mean_holding
    if not math.isfinite(mean) or mean <= 0:
        return 64
    return int(min(8192, max(8, math.ceil(1.35 * t / mean) + 8)))


def _make_tables(model, tilt):
    if tilt is None:
        return _Tables(model)
    if isinstance(model, RateModel):
        return _TiltedRateTables(model, tilt)
    return _TiltedJumpTables(model, tilt)


def _run_paths(model, t, n, seed, block_summary, tilt=None, threads=1,
               block_rows=BLOCK_ROWS, stream_key: tuple[int, ...] = ()):
    """Simulate ``n`` paths to horizon ``t`` and fold each block through
    ``block_summary(occ, n_t, logw)``; returns the summaries in block order.

    ``occ`` already contains the overshoot remainder, so each row sums to
    ``t`` exactly up to float addition.  ``stream_key`` prefixes the block
    spawn keys, giving sub-experiments (for example per-horizon runs)
    independent deterministic streams under one base seed.
    """
    tables = _make_tables(model, tilt)
    cols = _chunk_cols(model, t)
    n_sites = tables.n_sites
    n_blocks = (n + block_rows - 1) // block_rows

    def do_block(b: int):
        rows = min(block_rows, n - b * block_rows)
        rng = _block_rng(seed, b, stream_key)
        s = np.zeros(rows)
        n_t = np.zeros(rows, dtype=np.int64)
        occ = np.zeros((rows, n_sites))
        done = np.zeros(rows, dtype=np.uint8)
        over = np.full(rows, -1, dtype=np.int64)
        rem = np.zeros(rows)
        logw = np.zeros(rows) if tilt is not None else None
        left = rows
        chunks = 0
        while left:
            site, hold = tables.draw(rng, block_rows, cols, rows)
            if tilt is not None:
                n_before = n_t.copy()
                done_before = done.copy()
            buf = np.zeros_like(occ)
            left = backend.process_chunk(site, hold, t, s, n_t, buf, done, over, rem)
            occ += buf
            if tilt is not None:
                used = (n_t - n_before) + (done.astype(np.int64) - done_before.astype(np.int64))
                mask = np.arange(site.shape[1])[None, :] < used[:, None]
                logw += np.where(mask, tables.logratio[site], 0.0).sum(axis=1)
            chunks += 1
            if chunks > _MAX_CHUNKS:
                raise RuntimeError("path simulation did not terminate (holding times too small?)")
        occ[np.arange(rows), over] += rem
        return block_summary(occ, n_t, logw)

    if threads > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(do_block, range(n_blocks)))
    return [do_block(b) for b in range(n_blocks)]


@dataclass(frozen=True)
class Trajectory:
    """One simulated path: visited site indices x_1..x_{N_t+1}, arrival
    times S_0..S_{N_t+1}, the renewal count, and the empirical measure."""

    seed: int
    t: float
    visited: tuple[int, ...]
    arrivals: np.ndarray
    n_t: int
    pi: MeasureVec


def assemble_pi(n_support: int, n_singular: int, visited, holds, t: float) -> MeasureVec:
    """Build the empirical measure from a path via the split identity:
    completed holds weight their sites, the overshoot site gets t - S_N."""
    occ = np.zeros(n_support + n_singular)
    s = 0.0
    for x, h in zip(visited[:-1], holds[:-1]):
        occ[x] += h
        s += h
    occ[visited[-1]] += t - s
    w = occ / t
    return MeasureVec(w[:n_support], w[n_support:])


def sample_trajectory(model, t: float, seed: int) -> Trajectory:
    """Draw one path to horizon ``t``; identical seeds give identical paths."""
    if t <= 0:
        raise ValueError("horizon t must be positive")
    rm = model if isinstance(model, RateModel) else model.model
    checked(rm)
    tables = _Tables(model)
    cols = _chunk_cols(model, t)
    rng = _block_rng(seed, 0)

    s = np.zeros(1)
    n_t = np.zeros(1, dtype=np.int64)
    occ = np.zeros((1, tables.n_sites))
    done = np.zeros(1, dtype=np.uint8)
    over = np.full(1, -1, dtype=np.int64)
    rem = np.zeros(1)
    sites: list[np.ndarray] = []
    holds: list[np.ndarray] = []
    left, chunks = 1, 0
    while left:
        site, hold = tables.draw(rng, 1, cols, 1)
        n_before = int(n_t[0])
        buf = np.zeros_like(occ)
        left = backend.process_chunk(site, hold, t, s, n_t, buf, done, over, rem)
        occ += buf
        used = int(n_t[0]) - n_before + (1 if left == 0 else 0)
        sites.append(site[0, :used])
        holds.append(hold[0, :used])
        chunks += 1
        if chunks > _MAX_CHUNKS:
            raise RuntimeError("path simulation did not terminate")

    visited = tuple(int(x) for x in np.concatenate(sites))
    arrivals = np.concatenate([[0.0], np.cumsum(np.concatenate(holds))])
    # build pi from the arrival increments so that reconstructing it from
    # (visited, arrivals) reproduces the stored measure bit for bit
    pi = assemble_pi(rm.n_support, rm.n_singular, visited, np.diff(arrivals), t)
    return Trajectory(int(seed), float(t), visited, arrivals, int(n_t[0]), pi)


@dataclass(frozen=True)
class MeanCI:
    """Monte-Carlo mean with a normal-approximation 95% interval."""

    mean: float
    stderr: float
    ci_low: float
    ci_high: float
    n: int


def empirical_moments(model, t: float, n: int, seed: int, threads: int = 1) -> MeanCI:
    """Estimate E[N_t]/t over ``n`` independent paths."""
    if n < 100:
        raise ValueError("need n >= 100 replicas")

    def summarize(occ, n_t, logw):
        x = n_t.astype(np.float64)
        return float(x.sum()), float((x * x).sum()), x.size

    parts = _run_paths(model, t, n, seed, summarize, threads=threads)
    tot = sum(p[0] for p in parts)
    tot2 = sum(p[1] for p in parts)
    count = sum(p[2] for p in parts)
    mean_n = tot / count
    var_n = max(tot2 / count - mean_n**2, 0.0)
    se = math.sqrt(var_n / count) / t
    mean = mean_n / t
    return MeanCI(mean, se, mean - 1.96 * se, mean + 1.96 * se, count)


@dataclass(frozen=True)
class ExactLaw:
    """Exact law of the empirical measure on the 1/t grid: keys are the
    per-site occupations times t (integers), values are probabilities."""

    t: int
    labels: tuple[str, ...]
    atoms: dict[tuple[int, ...], float]

    def total(self) -> float:
        return float(sum(self.atoms.values()))

    def as_json_dict(self) -> dict:
        return {
            "t": self.t,
            "labels": list(self.labels),
            "atoms": {",".join(map(str, k)): v for k, v in sorted(self.atoms.items())},
        }


def exact_distribution(model: RateModel, t: int, cap: int = 30) -> ExactLaw:
    """Exact law of pi_t for integer holding times, by enumerating the
    lattice of per-site completed-hold counts with an overshoot site.

    The path order does not affect pi_t, so each count vector contributes a
    multinomial weight; this keeps the enumeration polynomial in t.
    """
    checked(model)
    tau_f = model.tau
    if not np.all(tau_f == np.rint(tau_f)):
        raise ValueError("exact_distribution requires integer holding times")
    if int(t) != t or t < 1:
        raise ValueError("exact_distribution requires a positive integer horizon")
    t = int(t)
    if t > cap:
        raise SizeCapError(f"horizon {t} exceeds the exact-enumeration cap {cap}")
    if model.n_support > 6:
        raise SizeCapError(f"{model.n_support} support sites exceed the cap of 6")

    tau = tau_f.astype(np.int64)
    mu = model.mu
    m = model.n_support
    atoms: dict[tuple[int, ...], float] = {}
    factorial = math.factorial
    counts = np.zeros(m, dtype=np.int64)

    def visit(i: int, budget: int, n_total: int, wprob: float):
        if i == m - 1:
            kmax = budget // tau[i]
            for k in range(kmax + 1):
                counts[i] = k
                _emit(n_total + k, wprob * mu[i] ** k)
            counts[i] = 0
            return
        kmax = budget // tau[i]
        pw = 1.0
        for k in range(kmax + 1):
            counts[i] = k
            visit(i + 1, budget - k * tau[i], n_total + k, wprob * pw)
            pw *= mu[i]
        counts[i] = 0

    def _emit(n_total: int, wprob: float):
        s = int(counts @ tau)
        multi = factorial(n_total)
        for c in counts:
            multi //= factorial(int(c))
        base = float(multi) * wprob
        for j in range(m):
            if s + tau[j] >= t:
                w = counts * tau
                w[j] += t - s
                key = tuple(int(x) for x in w)
                atoms[key] = atoms.get(key, 0.0) + base * mu[j]

    visit(0, t - 1, 0, 1.0)
    return ExactLaw(t, model.support_labels, atoms)


def mc_empirical_law(model: RateModel, t: int, n: int, seed: int, threads: int = 1) -> dict[tuple[int, ...], int]:
    """Monte-Carlo counts of pi_t atoms on the 1/t grid (integer-tau models),
    keyed like ``exact_distribution``."""
    checked(model)
    if not np.all(model.tau == np.rint(model.tau)):
        raise ValueError("integer holding times required for exact-grid keys")
    m = model.n_support
    base = t + 1

    def summarize(occ, n_t, logw):
        ints = np.rint(occ[:, :m]).astype(np.int64)
        code = np.zeros(ints.shape[0], dtype=np.int64)
        for j in range(m):
            code = code * base + ints[:, j]
        vals, cnts = np.unique(code, return_counts=True)
        return vals, cnts

    parts = _run_paths(model, t, n, seed, summarize, threads=threads)
    out: dict[tuple[int, ...], int] = {}
    for vals, cnts in parts:
        for v, c in zip(vals.tolist(), cnts.tolist()):
            digits = []
            for _ in range(m):
                digits.append(v % base)
                v //= base
            key = tuple(reversed(digits))
            out[key] = out.get(key, 0) + int(c)
    return out


def quantile_samples(phi: WaitingLaw, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` holding times by inverse CDF under the block RNG contract."""
    rng = _block_rng(seed, 0)
    return quantile(phi, rng.random(int(n)))


def tilted_model(model: RateModel, f) -> RateModel:
    """Reweight the reference by exp(tau * f); ``f`` must be normalized so
    the tilted weights again sum to one (within 1e-9)."""
    f = np.asarray(f, dtype=np.float64)
    if f.size != model.n_support:
        raise ValueError(f"expected {model.n_support} tilt values, got {f.size}")
    w = model.mu * np.exp(model.tau * f)
    total = float(w.sum())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"tilt not normalized: mu(e^(tau f)) = {total!r}")
    return RateModel(
        model.support_labels,
        w / total,
        model.tau,
        model.singular_labels,
        model.xi,
        model.xi_inf,
        model.infinite_mean,
    )
