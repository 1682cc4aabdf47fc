"""Built-in model presets used by the CLI ``examples`` command and tests."""

from __future__ import annotations

import numpy as np

from .model import BinnedJumpModel, JumpModel, RateModel, WaitingLaw

__all__ = ["m2", "sanov_model", "jump_mixed", "poisson_rates", "hot_points"]

MAX_PRODUCT_SITES = 4096


def m2() -> RateModel:
    """Two sites with equal reference weight and holding times 1 and 2."""
    return RateModel(("a", "b"), np.array([0.5, 0.5]), np.array([1.0, 2.0]))


def sanov_model(m: int = 4) -> RateModel:
    """Unit clock: every holding time 1, mildly non-uniform weights."""
    w = np.arange(1.0, m + 1.0)
    return RateModel(tuple(f"s{i}" for i in range(m)), w / w.sum(), np.ones(m))


def jump_mixed() -> BinnedJumpModel:
    """Two jump states, one exponential and one gamma holding law."""
    jm = JumpModel(
        ("y", "z"),
        np.array([0.4, 0.6]),
        (WaitingLaw.exponential(1.0), WaitingLaw.gamma(2.0, 1.5)),
    )
    return BinnedJumpModel(jm, tuple(np.arange(0.0, 10.5, 0.5)), 10.0)


def poisson_rates(thetas=(0.5, 1.0, 2.0)) -> BinnedJumpModel:
    """Exponential holding times with per-state means theta; the tail
    exponents of the discretized model are the inverse means."""
    n = len(thetas)
    jm = JumpModel(
        tuple(f"y{i}" for i in range(n)),
        np.full(n, 1.0 / n),
        tuple(WaitingLaw.exponential(1.0 / th) for th in thetas),
    )
    edges = tuple(np.linspace(0.0, 12.0, 25))
    return BinnedJumpModel(jm, edges, 12.0)


def hot_points(n: int = 2, betas=(1.0, 2.0), grid_points: int = 32,
               grid_lo: float = 0.15, grid_hi: float = 3.5):
    """Particle on a ring passing ``n`` speed-refresh points.

    Speeds at point i are drawn from the density x exp(-beta_i x^2)
    renormalized on a finite grid; one lap through all points takes
    tau(x) = (1/n) sum_i 1/x_i.  Returns the product-site model plus the
    per-site kinetic energy (1/n) sum_i x_i^2 / 2.
    """
    if len(betas) != n:
        raise ValueError("need one beta per hot point")
    if grid_points**n > MAX_PRODUCT_SITES:
        raise ValueError(f"{grid_points}^{n} product sites exceed the cap {MAX_PRODUCT_SITES}")
    grid = np.linspace(grid_lo, grid_hi, grid_points)
    weights = []
    for b in betas:
        w = grid * np.exp(-b * grid**2)
        weights.append(w / w.sum())

    idx = np.indices((grid_points,) * n).reshape(n, -1)
    speeds = grid[idx]  # (n, sites)
    mu = np.ones(idx.shape[1])
    for i in range(n):
        mu *= weights[i][idx[i]]
    tau = (1.0 / speeds).mean(axis=0)
    energy = 0.5 * (speeds**2).mean(axis=0)
    labels = tuple("x" + "_".join(str(k) for k in idx[:, j]) for j in range(idx.shape[1]))
    model = RateModel(labels, mu, tau)
    return model, energy
