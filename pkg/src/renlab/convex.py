"""Projected-gradient machinery for simplex-constrained convex programs.

Shared by the ball-infimum search and the constrained observable solves:
projections onto the probability simplex, onto an L1 ball, onto their
intersection (Dykstra), and a multi-start projected descent loop with
backtracking.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "project_simplex",
    "project_l1_ball",
    "project_simplex_l1",
    "project_simplex_affine",
    "projected_descent",
]


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum x = 1} (sort-based)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, v.size + 1)
    cond = u + (1.0 - css) / idx > 0
    rho = int(np.nonzero(cond)[0][-1])
    lam = (1.0 - css[rho]) / (rho + 1.0)
    return np.maximum(v + lam, 0.0)


def project_l1_ball(v: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto {x : ||x - center||_1 <= radius}."""
    u = v - center
    norm = float(np.abs(u).sum())
    if norm <= radius:
        return v.copy()
    a = np.sort(np.abs(u))[::-1]
    css = np.cumsum(a)
    idx = np.arange(1, u.size + 1)
    cond = a - (css - radius) / idx > 0
    rho = int(np.nonzero(cond)[0][-1])
    theta = (css[rho] - radius) / (rho + 1.0)
    return center + np.sign(u) * np.maximum(np.abs(u) - theta, 0.0)


def project_simplex_l1(v: np.ndarray, center: np.ndarray, radius: float,
                       iters: int = 200, tol: float = 1e-13) -> np.ndarray:
    """Dykstra's alternating projection onto simplex  intersect  L1 ball."""
    x = v.copy()
    p = np.zeros_like(v)
    q = np.zeros_like(v)
    for _ in range(iters):
        y = project_simplex(x + p)
        p = x + p - y
        x_new = project_l1_ball(y + q, center, radius)
        q = y + q - x_new
        if np.abs(x_new - x).max() < tol and np.abs(x_new - y).max() < tol:
            x = x_new
            break
        x = x_new
    return x


def project_simplex_affine(v: np.ndarray, g: np.ndarray, target: float,
                           iters: int = 200, tol: float = 1e-12) -> np.ndarray:
    """Projection onto simplex  intersect  {x : g.x = target}.

    KKT reduces this to a one-dimensional search: the answer is the plain
    simplex projection of v + theta*g for the multiplier theta making the
    constraint hold, and g.project_simplex(v + theta*g) is monotone in
    theta, so bisection suffices.
    """
    def phi(theta: float) -> float:
        return float(g @ project_simplex(v + theta * g))

    lo, hi, width = 0.0, 0.0, 1.0 / max(float(np.abs(g).max()), 1e-12)
    for _ in range(200):
        if phi(lo) <= target:
            break
        lo -= width
        width *= 2.0
    width = 1.0 / max(float(np.abs(g).max()), 1e-12)
    for _ in range(200):
        if phi(hi) >= target:
            break
        hi += width
        width *= 2.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        val = phi(mid)
        if abs(val - target) <= tol:
            lo = hi = mid
            break
        if val < target:
            lo = mid
        else:
            hi = mid
    return project_simplex(v + 0.5 * (lo + hi) * g)


def projected_descent(objective, gradient, project, starts, iters: int = 2000,
                      step0: float = 1.0, tol_step: float = 1e-12):
    """Projected gradient descent with backtracking from several starts.

    Returns ``(best_x, best_value, spread)`` where spread is the gap between
    the best and worst final values across starts, the convexity-based
    certificate that all runs found the same optimum.
    """
    finals = []
    for x0 in starts:
        x = project(np.asarray(x0, dtype=np.float64))
        fx = objective(x)
        eta = step0
        for _ in range(iters):
            gr = gradient(x)
            accepted = False
            while eta >= 1e-18:
                cand = project(x - eta * gr)
                fc = objective(cand)
                if fc < fx:
                    step_size = float(np.abs(cand - x).max())
                    x, fx = cand, fc
                    eta = min(eta * 1.3, 1e3)
                    accepted = True
                    break
                eta *= 0.5
            if not accepted or step_size < tol_step:
                break
        finals.append((fx, x))
    finals.sort(key=lambda pair: pair[0])
    best_val, best_x = finals[0]
    spread = finals[-1][0] - best_val
    return best_x, float(best_val), float(spread)
