"""Holding-time laws, finite reference models, and measures over them.

Two concrete regimes are supported:

* regime A -- a finite ``RateModel``: weighted support sites with a fixed
  holding time each, plus explicit singular sites carrying a tail exponent
  budget ``xi`` and a boundary exponent ``xi_inf``;
* regime B -- a finite-state ``JumpModel`` with parametric waiting laws,
  reduced to regime A by ``discretize``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate, special

__all__ = [
    "WaitingLaw",
    "RateModel",
    "JumpModel",
    "BinnedJumpModel",
    "MeasureVec",
    "abscissa",
    "exp_moment",
    "tail_prob",
    "interval_prob",
    "partial_moment",
    "quantile",
    "law_mean",
    "validate",
    "discretize",
]

#: masses below this are treated as exactly zero in 0*inf conventions
EPS_MASS = 1e-12

_KINDS = ("deterministic", "exponential", "gamma", "pareto")


@dataclass(frozen=True)
class WaitingLaw:
    """Parametric law of one holding time, concentrated on ]0, +inf[.

    ``params`` by kind: deterministic ``(c,)``, exponential ``(rate,)``,
    gamma ``(shape, rate)``, pareto ``(alpha, xmin)``.
    """

    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown waiting-law kind {self.kind!r}")
        want = 1 if self.kind in ("deterministic", "exponential") else 2
        if len(self.params) != want:
            raise ValueError(f"{self.kind} takes {want} parameter(s)")
        if not all(math.isfinite(p) and p > 0 for p in self.params):
            raise ValueError(f"{self.kind} parameters must be finite and > 0")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))

    @classmethod
    def deterministic(cls, c: float) -> "WaitingLaw":
        return cls("deterministic", (c,))

    @classmethod
    def exponential(cls, rate: float) -> "WaitingLaw":
        return cls("exponential", (rate,))

    @classmethod
    def gamma(cls, shape: float, rate: float) -> "WaitingLaw":
        return cls("gamma", (shape, rate))

    @classmethod
    def pareto(cls, alpha: float, xmin: float) -> "WaitingLaw":
        return cls("pareto", (alpha, xmin))


def abscissa(phi: WaitingLaw) -> float:
    """Abscissa of convergence of c -> E[exp(c T)] under ``phi``."""
    if phi.kind == "deterministic":
        return math.inf
    if phi.kind == "exponential":
        return phi.params[0]
    if phi.kind == "gamma":
        return phi.params[1]
    return 0.0  # pareto: polynomial tail kills every positive exponent


def exp_moment(phi: WaitingLaw, c: float) -> float:
    """E[exp(c T)], possibly +inf.

    Finite iff c < abscissa(phi) (or c <= 0); the boundary c == abscissa
    diverges for exponential and gamma.
    """
    if c == 0.0:
        return 1.0
    if phi.kind == "deterministic":
        return math.exp(c * phi.params[0])
    if phi.kind == "exponential":
        r = phi.params[0]
        return r / (r - c) if c < r else math.inf
    if phi.kind == "gamma":
        k, r = phi.params
        return (r / (r - c)) ** k if c < r else math.inf
    alpha, xm = phi.params
    if c > 0:
        return math.inf
    val, _ = integrate.quad(
        lambda t: math.exp(c * t) * alpha * xm**alpha * t ** (-alpha - 1.0),
        xm,
        math.inf,
        epsabs=1e-12,
    )
    return val


def tail_prob(phi: WaitingLaw, L: float) -> float:
    """Exact P(T >= L)."""
    if L <= 0:
        return 1.0
    if phi.kind == "deterministic":
        return 1.0 if L <= phi.params[0] else 0.0
    if phi.kind == "exponential":
        return math.exp(-phi.params[0] * L)
    if phi.kind == "gamma":
        k, r = phi.params
        return float(special.gammaincc(k, r * L))
    alpha, xm = phi.params
    return 1.0 if L <= xm else (xm / L) ** alpha


def _atom(phi: WaitingLaw, x: float) -> float:
    if phi.kind == "deterministic" and x == phi.params[0]:
        return 1.0
    return 0.0


def interval_prob(phi: WaitingLaw, lo: float, hi: float, closed_right: bool = False) -> float:
    """P(T in [lo, hi[), or P(T in [lo, hi]) when ``closed_right``."""
    if hi < lo:
        return 0.0
    p = tail_prob(phi, lo) - (0.0 if math.isinf(hi) else tail_prob(phi, hi))
    if closed_right and not math.isinf(hi):
        p += _atom(phi, hi)
    return max(p, 0.0)


def partial_moment(phi: WaitingLaw, lo: float, hi: float, closed_right: bool = False) -> float:
    """First partial moment E[T; lo <= T < hi] (or <= hi when closed)."""
    if hi < lo:
        return 0.0
    if phi.kind == "deterministic":
        c = phi.params[0]
        inside = lo <= c < hi or (closed_right and c == hi)
        return c if inside else 0.0
    if phi.kind == "exponential":
        r = phi.params[0]
        lo_term = (lo + 1.0 / r) * math.exp(-r * lo)
        hi_term = 0.0 if math.isinf(hi) else (hi + 1.0 / r) * math.exp(-r * hi)
        return lo_term - hi_term
    if phi.kind == "gamma":
        k, r = phi.params
        hi_cdf = 1.0 if math.isinf(hi) else float(special.gammainc(k + 1.0, r * hi))
        lo_cdf = float(special.gammainc(k + 1.0, r * lo))
        return (k / r) * (hi_cdf - lo_cdf)
    alpha, xm = phi.params
    a = max(lo, xm)
    if hi <= a:
        return 0.0
    if alpha == 1.0:
        return math.inf if math.isinf(hi) else xm * (math.log(hi) - math.log(a))
    lo_term = a ** (1.0 - alpha)
    hi_term = 0.0 if math.isinf(hi) else hi ** (1.0 - alpha)
    if math.isinf(hi) and alpha < 1.0:
        return math.inf
    return alpha * xm**alpha * (lo_term - hi_term) / (alpha - 1.0)


def quantile(phi: WaitingLaw, u: np.ndarray) -> np.ndarray:
    """Inverse CDF, vectorized over u in [0, 1[."""
    u = np.asarray(u, dtype=np.float64)
    if phi.kind == "deterministic":
        return np.full_like(u, phi.params[0])
    if phi.kind == "exponential":
        return -np.log1p(-u) / phi.params[0]
    if phi.kind == "gamma":
        k, r = phi.params
        return special.gammaincinv(k, u) / r
    alpha, xm = phi.params
    return xm * (1.0 - u) ** (-1.0 / alpha)


def law_mean(phi: WaitingLaw) -> float:
    """E[T]; +inf for pareto with alpha <= 1."""
    if phi.kind == "deterministic":
        return phi.params[0]
    if phi.kind == "exponential":
        return 1.0 / phi.params[0]
    if phi.kind == "gamma":
        k, r = phi.params
        return k / r
    alpha, xm = phi.params
    return alpha * xm / (alpha - 1.0) if alpha > 1.0 else math.inf


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class RateModel:
    """Finite reference model: weighted support sites with fixed holding
    times, singular sites with a tail exponent each, and the boundary
    exponent ``xi_inf``.

    Support sites implicitly have an infinite tail exponent; finite
    exponents live only on the explicit singular sites.
    """

    support_labels: tuple[str, ...]
    mu: np.ndarray
    tau: np.ndarray
    singular_labels: tuple[str, ...] = ()
    xi: np.ndarray = field(default_factory=lambda: np.empty(0))
    xi_inf: float = math.inf
    infinite_mean: bool = False

    def __post_init__(self):
        object.__setattr__(self, "support_labels", tuple(self.support_labels))
        object.__setattr__(self, "singular_labels", tuple(self.singular_labels))
        object.__setattr__(self, "mu", _frozen(self.mu))
        object.__setattr__(self, "tau", _frozen(self.tau))
        object.__setattr__(self, "xi", _frozen(self.xi))
        if len(self.support_labels) != self.mu.size or self.mu.size != self.tau.size:
            raise ValueError("support labels, mu and tau must have equal length")
        if len(self.singular_labels) != self.xi.size:
            raise ValueError("singular labels and xi must have equal length")

    @property
    def n_support(self) -> int:
        return self.mu.size

    @property
    def n_singular(self) -> int:
        return self.xi.size

    @property
    def n_sites(self) -> int:
        return self.n_support + self.n_singular

    @property
    def labels(self) -> tuple[str, ...]:
        return self.support_labels + self.singular_labels

    @cached_property
    def mu_mean_tau(self) -> float:
        """Mean holding time under the reference weights."""
        return float(self.mu @ self.tau)

    def site_index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown site label {label!r}") from None


def validate(model: RateModel) -> list[str]:
    """Check all model invariants; returns every violation found."""
    out: list[str] = []
    total = float(model.mu.sum())
    if abs(total - 1.0) > 1e-12:
        out.append(f"support weights sum {total!r} != 1")
    if np.any(model.mu <= 0):
        out.append("support weights must be strictly positive")
    if np.any(model.tau <= 0) or np.any(~np.isfinite(model.tau)):
        out.append("tau must be strictly positive and finite")
    if np.any(model.xi < 0) or np.any(np.isnan(model.xi)):
        out.append("xi must lie in [0, +inf]")
    if math.isnan(model.xi_inf) or model.xi_inf < 0:
        out.append("xi_inf must lie in [0, +inf]")
    labels = model.labels
    if len(set(labels)) != len(labels):
        seen, dup = set(), set()
        for lab in labels:
            (dup if lab in seen else seen).add(lab)
        out.append(f"duplicate site labels: {sorted(dup)}")
    return out


def checked(model: RateModel) -> RateModel:
    """Raise ValueError listing all violations, or return the model."""
    violations = validate(model)
    if violations:
        raise ValueError("invalid model: " + "; ".join(violations))
    return model


@dataclass(frozen=True)
class JumpModel:
    """Pure jump process: states drawn i.i.d. with weights ``p``, holding
    time at state j drawn from ``laws[j]``."""

    labels: tuple[str, ...]
    p: np.ndarray
    laws: tuple[WaitingLaw, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "p", _frozen(self.p))
        object.__setattr__(self, "laws", tuple(self.laws))
        if not (len(self.labels) == self.p.size == len(self.laws)):
            raise ValueError("labels, p and laws must have equal length")
        if abs(float(self.p.sum()) - 1.0) > 1e-12:
            raise ValueError(f"state weights sum {float(self.p.sum())!r} != 1")
        if np.any(self.p <= 0):
            raise ValueError("state weights must be strictly positive")

    @property
    def infinite_mean(self) -> bool:
        return any(math.isinf(law_mean(phi)) for phi in self.laws)

    @property
    def mean_holding(self) -> float:
        return float(sum(p * law_mean(phi) for p, phi in zip(self.p, self.laws)))


def _bin_layout(jm: JumpModel, bin_edges, tail_threshold: float):
    """Shared worker behind ``discretize``: builds the finite model plus the
    (state, raw-bin-slot) -> site-index table used to bin simulated draws.

    Slot K (the last one) is the tail [threshold, +inf[.  Folded or dropped
    slots point at the nearest kept site below them.
    """
    edges = np.asarray(bin_edges, dtype=np.float64)
    if edges.ndim != 1 or edges.size < 2:
        raise ValueError("bin_edges must be a 1-d list of at least two edges")
    if edges[0] != 0.0:
        raise ValueError("bin_edges must start at 0")
    if np.any(np.diff(edges) <= 0):
        raise ValueError("bin_edges must be strictly increasing")
    if edges[-1] != tail_threshold:
        raise ValueError("last bin edge must equal tail_threshold")

    n_bins = edges.size - 1
    sup_labels: list[str] = []
    sup_mu: list[float] = []
    sup_tau: list[float] = []
    site_state: list[int] = []
    site_lo: list[float] = []
    site_hi: list[float] = []
    sing_labels: list[str] = []
    sing_xi: list[float] = []
    slot_table = np.full((len(jm.labels), n_bins + 1), -1, dtype=np.int64)

    for j, (lab, pj, phi) in enumerate(zip(jm.labels, jm.p, jm.laws)):
        tail_mass = pj * tail_prob(phi, tail_threshold)
        xi_j = abscissa(phi)
        fold_tail = tail_mass > 0.0 and math.isinf(xi_j)
        state_sites: list[int] = []
        for k in range(n_bins):
            lo, hi = edges[k], edges[k + 1]
            if fold_tail and k == n_bins - 1:
                hi = math.inf
            mass = pj * interval_prob(phi, lo, hi)
            if mass <= 0.0:
                slot_table[j, k] = state_sites[-1] if state_sites else -1
                continue
            mean = pj * partial_moment(phi, lo, hi) / mass
            idx = len(sup_labels)
            hi_txt = "inf" if math.isinf(hi) else f"{hi:g}"
            sup_labels.append(f"{lab}[{lo:g},{hi_txt})")
            sup_mu.append(mass)
            sup_tau.append(mean)
            site_state.append(j)
            site_lo.append(lo)
            site_hi.append(hi)
            slot_table[j, k] = idx
            state_sites.append(idx)
        if not state_sites:
            raise ValueError(f"state {lab!r} has no probability mass below tail_threshold")
        # backfill leading dropped slots to the first kept site
        first = state_sites[0]
        for k in range(n_bins):
            if slot_table[j, k] == -1:
                slot_table[j, k] = first
            else:
                break
        if tail_mass > 0.0 and not fold_tail:
            slot_table[j, n_bins] = -(len(sing_labels) + 2)  # singular marker
            sing_labels.append(f"{lab}[tail]")
            sing_xi.append(xi_j)
        else:
            slot_table[j, n_bins] = state_sites[-1]

    raw = np.array(sup_mu)
    support_mass = float(raw.sum())
    mu = raw / support_mass  # tail mass routed to singular sites carries no weight
    n_sup = len(sup_labels)
    # markers -(s+2) become global indices n_sup + s of the singular sites
    slot_table = np.where(slot_table < -1, n_sup + (-slot_table - 2), slot_table)
    model = RateModel(
        tuple(sup_labels),
        mu,
        np.array(sup_tau),
        tuple(sing_labels),
        np.array(sing_xi),
        xi_inf=math.inf,
        infinite_mean=jm.infinite_mean,
    )
    extras = {
        "site_state": np.array(site_state, dtype=np.int64),
        "site_lo": np.array(site_lo),
        "site_hi": np.array(site_hi),
        "support_mass": support_mass,
    }
    return model, slot_table, extras


@dataclass(frozen=True)
class BinnedJumpModel:
    """A jump model together with the bin edges used everywhere downstream,
    so that simulated paths and analytic objects share one site support."""

    jump: JumpModel
    edges: tuple[float, ...]
    tail_threshold: float

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(float(e) for e in self.edges))

    @cached_property
    def _layout(self):
        return _bin_layout(self.jump, self.edges, self.tail_threshold)

    @property
    def model(self) -> RateModel:
        return self._layout[0]

    @property
    def slot_table(self) -> np.ndarray:
        return self._layout[1]

    @property
    def site_state(self) -> np.ndarray:
        return self._layout[2]["site_state"]

    @property
    def site_lo(self) -> np.ndarray:
        return self._layout[2]["site_lo"]

    @property
    def site_hi(self) -> np.ndarray:
        return self._layout[2]["site_hi"]

    @property
    def support_mass(self) -> float:
        """Total reference mass kept on support bins before renormalizing."""
        return self._layout[2]["support_mass"]


def discretize(jm: JumpModel, bin_edges, tail_threshold: float) -> RateModel:
    """Reduce a jump model to a finite model on the given bins.

    Each positive-mass bin [e_k, e_{k+1}[ of each state becomes a support
    site with the bin's conditional mean holding time; mass beyond
    ``tail_threshold`` becomes a singular site with the law's tail exponent
    when that exponent is finite, and is otherwise folded into the last bin.
    Support weights are renormalized so they sum to one.
    """
    model, _, _ = _bin_layout(jm, bin_edges, tail_threshold)
    return model


@dataclass(frozen=True)
class MeasureVec:
    """A (sub-)probability over a model's sites, split into the absolutely
    continuous part (support sites) and the singular part (singular sites);
    any missing mass is the defect."""

    ac: np.ndarray
    sing: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        object.__setattr__(self, "ac", _frozen(self.ac))
        object.__setattr__(self, "sing", _frozen(self.sing))
        if np.any(self.ac < 0) or np.any(self.sing < 0):
            raise ValueError("measure weights must be nonnegative")
        if self.total > 1.0 + 1e-12:
            raise ValueError(f"total mass {self.total!r} exceeds 1")

    @property
    def total(self) -> float:
        return float(self.ac.sum() + self.sing.sum())

    @property
    def defect(self) -> float:
        return max(0.0, 1.0 - self.total)

    @property
    def weights(self) -> np.ndarray:
        return np.concatenate([self.ac, self.sing])

    @classmethod
    def zeros(cls, model: RateModel) -> "MeasureVec":
        return cls(np.zeros(model.n_support), np.zeros(model.n_singular))

    @classmethod
    def from_weights(cls, model: RateModel, w) -> "MeasureVec":
        w = np.asarray(w, dtype=np.float64)
        if w.size != model.n_sites:
            raise ValueError(f"expected {model.n_sites} weights, got {w.size}")
        return cls(w[: model.n_support], w[model.n_support :])

    @classmethod
    def from_dict(cls, model: RateModel, by_label: dict) -> "MeasureVec":
        w = np.zeros(model.n_sites)
        for lab, mass in by_label.items():
            w[model.site_index(lab)] = float(mass)
        return cls.from_weights(model, w)

    def as_dict(self, model: RateModel) -> dict:
        if self.ac.size != model.n_support or self.sing.size != model.n_singular:
            raise ValueError("measure does not match model site layout")
        return {lab: float(v) for lab, v in zip(model.labels, self.weights)}

    def matches(self, model: RateModel) -> bool:
        return self.ac.size == model.n_support and self.sing.size == model.n_singular
