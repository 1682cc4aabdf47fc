"""renlab: renewal local-time simulation and large-deviation rate laboratory.

Simulates processes that hold at i.i.d. states for state-dependent times,
evaluates the decay rate of atypical empirical measures in primal and dual
form, and verifies the exponential decay at desk scale by exact enumeration
and importance-sampled Monte Carlo.
"""

from .backend import BACKEND
from .model import (
    BinnedJumpModel,
    JumpModel,
    MeasureVec,
    RateModel,
    WaitingLaw,
    abscissa,
    discretize,
    exp_moment,
    tail_prob,
    validate,
)
from .rate import (
    DualCertificate,
    minimizer_classification,
    nubar,
    rate_dual,
    rate_primal,
    recovery_sequence,
    relative_entropy,
    stationary_measure,
)
from .simulate import (
    ExactLaw,
    Trajectory,
    empirical_moments,
    exact_distribution,
    sample_trajectory,
    tilted_model,
)
from .harness import (
    LdpReport,
    ball_infimum,
    entropy_budget,
    exact_ldp,
    mc_ldp,
    tail_xi_estimate,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BinnedJumpModel",
    "DualCertificate",
    "ExactLaw",
    "JumpModel",
    "LdpReport",
    "MeasureVec",
    "RateModel",
    "Trajectory",
    "WaitingLaw",
    "abscissa",
    "ball_infimum",
    "discretize",
    "empirical_moments",
    "entropy_budget",
    "exact_distribution",
    "exact_ldp",
    "exp_moment",
    "mc_ldp",
    "minimizer_classification",
    "nubar",
    "rate_dual",
    "rate_primal",
    "recovery_sequence",
    "relative_entropy",
    "sample_trajectory",
    "stationary_measure",
    "tail_prob",
    "tail_xi_estimate",
    "tilted_model",
    "validate",
]
