"""Heavy-tailed compound sums: NEF counting and claim families, exact samplers
and Monte Carlo / importance-sampling estimators of ``P(S_N > x)``."""

from .claims import (
    FitError,
    GammaClaim,
    InverseGaussianClaim,
    PositiveStableClaim,
    claim_from_moments,
    make_claim,
)
from .counting import (
    AbelDistribution,
    ArcsineDistribution,
    PoissonDistribution,
    TakacsDistribution,
    make_counting,
)
from .engine import (
    CompoundModel,
    EstimateResult,
    InfeasibleTiltError,
    TiltPlan,
    WeightOverflowError,
    adaptive_sample_size,
    is_estimate,
    mc_estimate,
    sample_aggregate,
    solve_tilt,
)
from .estimator import CompoundRiskEstimator
from .fitting import FittedModel, SampleMoments, fit_counting_dispersion, fit_model, recover_claim_moments
from .nef import DomainError

__version__ = "0.1.0"

__all__ = [
    "AbelDistribution",
    "ArcsineDistribution",
    "TakacsDistribution",
    "PoissonDistribution",
    "GammaClaim",
    "InverseGaussianClaim",
    "PositiveStableClaim",
    "CompoundModel",
    "CompoundRiskEstimator",
    "EstimateResult",
    "FittedModel",
    "SampleMoments",
    "TiltPlan",
    "DomainError",
    "FitError",
    "InfeasibleTiltError",
    "WeightOverflowError",
    "adaptive_sample_size",
    "claim_from_moments",
    "fit_counting_dispersion",
    "fit_model",
    "is_estimate",
    "make_claim",
    "make_counting",
    "mc_estimate",
    "recover_claim_moments",
    "sample_aggregate",
    "solve_tilt",
]
