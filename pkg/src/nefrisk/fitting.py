"""Two-moment fits for the counting and claim families.

Counts are fitted directly from their sample mean and variance.  Individual
claims are not observed, only per-cell totals, so their moments come from

    m_Y = sum(payment) / sum(claims),
    Var(S) = E[N] Var(Y) + Var(N) E[Y]**2.

Sample variances use the ``n - 1`` denominator.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .claims import CLAIM_FAMILIES, FitError, claim_from_moments, make_claim
from .counting import COUNTING_FAMILIES, make_counting
from .engine import CompoundModel

__all__ = [
    "FitError",
    "SampleMoments",
    "FittedModel",
    "fit_counting_dispersion",
    "recover_claim_moments",
    "fit_model",
    "fit_all",
]


@dataclass(frozen=True)
class SampleMoments:
    mean: float
    variance: float
    count: int

    def __post_init__(self):
        if self.count < 2:
            raise ValueError(f"moments need at least 2 observations, got {self.count}")
        if not self.variance >= 0:
            raise ValueError(f"variance must be nonnegative, got {self.variance!r}")

    @classmethod
    def from_sample(cls, values):
        values = np.asarray(values, dtype=float)
        if values.size < 2:
            raise ValueError(f"moments need at least 2 observations, got {values.size}")
        return cls(float(values.mean()), float(values.var(ddof=1)), int(values.size))


def fit_counting_dispersion(family, moments):
    """Dispersion ``p`` with ``V_family(m; p) = v`` at the sample moments."""
    m, v = float(moments.mean), float(moments.variance)
    if not m > 0:
        raise FitError(f"{family}: count mean must be positive, got {m!r}")
    if family not in COUNTING_FAMILIES:
        raise ValueError(f"unknown counting family {family!r}; choose from {sorted(COUNTING_FAMILIES)}")
    if not v > m:
        raise FitError(f"{family} family requires overdispersion (variance {v:g} <= mean {m:g})")
    root_m = math.sqrt(m)
    if family == "abel":
        return m * root_m / (math.sqrt(v) - root_m)
    if family == "arcsine":
        return m * root_m / math.sqrt(v - m)
    return 4.0 * m * root_m / (math.sqrt(8.0 * v + m) - 3.0 * root_m)


def recover_claim_moments(count_moments, aggregate_moments, total_claims, total_payment):
    """Moments of a single claim from per-cell counts and totals."""
    if not total_claims > 0:
        raise FitError(f"total claim count must be positive, got {total_claims!r}")
    if not count_moments.mean > 0:
        raise FitError(f"count mean must be positive, got {count_moments.mean!r}")
    mean_y = float(total_payment) / float(total_claims)
    variance_y = (aggregate_moments.variance - count_moments.variance * mean_y ** 2) / count_moments.mean
    if not variance_y > 0:
        raise FitError(
            f"data inconsistent with independent claims: implied claim variance {variance_y:g} is not positive"
        )
    return SampleMoments(mean_y, variance_y, int(total_claims))


@dataclass(frozen=True)
class FittedModel:
    counting_family: str
    p_N: float
    m_N: float
    claim_family: str
    claim_params: dict
    provenance: dict = field(default_factory=dict)

    def counting(self):
        return make_counting(self.counting_family, self.p_N, self.m_N)

    def claim(self):
        return make_claim(self.claim_family, **self.claim_params)

    def model(self):
        return CompoundModel(self.counting(), self.claim())

    def to_dict(self):
        return {
            "counting": {"family": self.counting_family, "p": self.p_N, "m": self.m_N},
            "claim": {"family": self.claim_family, "params": dict(self.claim_params)},
            "provenance": dict(self.provenance),
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, record):
        try:
            counting, claim = record["counting"], record["claim"]
            fitted = cls(
                counting_family=counting["family"],
                p_N=float(counting["p"]),
                m_N=float(counting["m"]),
                claim_family=claim["family"],
                claim_params={k: float(v) for k, v in claim["params"].items()},
                provenance=dict(record.get("provenance", {})),
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise ValueError(f"malformed fitted-model record: {exc}") from None
        fitted.model()  # validates every parameter against its domain
        return fitted

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def fit_model(counting_family, claim_family, count_moments, claim_moments, provenance=None,
              stable_root="lower"):
    """Fit one counting/claim pair; Poisson counts take only the mean."""
    if counting_family == "poisson":
        p = 1.0
    else:
        p = fit_counting_dispersion(counting_family, count_moments)
    claim = claim_from_moments(claim_family, claim_moments.mean, claim_moments.variance, stable_root)
    return FittedModel(counting_family, p, count_moments.mean, claim_family, claim.params(), dict(provenance or {}))


def fit_all(count_moments, claim_moments, counting_families=None, claim_families=None,
            provenance=None):
    """Every counting/claim combination, in a fixed order."""
    counting_families = list(counting_families or COUNTING_FAMILIES)
    claim_families = list(claim_families or CLAIM_FAMILIES)
    return [
        fit_model(cf, yf, count_moments, claim_moments, provenance)
        for cf in counting_families
        for yf in claim_families
    ]
