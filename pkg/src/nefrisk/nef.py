"""Mean/natural-parameter algebra shared by the counting and claim families.

Every family in this package is a natural exponential family (NEF) written in
its mean parameterization: a map ``m -> theta(m)``, a cumulant ``m -> kappa(m)``
and a variance function ``V(m)``.  The identities

    theta'(m) = 1 / V(m),      kappa'(m) = m / V(m)

tie the three together, and :func:`check_curve_consistency` verifies them
numerically for any curve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "DomainError",
    "NefCurve",
    "ReproMap",
    "mean_from_theta",
    "check_curve_consistency",
    "abel_curve",
    "arcsine_curve",
    "takacs_curve",
    "gamma_curve",
    "inverse_gaussian_curve",
    "positive_stable_curve",
    "poisson_curve",
    "gamma_repro",
    "inverse_gaussian_repro",
    "positive_stable_repro",
]


class DomainError(ValueError):
    """A parameter lies outside the domain of its family."""


@dataclass(frozen=True)
class NefCurve:
    """One NEF member family in mean parameterization.

    ``theta_domain`` and ``mean_domain`` are open intervals.  ``mean_of_theta``
    is an optional closed-form inverse of ``theta_of_mean``; without it,
    :func:`mean_from_theta` falls back to bisection.
    """

    name: str
    theta_of_mean: Callable[[float], float]
    kappa_of_mean: Callable[[float], float]
    variance_of_mean: Callable[[float], float]
    mean_domain: tuple[float, float]
    theta_domain: tuple[float, float]
    mean_of_theta: Optional[Callable[[float], float]] = None

    def contains_theta(self, theta: float) -> bool:
        lo, hi = self.theta_domain
        return lo < theta < hi

    def contains_mean(self, m: float) -> bool:
        lo, hi = self.mean_domain
        return lo < m < hi


@dataclass(frozen=True)
class ReproMap:
    """Scale ``c_n`` and parameter map ``g_n`` with ``c_n S_n ~ F_{g_n(theta)}``."""

    scale: Callable[[int], float]
    param_map: Callable[[int, float], float]


def mean_from_theta(curve: NefCurve, theta: float) -> float:
    """Invert ``curve.theta_of_mean`` at ``theta``.

    Uses the registered closed form when there is one, otherwise bisection in
    log-mean with a bracket grown geometrically from ``m = 1``.  Bisection runs
    until the bracket collapses to floating-point resolution, so the returned
    mean is as accurate as ``theta_of_mean`` itself allows.
    """
    theta = float(theta)
    if not curve.contains_theta(theta):
        raise DomainError(
            f"theta={theta!r} outside the {curve.name} natural-parameter "
            f"domain {curve.theta_domain}"
        )
    if curve.mean_of_theta is not None:
        return float(curve.mean_of_theta(theta))
    return _bisect_mean(curve, theta)


def _bisect_mean(curve: NefCurve, theta: float) -> float:
    f = curve.theta_of_mean
    m_lo, m_hi = curve.mean_domain
    lo = hi = 1.0
    while f(hi) < theta:
        hi *= 2.0
        if hi >= m_hi or not math.isfinite(hi):
            raise DomainError(f"no {curve.name} mean attains theta={theta!r}")
    while f(lo) > theta:
        lo *= 0.5
        if lo <= m_lo or lo == 0.0:
            raise DomainError(f"no {curve.name} mean attains theta={theta!r}")
    for _ in range(400):
        mid = math.sqrt(lo * hi)
        if not lo < mid < hi:
            break
        val = f(mid)
        if val == theta:
            return mid
        if val < theta:
            lo = mid
        else:
            hi = mid
    # pick the endpoint with the smaller residual
    return lo if abs(f(lo) - theta) <= abs(f(hi) - theta) else hi


def check_curve_consistency(curve: NefCurve, m_grid: Sequence[float], tol: float) -> bool:
    """Check ``theta' = 1/V`` and ``kappa' = m/V`` by central differences.

    The step is ``1e-4 * m``; this keeps both truncation and rounding error
    near ``1e-8`` relative for all built-in families, well below the
    tolerances used in practice.
    """
    grid = [float(m) for m in m_grid]
    if not grid:
        raise ValueError("m_grid must not be empty")
    if tol <= 0:
        raise ValueError("tol must be positive")
    for m in grid:
        if not curve.contains_mean(m):
            raise DomainError(f"m={m!r} outside {curve.name} mean domain {curve.mean_domain}")
        h = 1e-4 * m
        v = curve.variance_of_mean(m)
        dtheta = (curve.theta_of_mean(m + h) - curve.theta_of_mean(m - h)) / (2 * h)
        dkappa = (curve.kappa_of_mean(m + h) - curve.kappa_of_mean(m - h)) / (2 * h)
        if abs(dtheta - 1 / v) > tol / v:
            return False
        if abs(dkappa - m / v) > tol * m / v:
            return False
    return True


# -- Abel: V(m) = m (1 + m/p)^2 ----------------------------------------------

def _abel_theta(p, m):
    u = p / m
    return -np.log1p(u) + u / (1.0 + u)


def _abel_kappa(p, m):
    return -p * p / (m + p)


def _abel_var(p, m):
    return m * (1.0 + m / p) ** 2


def abel_curve(p: float) -> NefCurve:
    _check_positive(p, "p")
    return NefCurve(
        name="abel",
        theta_of_mean=partial(_abel_theta, p),
        kappa_of_mean=partial(_abel_kappa, p),
        variance_of_mean=partial(_abel_var, p),
        mean_domain=(0.0, math.inf),
        theta_domain=(-math.inf, 0.0),
    )


# -- strict arcsine: V(m) = m (1 + m^2/p^2) ----------------------------------

def _arcsine_theta(p, m):
    return -0.5 * np.log1p((p / m) ** 2)


def _arcsine_kappa(p, m):
    return p * np.arctan(m / p)


def _arcsine_var(p, m):
    return m * (1.0 + (m / p) ** 2)


def _arcsine_mean(p, theta):
    return p / math.sqrt(math.expm1(-2.0 * theta))


def arcsine_curve(p: float) -> NefCurve:
    _check_positive(p, "p")
    return NefCurve(
        name="arcsine",
        theta_of_mean=partial(_arcsine_theta, p),
        kappa_of_mean=partial(_arcsine_kappa, p),
        variance_of_mean=partial(_arcsine_var, p),
        mean_domain=(0.0, math.inf),
        theta_domain=(-math.inf, 0.0),
        mean_of_theta=partial(_arcsine_mean, p),
    )


# -- Takacs: V(m) = m (1 + m/p)(1 + 2m/p) ------------------------------------

def _takacs_theta(p, m):
    # m (p+m) / (p+2m)^2 == (1 - p^2/(p+2m)^2) / 4
    return np.log1p(-(p / (p + 2.0 * m)) ** 2) - math.log(4.0)


def _takacs_kappa(p, m):
    return p * np.log1p(m / (p + m))


def _takacs_var(p, m):
    return m * (1.0 + m / p) * (1.0 + 2.0 * m / p)


def _takacs_mean(p, theta):
    # root of (1-4t) m^2 + p (1-4t) m - t p^2 = 0 with t = e^theta
    t4 = 4.0 * math.exp(theta)
    return 0.5 * p * math.expm1(-0.5 * math.log1p(-t4))


def takacs_curve(p: float) -> NefCurve:
    _check_positive(p, "p")
    return NefCurve(
        name="takacs",
        theta_of_mean=partial(_takacs_theta, p),
        kappa_of_mean=partial(_takacs_kappa, p),
        variance_of_mean=partial(_takacs_var, p),
        mean_domain=(0.0, math.inf),
        theta_domain=(-math.inf, -math.log(4.0)),
        mean_of_theta=partial(_takacs_mean, p),
    )


# -- Gamma: V(m) = m^2 / p ----------------------------------------------------

def _gamma_theta(p, m):
    return 1.0 - p / m


def _gamma_kappa(p, m):
    return p * np.log(m / p)


def _gamma_var(p, m):
    return m * m / p


def _gamma_mean(p, theta):
    return p / (1.0 - theta)


def gamma_curve(p: float) -> NefCurve:
    _check_positive(p, "p")
    return NefCurve(
        name="gamma",
        theta_of_mean=partial(_gamma_theta, p),
        kappa_of_mean=partial(_gamma_kappa, p),
        variance_of_mean=partial(_gamma_var, p),
        mean_domain=(0.0, math.inf),
        theta_domain=(-math.inf, 1.0),
        mean_of_theta=partial(_gamma_mean, p),
    )


# -- inverse Gaussian: V(m) = p m^3 -------------------------------------------

def _ig_theta(p, m):
    return -1.0 / (2.0 * p * m * m)


def _ig_kappa(p, m):
    return -1.0 / (p * m)


def _ig_var(p, m):
    return p * m ** 3


def _ig_mean(p, theta):
    return 1.0 / math.sqrt(-2.0 * p * theta)


def inverse_gaussian_curve(p: float) -> NefCurve:
    _check_positive(p, "p")
    return NefCurve(
        name="ig",
        theta_of_mean=partial(_ig_theta, p),
        kappa_of_mean=partial(_ig_kappa, p),
        variance_of_mean=partial(_ig_var, p),
        mean_domain=(0.0, math.inf),
        theta_domain=(-math.inf, 0.0),
        mean_of_theta=partial(_ig_mean, p),
    )


# -- positive alpha-stable: V(m) = a m^r, r = (2-alpha)/(1-alpha) ------------

def stable_vf_power(alpha: float) -> float:
    return (2.0 - alpha) / (1.0 - alpha)


def stable_vf_coef(alpha: float) -> float:
    return (1.0 - alpha) * alpha ** (1.0 / (alpha - 1.0))


def _stable_theta(alpha, m):
    return -((m / alpha) ** (1.0 / (alpha - 1.0)))


def _stable_kappa(alpha, m):
    return -((m / alpha) ** (alpha / (alpha - 1.0)))


def _stable_var(alpha, m):
    return stable_vf_coef(alpha) * m ** stable_vf_power(alpha)


def _stable_mean(alpha, theta):
    return alpha * (-theta) ** (alpha - 1.0)


def positive_stable_curve(alpha: float) -> NefCurve:
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    return NefCurve(
        name="stable",
        theta_of_mean=partial(_stable_theta, alpha),
        kappa_of_mean=partial(_stable_kappa, alpha),
        variance_of_mean=partial(_stable_var, alpha),
        mean_domain=(0.0, math.inf),
        theta_domain=(-math.inf, 0.0),
        mean_of_theta=partial(_stable_mean, alpha),
    )


# -- Poisson: V(m) = m (baseline only) ---------------------------------------

def _poisson_theta(m):
    return np.log(m)


def _poisson_kappa(m):
    return m


def _poisson_var(m):
    return m


def _poisson_mean(theta):
    return math.exp(theta)


def poisson_curve() -> NefCurve:
    return NefCurve(
        name="poisson",
        theta_of_mean=_poisson_theta,
        kappa_of_mean=_poisson_kappa,
        variance_of_mean=_poisson_var,
        mean_domain=(0.0, math.inf),
        theta_domain=(-math.inf, math.inf),
        mean_of_theta=_poisson_mean,
    )


# -- reproducibility maps -----------------------------------------------------

def _unit_scale(n):
    return 1.0


def _same_theta(n, theta):
    return theta


def _ig_scale(n):
    return 1.0 / (n * n)


def _ig_param(n, theta):
    return n * n * theta


def _stable_scale(alpha, n):
    return n ** (-1.0 / alpha)


def _stable_param(alpha, n, theta):
    return theta * n ** (1.0 / alpha)


def gamma_repro() -> ReproMap:
    """Gamma sums keep ``theta`` and multiply the dispersion by ``n`` instead."""
    return ReproMap(scale=_unit_scale, param_map=_same_theta)


def inverse_gaussian_repro() -> ReproMap:
    return ReproMap(scale=_ig_scale, param_map=_ig_param)


def positive_stable_repro(alpha: float) -> ReproMap:
    return ReproMap(scale=partial(_stable_scale, alpha), param_map=partial(_stable_param, alpha))


def _check_positive(value: float, name: str) -> None:
    if not (value > 0 and math.isfinite(value)):
        raise DomainError(f"{name} must be positive and finite, got {value!r}")
