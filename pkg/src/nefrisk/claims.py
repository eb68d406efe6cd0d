"""Claim-size NEFs: Gamma, inverse Gaussian and positive alpha-stable.

Each family is closed under i.i.d. sums, so the total of ``n`` claims is
generated as a single variate; strongly tilted stable sums use Devroye's
double-rejection method (see :meth:`PositiveStableClaim.sample_sum`).  Likelihood
ratios between two members of the same family use the tilting identity

    log f(s; theta) - log f(s; theta') = (theta - theta') s - n (kappa(theta) - kappa(theta'))

so no density (in particular no stable density) is ever evaluated.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import optimize

from .nef import (
    DomainError,
    gamma_curve,
    inverse_gaussian_curve,
    inverse_gaussian_repro,
    positive_stable_curve,
    positive_stable_repro,
    gamma_repro,
    stable_vf_coef,
    stable_vf_power,
)

__all__ = [
    "FitError",
    "ClaimDistribution",
    "GammaClaim",
    "InverseGaussianClaim",
    "PositiveStableClaim",
    "claim_from_moments",
    "make_claim",
    "sample_inverse_gaussian",
    "sample_positive_stable_kernel",
    "sample_tilted_stable_log",
    "CLAIM_FAMILIES",
    "MIN_STABLE_ALPHA",
    "STABLE_MAX_AR_ROUNDS",
]

MIN_STABLE_ALPHA = 0.01
STABLE_MAX_AR_ROUNDS = 10 ** 7


class FitError(ValueError):
    """No family member matches the requested moments."""


class ClaimDistribution:
    """Common surface of the three claim families (immutable)."""

    family = ""

    @property
    def mean(self):
        return float(self.curve.mean_of_theta(self.theta))

    @property
    def variance(self):
        return float(self.curve.variance_of_mean(self.mean))

    def cumulant(self, theta):
        """``kappa(theta)`` of one claim."""
        raise NotImplementedError

    def with_theta(self, theta):
        raise NotImplementedError

    def tilt(self, theta_star):
        return self.with_theta(self.theta + theta_star)

    def _shape_key(self):
        raise NotImplementedError

    def params(self):
        raise NotImplementedError

    def sample(self, rng, size=None):
        raise NotImplementedError

    def sample_sum(self, n, rng):
        """One draw of the ``n``-fold convolution per entry of ``n`` (``n >= 1``)."""
        raise NotImplementedError

    def log_density_ratio_sum(self, tilted, n, s):
        """``log f_{S_n}(s) - log f~_{S_n}(s)`` against a tilted member of the family."""
        if type(tilted) is not type(self) or tilted._shape_key() != self._shape_key():
            raise ValueError(
                "density ratio needs two members of one family with the same dispersion/index"
            )
        n = np.asarray(n, dtype=float)
        s = np.asarray(s, dtype=float)
        return (self.theta - tilted.theta) * s - n * (self.cumulant(self.theta) - self.cumulant(tilted.theta))

    def diagnostics(self):
        record = {"family": self.family}
        record.update(self.params())
        record.update(mean=self.mean, variance=self.variance)
        return record

    def __eq__(self, other):
        return type(other) is type(self) and other.params() == self.params()

    def __hash__(self):
        return hash((self.family, tuple(sorted(self.params().items()))))

    def __repr__(self):
        inner = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({inner})"


def _as_counts(n):
    n = np.asarray(n)
    if np.any(n < 1):
        raise ValueError("claim sums need n >= 1; handle n = 0 as an empty sum")
    return n


class GammaClaim(ClaimDistribution):
    """Gamma with shape ``p`` and rate ``1 - theta`` (``theta < 1``)."""

    family = "gamma"

    def __init__(self, theta, p):
        theta, p = float(theta), float(p)
        self.curve = gamma_curve(p)
        if not theta < 1.0:
            raise DomainError(f"gamma needs theta < 1, got {theta!r}")
        self.theta, self.p = theta, p
        self.repro = gamma_repro()

    def cumulant(self, theta):
        return -self.p * np.log1p(-np.asarray(theta, dtype=float))

    def with_theta(self, theta):
        return GammaClaim(theta, self.p)

    def _shape_key(self):
        return self.p

    def params(self):
        return {"theta": self.theta, "p": self.p}

    def sample(self, rng, size=None):
        return rng.gamma(self.p, 1.0 / (1.0 - self.theta), size)

    def sample_sum(self, n, rng):
        n = _as_counts(n)
        return rng.gamma(self.p * n, 1.0 / (1.0 - self.theta))


def sample_inverse_gaussian(mu, lam, rng, size=None):
    """Transformation-with-root-selection draw from IG(mean ``mu``, shape ``lam``).

    The smaller root of the quadratic is written as ``mu / (1 + r + sqrt(r (2 + r)))``
    with ``r = mu chi2 / (2 lam)``, which stays accurate when ``r`` is large.
    """
    mu = np.asarray(mu, dtype=float)
    lam = np.asarray(lam, dtype=float)
    shape = np.broadcast(mu, lam).shape if size is None else size
    chi2 = rng.standard_normal(shape) ** 2
    r = mu * chi2 / (2.0 * lam)
    small = mu / (1.0 + r + np.sqrt(r * (2.0 + r)))
    u = rng.random(shape)
    return np.where(u * (mu + small) <= mu, small, mu * mu / small)


class InverseGaussianClaim(ClaimDistribution):
    """Inverse Gaussian with ``V(m) = p m^3`` (``theta < 0``).

    In the classical ``(delta, gamma)`` form ``delta = 1/sqrt(p)`` and
    ``gamma = sqrt(-2 theta)``: mean ``delta/gamma``, shape ``delta**2``.
    """

    family = "ig"

    def __init__(self, theta, p):
        theta, p = float(theta), float(p)
        self.curve = inverse_gaussian_curve(p)
        if not theta < 0.0:
            raise DomainError(f"inverse Gaussian needs theta < 0, got {theta!r}")
        self.theta, self.p = theta, p
        self.delta = 1.0 / math.sqrt(p)
        self.gamma_par = math.sqrt(-2.0 * theta)
        self.repro = inverse_gaussian_repro()

    def cumulant(self, theta):
        return -np.sqrt(-2.0 * np.asarray(theta, dtype=float) / self.p)

    def with_theta(self, theta):
        return InverseGaussianClaim(theta, self.p)

    def _shape_key(self):
        return self.p

    def params(self):
        return {"theta": self.theta, "p": self.p}

    def log_pdf(self, y, n=1):
        """Explicit density of the ``n``-fold sum (dispersion ``p / n**2``)."""
        y = np.asarray(y, dtype=float)
        q = self.p / np.asarray(n, dtype=float) ** 2
        return (
            -0.5 * np.log(2.0 * math.pi * q * y ** 3)
            - 1.0 / (2.0 * q * y)
            + self.theta * y
            + np.sqrt(-2.0 * self.theta / q)
        )

    def sample(self, rng, size=None):
        draw = sample_inverse_gaussian(self.delta / self.gamma_par, self.delta ** 2, rng, size)
        return float(draw) if size is None else draw

    def sample_sum(self, n, rng):
        n = _as_counts(n).astype(float)
        delta_n = n * self.delta
        return sample_inverse_gaussian(delta_n / self.gamma_par, delta_n ** 2, rng)


def sample_positive_stable_kernel(alpha, rng, size=None):
    """Draws with Laplace transform ``exp(-s**alpha)``.

    Chambers' method for ``S_alpha(1, 1, 0)`` scaled by
    ``sigma = cos(pi alpha / 2)**(1/alpha)``; with ``beta = 1`` and
    ``phi = V + pi/2`` it reduces to

        sin(alpha phi) / sin(phi)**(1/alpha) * (sin((1-alpha) phi) / W)**((1-alpha)/alpha)

    evaluated in log space.
    """
    phi = math.pi * (1.0 - rng.random(size))
    w = rng.standard_exponential(size)
    log_y = (
        np.log(np.sin(alpha * phi))
        - np.log(np.sin(phi)) / alpha
        + (1.0 - alpha) / alpha * (np.log(np.sin((1.0 - alpha) * phi)) - np.log(w))
    )
    with np.errstate(over="ignore"):
        return np.exp(log_y)


def _sinc(x):
    return np.sinc(np.asarray(x) / math.pi)


def _tilted_stable_aux(alpha, lam_alpha, rng):
    # first-level auxiliary (U, Z, z) of the double-rejection method
    size = lam_alpha.size
    gamma = lam_alpha * alpha * (1.0 - alpha)
    sg = np.sqrt(gamma)
    c1 = math.sqrt(math.pi / 2.0)
    c3 = (2.0 + c1) * sg
    xi = (1.0 + math.sqrt(2.0) * c3) / math.pi
    psi = c3 * np.exp(-gamma * math.pi ** 2 / 8.0) / math.sqrt(math.pi)
    w1, w2, w3 = c1 * xi / sg, 2.0 * math.sqrt(math.pi) * psi, xi * math.pi
    big = gamma >= 1.0
    u_out, zu_out, z_out = np.empty(size), np.empty(size), np.empty(size)
    pending = np.arange(size)
    while pending.size:
        k = pending.size
        g, s, b = gamma[pending], sg[pending], big[pending]
        v, w = rng.random(k), rng.random(k)
        half = np.abs(rng.standard_normal(k)) / s
        edge = math.pi * (1.0 - w * w)
        u = np.where(
            b,
            np.where(v < w1[pending] / (w1[pending] + w2[pending]), half, edge),
            np.where(v < w3[pending] / (w2[pending] + w3[pending]), math.pi * w, edge),
        )
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            zeta = np.sqrt(_sinc(u) / (_sinc(alpha * u) ** alpha * _sinc((1.0 - alpha) * u) ** (1.0 - alpha)))
            z = 1.0 / (1.0 - (1.0 + alpha * zeta / s) ** (-1.0 / alpha))
            rho = math.pi * np.exp(-lam_alpha[pending] * (1.0 - 1.0 / zeta ** 2)) / ((1.0 + c1) * s / zeta + z)
            d = np.where(b, xi[pending] * np.exp(-g * u * u / 2.0), 0.0)
            d = d + np.where((u > 0.0) & (u < math.pi), psi[pending] / np.sqrt(math.pi - u), 0.0)
            d = d + np.where(~b & (u >= 0.0) & (u <= math.pi), xi[pending], 0.0)
            zu = rng.random(k) * rho * d
        ok = (u < math.pi) & (zu <= 1.0)
        idx = pending[ok]
        u_out[idx], zu_out[idx], z_out[idx] = u[ok], zu[ok], z[ok]
        pending = pending[~ok]
    return u_out, zu_out, z_out


def sample_tilted_stable_log(alpha, lam_alpha, rng, max_rounds=None):
    """Logs of draws from the positive stable kernel tilted by ``exp(-lam x)``.

    The kernel has Laplace transform ``exp(-s**alpha)``; ``lam_alpha`` is
    ``lam**alpha`` per draw (array).  Devroye's double-rejection method: the
    expected cost per draw is bounded uniformly in ``lam``, where plain
    rejection from the kernel accepts with probability ``exp(-lam**alpha)``.
    """
    lam_alpha = np.asarray(lam_alpha, dtype=float).ravel()
    b = (1.0 - alpha) / alpha
    c1 = math.sqrt(math.pi / 2.0)
    out = np.empty(lam_alpha.size)
    pending = np.arange(lam_alpha.size)
    rounds = 0
    while pending.size:
        rounds += 1
        if max_rounds is not None and rounds > max_rounds:
            raise RuntimeError(f"double-rejection loop exceeded {max_rounds} rounds")
        la = lam_alpha[pending]
        k = pending.size
        u, zu, z = _tilted_stable_aux(alpha, la, rng)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            a = ((1.0 - alpha) * _sinc((1.0 - alpha) * u)) ** (1.0 - alpha) * (alpha * _sinc(alpha * u)) ** alpha
            a = (a / _sinc(u)) ** (1.0 / (1.0 - alpha))
            m = (b / a) ** alpha * la
            delta = np.sqrt(m * alpha / a)
            a1, a3 = delta * c1, z / a
            s = a1 + delta + a3
            v2 = rng.random(k)
            nrm = rng.standard_normal(k)
            e1 = rng.standard_exponential(k)
            left = v2 < a1 / s
            mid = ~left & (v2 < (a1 + delta) / s)
            right = ~left & ~mid
            x = np.where(left, m - delta * np.abs(nrm), np.where(mid, m + delta * rng.random(k), m + delta + e1 * a3))
            log_m = np.log(m)
            c = a * (x - m) + np.exp(np.log(la) / alpha - b * log_m) * np.expm1(b * (log_m - np.log(x)))
            c = c - np.where(left & (x < m), nrm * nrm / 2.0, 0.0) - np.where(right & (x > m + delta), e1, 0.0)
            ok = (x > 0.0) & (c <= -np.log(zu))
        out[pending[ok]] = -b * np.log(x[ok])
        pending = pending[~ok]
    return out


class PositiveStableClaim(ClaimDistribution):
    """NEF generated by the positive alpha-stable law, ``kappa(theta) = -(-theta)**alpha``.

    ``theta = 0`` is the untilted kernel (infinite mean); any ``theta < 0``
    has all moments, with ``V(m) = a m**r``, ``r = (2-alpha)/(1-alpha)``.
    """

    family = "stable"

    def __init__(self, theta, alpha):
        theta, alpha = float(theta), float(alpha)
        if not MIN_STABLE_ALPHA <= alpha < 1.0:
            raise DomainError(f"stable index must lie in [{MIN_STABLE_ALPHA}, 1), got {alpha!r}")
        if not theta <= 0.0:
            raise DomainError(f"positive stable NEF needs theta <= 0, got {theta!r}")
        self.curve = positive_stable_curve(alpha)
        self.theta, self.alpha = theta, alpha
        self.sigma = math.cos(math.pi * alpha / 2.0) ** (1.0 / alpha)
        self.vf_power = stable_vf_power(alpha)
        self.vf_coef = stable_vf_coef(alpha)
        self.repro = positive_stable_repro(alpha)

    @property
    def mean(self):
        if self.theta == 0.0:
            return math.inf
        return super().mean

    @property
    def variance(self):
        if self.theta == 0.0:
            return math.inf
        return super().variance

    def cumulant(self, theta):
        return -((-np.asarray(theta, dtype=float)) ** self.alpha)

    @property
    def acceptance_probability(self):
        """``exp(kappa(theta))``, the AR acceptance rate of :meth:`sample`."""
        return math.exp(float(self.cumulant(self.theta)))

    def with_theta(self, theta):
        return PositiveStableClaim(theta, self.alpha)

    def _shape_key(self):
        return self.alpha

    def params(self):
        return {"theta": self.theta, "p": self.vf_power, "alpha": self.alpha}

    def sample(self, rng, size=None, return_stats=False):
        count = 1 if size is None else int(size)
        draws, proposed = self._tilted_kernel(1.0, count, rng)
        result = float(draws[0]) if size is None else draws
        if return_stats:
            return result, (count, proposed)
        return result

    def sample_sum(self, n, rng):
        """Sum of ``n`` claims via reproducibility, one draw per sum.

        ``S_n`` is ``n**(1/alpha)`` times a kernel draw tilted by
        ``lam' = -theta n**(1/alpha)``, so ``lam'**alpha = n (-theta)**alpha``.
        Plain rejection from the kernel accepts with probability
        ``exp(-lam'**alpha)``; it is used while that is at least ``exp(-1)``
        and double rejection takes over beyond.
        """
        n = _as_counts(n)
        scalar = n.ndim == 0
        n = np.atleast_1d(n).astype(float)
        out = np.zeros(n.size)
        lam_alpha = n * float(-self.cumulant(self.theta))
        plain = np.flatnonzero((n > 0) & (lam_alpha <= 1.0))
        if plain.size:
            out[plain], _ = self._tilted_kernel(n[plain], plain.size, rng)
        hard = np.flatnonzero(lam_alpha > 1.0)
        if hard.size:
            log_y = sample_tilted_stable_log(self.alpha, lam_alpha[hard], rng, STABLE_MAX_AR_ROUNDS)
            out[hard] = np.exp(np.log(n[hard]) / self.alpha + log_y)
        return float(out[0]) if scalar else out

    def _tilted_kernel(self, sizes, count, rng):
        out = np.empty(count)
        scale = np.broadcast_to(np.asarray(sizes, dtype=float) ** (1.0 / self.alpha), (count,))
        pending = np.arange(count)
        proposed = 0
        rounds = 0
        while pending.size:
            rounds += 1
            if rounds > STABLE_MAX_AR_ROUNDS:
                raise RuntimeError(
                    f"stable AR loop exceeded {STABLE_MAX_AR_ROUNDS} rounds "
                    f"(acceptance {self.acceptance_probability:.3g})"
                )
            y = scale[pending] * sample_positive_stable_kernel(self.alpha, rng, pending.size)
            proposed += pending.size
            if self.theta == 0.0:
                ok = np.ones(pending.size, dtype=bool)
            else:
                with np.errstate(invalid="ignore"):
                    ok = np.log(rng.random(pending.size)) < self.theta * y
            out[pending[ok]] = y[ok]
            pending = pending[~ok]
        return out, proposed


CLAIM_FAMILIES = {
    "gamma": GammaClaim,
    "ig": InverseGaussianClaim,
    "stable": PositiveStableClaim,
}


def make_claim(family, **params):
    """Build a claim distribution from its JSON-style parameters."""
    if family == "gamma":
        return GammaClaim(params["theta"], params["p"])
    if family == "ig":
        return InverseGaussianClaim(params["theta"], params["p"])
    if family == "stable":
        return PositiveStableClaim(params["theta"], params["alpha"])
    raise ValueError(f"unknown claim family {family!r}; choose from {sorted(CLAIM_FAMILIES)}")


def _stable_log_vf_gap(alpha, mean, variance):
    return math.log(stable_vf_coef(alpha)) + stable_vf_power(alpha) * math.log(mean) - math.log(variance)


def claim_from_moments(family, mean, variance, stable_root="lower"):
    """Two-moment fit: the family member with the given mean and variance.

    For the stable family ``a(alpha) m**r(alpha) = v`` generally has two
    roots in ``alpha``; the gap is unimodal in ``alpha``, and ``stable_root``
    picks the branch below (``"lower"``) or above (``"upper"``) its minimum.
    """
    mean, variance = float(mean), float(variance)
    if not (mean > 0 and variance > 0):
        raise FitError(f"claim moments must be positive, got mean={mean!r}, variance={variance!r}")
    if family == "gamma":
        p = mean * mean / variance
        return GammaClaim(1.0 - p / mean, p)
    if family == "ig":
        p = variance / mean ** 3
        return InverseGaussianClaim(-1.0 / (2.0 * p * mean * mean), p)
    if family == "stable":
        alpha = _fit_stable_index(mean, variance, stable_root)
        theta = -((mean / alpha) ** (1.0 / (alpha - 1.0)))
        return PositiveStableClaim(theta, alpha)
    raise ValueError(f"unknown claim family {family!r}; choose from {sorted(CLAIM_FAMILIES)}")


def _fit_stable_index(mean, variance, root):
    lo, hi = MIN_STABLE_ALPHA, 1.0 - 1e-9
    gap = lambda a: _stable_log_vf_gap(a, mean, variance)  # noqa: E731
    res = optimize.minimize_scalar(gap, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    a_min = float(res.x)
    if gap(a_min) > 0:
        raise FitError(
            f"stable family cannot reach variance {variance:g} at mean {mean:g}: "
            f"minimum attainable variance is {variance * math.exp(gap(a_min)):g}"
        )
    if root == "lower":
        a, b = lo, a_min
    elif root == "upper":
        a, b = a_min, hi
    else:
        raise ValueError("stable_root must be 'lower' or 'upper'")
    if gap(a) * gap(b) > 0:
        raise FitError(
            f"no stable index in [{a:.4g}, {b:.4g}] matches mean {mean:g} and variance {variance:g}"
        )
    return optimize.brentq(gap, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
