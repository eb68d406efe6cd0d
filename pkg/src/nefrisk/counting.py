"""Abel, strict-arcsine and Takacs counting distributions.

All three are NEFs with cubic variance functions and pmfs of the form

    f(n) = base(n) * exp(n * theta(m) - kappa(m)),      n = 0, 1, 2, ...

where ``base`` does not depend on the mean ``m``.  Their tails decay like
``n**-1.5`` (times ``exp(n theta)``), so each sampler is an accept-reject
scheme against the ``floor(U**-2)`` envelope from :mod:`nefrisk.zipf`.
Kernels are evaluated in log space throughout.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy import special, stats

from .nef import (
    DomainError,
    NefCurve,
    abel_curve,
    arcsine_curve,
    mean_from_theta,
    poisson_curve,
    takacs_curve,
)
from .zipf import SQRT2, ZETA_2, log_proposal_pmf

__all__ = [
    "DominanceError",
    "SamplerStallError",
    "CountingDistribution",
    "AbelDistribution",
    "ArcsineDistribution",
    "TakacsDistribution",
    "PoissonDistribution",
    "ArcsineBound",
    "TakacsBound",
    "arcsine_bound_constants",
    "takacs_bound_constant",
    "arcsine_epsilon",
    "arcsine_odd_ratio_sup",
    "arcsine_log_kernel",
    "poisson_log_pmf",
    "make_counting",
    "COUNTING_FAMILIES",
    "BASELINE_FAMILIES",
]

MAX_AR_ROUNDS = 10 ** 6
_DOMINANCE_SLACK = 1e-9
_MAX_BATCH = 2 ** 21
_MAX_EXACT_INT = 2.0 ** 62


class DominanceError(RuntimeError):
    """An acceptance ratio exceeded one, so the envelope constant is invalid."""


class SamplerStallError(RuntimeError):
    """The accept-reject loop hit its round cap."""


class CountingDistribution:
    """Shared machinery; subclasses provide the kernel and the envelope.

    Instances are immutable once built: every sampler constant is computed in
    ``__init__``.  Sampling takes a caller-owned ``numpy.random.Generator``.
    """

    family = ""
    #: number of leading atoms handled by inversion before the AR loop
    n_atoms = 1

    def __init__(self, p, m):
        p, m = float(p), float(m)
        if not (p > 0 and math.isfinite(p)):
            raise DomainError(f"{self.family}: dispersion p must be positive, got {p!r}")
        if not (m > 0 and math.isfinite(m)):
            raise DomainError(f"{self.family}: mean m must be positive and finite, got {m!r}")
        self.p = p
        self.m = m
        self.curve = self._make_curve(p)
        self.theta = float(self.curve.theta_of_mean(m))
        self.kappa = float(self.curve.kappa_of_mean(m))
        self._setup()
        atoms = np.exp(self.log_pmf(np.arange(self.n_atoms)))
        self.f0 = float(atoms[0])
        self.f1 = float(np.exp(self.log_pmf(1)))
        self.atom_mass = float(atoms.sum())
        self.C = self._dominating_constant()
        self._log_C = math.log(self.C)
        self._log_tail = math.log1p(-self.atom_mass)

    # -- to be provided by subclasses ----------------------------------------
    @staticmethod
    def _make_curve(p) -> NefCurve:
        raise NotImplementedError

    def _setup(self):
        """Hook for family constants needed before the envelope is built."""

    def log_kernel(self, n):
        """Log of the m-free base measure, vectorized over float ``n``."""
        raise NotImplementedError

    def _dominating_constant(self) -> float:
        raise NotImplementedError

    def _propose(self, rng, size):
        """Return proposals and their log envelope probabilities."""
        u = 1.0 - rng.random(size)
        n = np.floor(u ** -2.0)
        return n, log_proposal_pmf(n)

    # -- pmf ------------------------------------------------------------------
    @property
    def mean(self):
        return self.m

    @property
    def variance(self):
        return float(self.curve.variance_of_mean(self.m))

    def log_pmf(self, n):
        arr = np.asarray(n, dtype=float)
        if np.any(arr < 0) or np.any(arr != np.floor(arr)):
            raise DomainError(f"{self.family} pmf needs nonnegative integers")
        out = self.log_kernel(arr) + arr * self.theta - self.kappa
        return float(out) if out.ndim == 0 else out

    def pmf(self, n):
        return np.exp(self.log_pmf(n))

    @property
    def acceptance_probability(self):
        """Expected acceptance rate ``1/C`` of the AR loop."""
        return 1.0 / self.C

    # -- tilting ----------------------------------------------------------------
    def with_mean(self, m):
        return type(self)(self.p, m)

    def tilt(self, theta_star):
        """Same family and dispersion, natural parameter shifted by ``theta_star``."""
        return self.with_mean(mean_from_theta(self.curve, self.theta + theta_star))

    def log_likelihood_ratio(self, other, n):
        """``log P_self(N=n) - log P_other(N=n)`` for a member of the same family."""
        if type(other) is not type(self) or other.p != self.p:
            raise ValueError("likelihood ratio needs the same family and dispersion")
        n = np.asarray(n, dtype=float)
        return n * (self.theta - other.theta) - self.kappa + other.kappa

    # -- sampling -------------------------------------------------------------
    def sample(self, rng, size=None, return_stats=False):
        """Exact draws.  Returns an int for ``size=None``, else an int64 array.

        With ``return_stats=True`` also returns ``(accepted, proposed)`` counts
        from the AR loop, whose ratio estimates ``1/C``.
        """
        count = 1 if size is None else int(size)
        u = rng.random(count)
        out = np.zeros(count, dtype=np.int64)
        if self.n_atoms >= 2:
            out[(u >= self.f0) & (u < self.f0 + self.f1)] = 1
        pending = np.flatnonzero(u >= self.atom_mass)
        draws, accepted, proposed = self._rejection(rng, pending.size)
        out[pending] = draws
        if size is None:
            result = int(out[0])
        else:
            result = out
        if return_stats:
            return result, (accepted, proposed)
        return result

    def _log_accept(self, n, log_env):
        return self.log_pmf(n) - self._log_tail - self._log_C - log_env

    def _rejection(self, rng, count):
        out = np.empty(count, dtype=np.int64)
        filled = accepted = proposed = 0
        rounds = 0
        while filled < count:
            rounds += 1
            if rounds > MAX_AR_ROUNDS:
                raise SamplerStallError(
                    f"{self.family} AR loop exceeded {MAX_AR_ROUNDS} rounds (C={self.C:.4g})"
                )
            need = count - filled
            batch = int(min(max(need * self.C * 1.1 + 16, 64), _MAX_BATCH))
            n, log_env = self._propose(rng, batch)
            log_ratio = self._log_accept(n, log_env)
            if np.any(log_ratio > _DOMINANCE_SLACK):
                bad = n[np.argmax(log_ratio)]
                raise DominanceError(
                    f"{self.family}: acceptance ratio {math.exp(log_ratio.max()):.6g} > 1 "
                    f"at n={bad:.0f} (p={self.p}, m={self.m})"
                )
            ok = np.log(rng.random(batch)) < log_ratio
            hits = n[ok]
            proposed += batch
            accepted += hits.size
            take = hits[:need]
            if take.size and take.max() >= _MAX_EXACT_INT:
                raise SamplerStallError(f"{self.family}: accepted count beyond int64 range")
            out[filled:filled + take.size] = take
            filled += take.size
        return out, accepted, proposed

    # -- reporting --------------------------------------------------------------
    def _extra_diagnostics(self):
        return {"K": None, "i_star": None}

    def diagnostics(self, rng=None, n_draws=200_000):
        """JSON-ready record of the sampler constants.

        When ``rng`` is given the acceptance rate is measured from ``n_draws``
        draws; otherwise it is reported as ``None``.
        """
        rate = None
        if rng is not None:
            _, (acc, prop) = self.sample(rng, n_draws, return_stats=True)
            rate = acc / prop if prop else None
        record = {
            "family": self.family,
            "p": self.p,
            "m": self.m,
            "theta": self.theta,
            "kappa": self.kappa,
            "f0": self.f0,
            "f1": self.f1,
            "C": self.C,
        }
        record.update(self._extra_diagnostics())
        record["measured_acceptance_rate"] = rate
        return record

    def __repr__(self):
        return f"{type(self).__name__}(p={self.p!r}, m={self.m!r})"

    def __eq__(self, other):
        return type(other) is type(self) and (other.p, other.m) == (self.p, self.m)

    def __hash__(self):
        return hash((type(self).__name__, self.p, self.m))


# =============================================================================
# Abel
# =============================================================================

class AbelDistribution(CountingDistribution):
    """Abel NEF, ``V(m) = m (1 + m/p)^2``, kernel ``p (p+n)^(n-1) / n!``."""

    family = "abel"

    @staticmethod
    def _make_curve(p):
        return abel_curve(p)

    def log_kernel(self, n):
        # log nu_0(n) = log nu(n) - n - p
        p = self.p
        return math.log(p) + (n - 1.0) * np.log(p + n) - special.gammaln(n + 1.0) - n - p

    def _dominating_constant(self):
        # f(n | n >= 1) <= C b(n); uses n! >= sqrt(2 pi n) (n/e)^n and theta <= 0
        return self.p * math.exp(-self.kappa) / (
            (1.0 - self.f0) * math.sqrt(math.pi) * (SQRT2 - 1.0)
        )


# =============================================================================
# strict arcsine
# =============================================================================

_ARCSINE_TABLE_SIZE = 2 ** 21


@lru_cache(maxsize=64)
def _arcsine_log_kernel_table(p):
    """``log nu(k)`` for ``k < _ARCSINE_TABLE_SIZE`` by the two-step recursion
    ``nu(k) = nu(k-2) ((k-2)^2 + p^2) / ((k-1) k)``."""
    size = _ARCSINE_TABLE_SIZE
    k = np.arange(2, size, dtype=float)
    steps = np.log((k - 2.0) ** 2 + p * p) - np.log(k - 1.0) - np.log(k)
    table = np.empty(size)
    table[0] = 0.0
    table[1] = math.log(p)
    table[2::2] = np.cumsum(steps[0::2])
    table[3::2] = math.log(p) + np.cumsum(steps[1::2])
    table.setflags(write=False)
    return table


def _arcsine_log_kernel_closed(p, n):
    """Same kernel through complex log-gamma; used beyond the table and as an oracle.

    prod_{i<k} ((2i + s)^2 + p^2) = 4^k |Gamma(k + s/2 + ip/2)|^2 / |Gamma(s/2 + ip/2)|^2
    """
    n = np.asarray(n, dtype=float)
    half = np.floor(n / 2.0)
    odd = n - 2.0 * half
    shift = 0.5 * odd + 0.5j * p
    log_prod = (
        half * math.log(4.0)
        + 2.0 * special.loggamma(half + shift).real
        - 2.0 * special.loggamma(shift).real
    )
    return log_prod + odd * math.log(p) - special.gammaln(n + 1.0)


def arcsine_log_kernel(p, n):
    """``log nu(n)`` for the strict-arcsine kernel, vectorized."""
    n = np.asarray(n, dtype=float)
    table = _arcsine_log_kernel_table(float(p))
    small = n < table.size
    if np.all(small):
        return table[n.astype(np.int64)]
    out = np.empty(n.shape)
    out[small] = table[n[small].astype(np.int64)]
    out[~small] = _arcsine_log_kernel_closed(p, n[~small])
    return out


def arcsine_epsilon(p, i):
    """Second-order remainder in the bound ``rho_i <= 1 - 3/(2i) + eps_i``."""
    i = np.asarray(i, dtype=float)
    p2 = p * p
    return (9.0 + p2) / (4.0 * i ** 2) - 3.0 * p2 / (8.0 * i ** 3) + 9.0 * p2 / (4.0 * i ** 4)


@dataclass(frozen=True)
class ArcsineBound:
    """Constants of ``nu(2n), nu(2n+1) <= K n**-1.5`` for all ``n >= 1``.

    ``K1`` bounds the even kernel for ``n > i_star`` and ``K0`` both kernels
    up to ``i_star``.  Odd terms beyond ``i_star`` use
    ``nu(2n+1) <= odd_ratio * nu(2n)``, so ``K = max(K0, odd_ratio * K1)``.
    With ``refined=True`` the harmonic-sum step keeps the constant
    ``H_{i*} - log(i*+1)``, which tightens ``K1`` by ``exp(-1.5 (H_{i*} - log(i*+1)))``.
    """

    p: float
    i_star: int
    G: float
    K0: float
    K1: float
    K: float
    refined: bool
    odd_ratio: float = 1.0


def _arcsine_threshold(p):
    # for i >= 6, eps_i <= (9+p^2)/(4 i^2) < 3/(2i) once i > (9+p^2)/6
    horizon = max(6, int(math.floor((9.0 + p * p) / 6.0)) + 1)
    i = np.arange(1, horizon + 1)
    failing = i[1.5 / i - arcsine_epsilon(p, i) <= 0]
    return max(5, int(failing.max()) if failing.size else 0)


def arcsine_bound_constants(p, refined=True) -> ArcsineBound:
    p = float(p)
    if not p > 0:
        raise DomainError(f"arcsine dispersion must be positive, got {p!r}")
    i_star = _arcsine_threshold(p)
    i = np.arange(i_star + 1, dtype=float)
    log_rho = np.log(4 * i ** 2 + p * p) - np.log(4 * i ** 2 + 6 * i + 2)
    log_G = float(log_rho.sum())
    j = np.arange(1, i_star + 1, dtype=float)
    harmonic = float(np.sum(1.0 / j))
    harmonic2 = float(np.sum(1.0 / j ** 2))
    log_K1 = log_G + 1.5 * harmonic + (9.0 + p * p) / 4.0 * (ZETA_2 - harmonic2)
    if refined:
        # H_{n-1} - log n increases in n, so H_{n-1} >= log n + H_{i*} - log(i*+1)
        log_K1 -= 1.5 * (harmonic - math.log(i_star + 1.0))
    n = np.arange(1, i_star + 1, dtype=float)
    log_even = arcsine_log_kernel(p, 2 * n)
    log_odd = arcsine_log_kernel(p, 2 * n + 1)
    log_K0 = float(np.max(np.maximum(log_even, log_odd) + 1.5 * np.log(n)))
    K0, K1 = math.exp(log_K0), math.exp(log_K1)
    ratio = arcsine_odd_ratio_sup(p, i_star)
    return ArcsineBound(p=p, i_star=i_star, G=math.exp(log_G), K0=K0, K1=K1, K=max(K0, ratio * K1),
                        refined=refined, odd_ratio=ratio)


def arcsine_odd_ratio_sup(p, i_star):
    """``sup_{n > i_star} nu(2n+1) / nu(2n)``.

    The ratio ``r(n)`` satisfies ``r(n+1)/r(n) > 1`` iff ``6n + 1 > 2p^2`` and
    tends to ``coth(pi p / 2)`` (from the log-gamma form of the kernel), so on
    ``n > i_star`` it is largest either at ``n = i_star + 1`` or in the limit.
    """
    n = float(i_star + 1)
    first = math.exp(float(arcsine_log_kernel(p, 2 * n + 1) - arcsine_log_kernel(p, 2 * n)))
    return max(first, 1.0 / math.tanh(0.5 * math.pi * p))


class ArcsineDistribution(CountingDistribution):
    """Strict arcsine NEF, ``V(m) = m (1 + m^2/p^2)``.

    Atoms at 0 and 1 are drawn by inversion, ``n >= 2`` by AR against the
    double-Zipf envelope.
    """

    family = "arcsine"
    n_atoms = 2

    def __init__(self, p, m, refined_bound=True):
        self._refined = refined_bound
        super().__init__(p, m)

    def _setup(self):
        self.bound = arcsine_bound_constants(self.p, refined=self._refined)

    def with_mean(self, m):
        return type(self)(self.p, m, refined_bound=self.bound.refined)

    @staticmethod
    def _make_curve(p):
        return arcsine_curve(p)

    def log_kernel(self, n):
        return arcsine_log_kernel(self.p, n)

    def _dominating_constant(self):
        return 2.0 * self.bound.K * math.exp(-self.kappa) * SQRT2 / (
            (1.0 - self.f0 - self.f1) * (SQRT2 - 1.0)
        )

    def _propose(self, rng, size):
        u = 1.0 - rng.random(size)
        y = np.floor(u ** -2.0)
        n = 2.0 * y + (rng.random(size) >= 0.5)
        return n, log_proposal_pmf(y) - math.log(2.0)

    def _extra_diagnostics(self):
        return {"K": self.bound.K, "i_star": self.bound.i_star}


# =============================================================================
# Takacs
# =============================================================================

def _takacs_log_kernel(p, n):
    # nu(n) = p/(n+p) * (2n+p-1)! / (n! (n+p-1)!)
    return (
        math.log(p) - np.log(n + p)
        + special.gammaln(2.0 * n + p) - special.gammaln(n + 1.0) - special.gammaln(n + p)
    )


@dataclass(frozen=True)
class TakacsBound:
    """``nu_0(n) <= K n**-1.5`` with ``nu_0(n) = nu(n) exp(theta(m) n)``."""

    p: float
    m: float
    K0: float
    K1: float
    K: float
    certified: bool


TAKACS_SCAN_HORIZON = 10 ** 5


def takacs_bound_constant(p, m, horizon=TAKACS_SCAN_HORIZON) -> TakacsBound:
    """Envelope constant for the Takacs sampler.

    For ``p > 1``, ``K1 = p e^(1/12) sqrt(2) 2^(p-1) / sqrt(2 pi)`` holds for
    ``n >= m`` and ``K0`` is a direct scan of ``1 <= n <= ceil(m)``.  For
    ``p <= 1`` the analytic step does not apply; ``K`` then comes from a scan
    up to ``horizon`` and the result is flagged ``certified=False``.
    """
    p, m = float(p), float(m)
    theta = float(takacs_curve(p).theta_of_mean(m))

    def scan(upper):
        n = np.arange(1, upper + 1, dtype=float)
        return math.exp(float(np.max(_takacs_log_kernel(p, n) + theta * n + 1.5 * np.log(n))))

    if p <= 1.0:
        K = scan(max(int(horizon), int(math.ceil(m))))
        return TakacsBound(p=p, m=m, K0=K, K1=math.nan, K=K, certified=False)
    K1 = p * math.exp(1.0 / 12.0) / math.sqrt(2.0 * math.pi) * SQRT2 * 2.0 ** (p - 1.0)
    K0 = scan(int(math.ceil(m)))
    return TakacsBound(p=p, m=m, K0=K0, K1=K1, K=max(K0, K1), certified=True)


class TakacsDistribution(CountingDistribution):
    """Takacs NEF, ``V(m) = m (1 + m/p)(1 + 2m/p)``."""

    family = "takacs"

    def _setup(self):
        self.bound = takacs_bound_constant(self.p, self.m)

    @staticmethod
    def _make_curve(p):
        return takacs_curve(p)

    def log_kernel(self, n):
        return _takacs_log_kernel(self.p, n)

    def _dominating_constant(self):
        return self.bound.K * math.exp(-self.kappa) * SQRT2 / ((1.0 - self.f0) * (SQRT2 - 1.0))

    def _extra_diagnostics(self):
        return {"K": self.bound.K, "i_star": None, "certified": self.bound.certified}


# =============================================================================

def poisson_log_pmf(n, m):
    """Reference Poisson pmf in log space (baseline for tails and GOF)."""
    return stats.poisson.logpmf(n, m)


class PoissonDistribution(CountingDistribution):
    """Poisson counts, the light-tailed baseline.  Sampled directly, no AR.

    Poisson has no dispersion parameter; ``p`` is kept at 1 so the shared
    machinery (tilting, likelihood ratios) applies unchanged.
    """

    family = "poisson"

    def __init__(self, m, p=1.0):
        super().__init__(1.0, m)

    @staticmethod
    def _make_curve(p):
        return poisson_curve()

    def log_kernel(self, n):
        return -special.gammaln(np.asarray(n, dtype=float) + 1.0)

    def _dominating_constant(self):
        return 1.0

    def with_mean(self, m):
        return PoissonDistribution(m)

    def sample(self, rng, size=None, return_stats=False):
        out = rng.poisson(self.m, size)
        result = int(out) if size is None else out.astype(np.int64)
        if return_stats:
            count = 1 if size is None else int(size)
            return result, (count, count)
        return result

    def __repr__(self):
        return f"PoissonDistribution(m={self.m!r})"


COUNTING_FAMILIES = {
    "abel": AbelDistribution,
    "arcsine": ArcsineDistribution,
    "takacs": TakacsDistribution,
}


BASELINE_FAMILIES = {"poisson": PoissonDistribution}


def make_counting(family, p, m):
    """Build a counting distribution; ``p`` is ignored for the Poisson baseline."""
    if family == "poisson":
        return PoissonDistribution(m)
    try:
        cls = COUNTING_FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown counting family {family!r}; choose from {sorted(COUNTING_FAMILIES)}") from None
    return cls(p, m)


def bound_record(bound):
    return asdict(bound)
