"""Tail probabilities ``P(S_N > x)`` of compound sums.

Two estimators are provided: crude Monte Carlo and importance sampling with a
common exponential tilt ``theta*`` applied to both the count and the claim
family, chosen so that the tilted mean of ``S_N`` equals ``x``.

Replications are split over ``workers`` threads, each with its own stream
spawned from ``numpy.random.SeedSequence(seed)``.  Per-worker statistics are
merged in worker order, so a result depends only on ``(seed, M, workers)``.
"""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "CompoundModel",
    "TiltPlan",
    "EstimateResult",
    "InfeasibleTiltError",
    "WeightOverflowError",
    "sample_aggregate",
    "solve_tilt",
    "mc_estimate",
    "is_estimate",
    "estimate",
    "adaptive_sample_size",
    "DEFAULT_SEED",
    "MAX_LOG_WEIGHT",
]

DEFAULT_SEED = 20240101
MAX_LOG_WEIGHT = 700.0
CHUNK = 2 ** 15
DEFAULT_BUDGET = 2 ** 24


class InfeasibleTiltError(ValueError):
    """The saddlepoint equation has no root inside the natural-parameter domains."""


class WeightOverflowError(RuntimeError):
    """An importance weight exceeded ``exp(MAX_LOG_WEIGHT)``."""


@dataclass(frozen=True)
class CompoundModel:
    """``S_N = Y_1 + ... + Y_N`` with ``N`` independent of the i.i.d. claims."""

    counting: object
    claim: object

    @property
    def mean(self):
        return self.counting.mean * self.claim.mean

    @property
    def variance(self):
        my = self.claim.mean
        return self.counting.mean * self.claim.variance + self.counting.variance * my * my

    def to_dict(self):
        counting = {"family": self.counting.family, "p": self.counting.p, "m": self.counting.mean}
        claim = {"family": self.claim.family, "params": self.claim.params()}
        return {"counting": counting, "claim": claim}


def sample_aggregate(model, rng, size=None):
    """Draw ``(N, S_N)``; ``S_N = 0`` whenever ``N = 0``."""
    count = 1 if size is None else int(size)
    n = np.asarray(model.counting.sample(rng, count))
    s = np.zeros(count)
    pos = n > 0
    if pos.any():
        s[pos] = model.claim.sample_sum(n[pos], rng)
    if size is None:
        return int(n[0]), float(s[0])
    return n, s


# -- tilting ------------------------------------------------------------------

@dataclass(frozen=True)
class TiltPlan:
    theta_star: float
    tilted_counting: object
    tilted_claim: object
    level_x: float

    @property
    def residual(self):
        """Relative gap between the tilted mean of ``S_N`` and ``x``."""
        return abs(self.tilted_counting.mean * self.tilted_claim.mean - self.level_x) / self.level_x


def _tilted_mean(model, t):
    try:
        n = model.counting.tilt(t)
        y = model.claim.tilt(t)
    except (ValueError, OverflowError):
        return math.inf, None, None
    value = n.mean * y.mean
    if not math.isfinite(value):
        return math.inf, None, None
    return value, n, y


def solve_tilt(model, x, rtol=1e-12):
    """Common tilt ``theta*`` with ``m_N(theta_N + theta*) m_Y(theta_Y + theta*) = x``.

    The left side increases strictly in ``theta*`` and blows up at the edge of
    whichever natural-parameter domain is closer, so plain bisection on
    ``[0, theta_max)`` is reliable.
    """
    x = float(x)
    if not x > 0:
        raise ValueError(f"level x must be positive, got {x!r}")
    if x <= model.mean:
        warnings.warn(f"x={x:g} is not above E[S_N]={model.mean:g}; using no tilt", stacklevel=2)
        return TiltPlan(0.0, model.counting, model.claim, x)
    gap_n = model.counting.curve.theta_domain[1] - model.counting.theta
    gap_y = model.claim.curve.theta_domain[1] - model.claim.theta
    theta_max = min(gap_n, gap_y)
    binding = "counting" if gap_n <= gap_y else "claim"
    if not math.isfinite(theta_max):
        raise InfeasibleTiltError("both natural-parameter domains are unbounded above")
    lo, hi = 0.0, theta_max
    states = []
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        value, n, y = _tilted_mean(model, mid)
        if n is not None:
            states.append((abs(value - x), mid, n, y))
            if abs(value - x) <= rtol * x:
                break
        if value < x:
            lo = mid
        else:
            hi = mid
    if not states:
        raise InfeasibleTiltError(f"no tilt below theta_max={theta_max:g} ({binding} domain) reaches x={x:g}")
    err, t, n, y = min(states, key=lambda st: st[0])
    if err > 1e-6 * x:
        raise InfeasibleTiltError(
            f"saddlepoint for x={x:g} not reached below theta_max={theta_max:g} "
            f"(binding: {binding} domain); closest miss {err:g}"
        )
    return TiltPlan(t, n, y, x)


# -- replication machinery ----------------------------------------------------

@dataclass
class _Moments:
    """Running count/mean/M2, merged with Chan's pairwise update."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    tweak: int = 0
    max_log_weight: float = -math.inf

    def add(self, values):
        k = values.size
        if k == 0:
            return
        mu = float(values.mean())
        m2 = float(((values - mu) ** 2).sum())
        self.merge(_Moments(k, mu, m2))

    def merge(self, other):
        if other.count:
            total = self.count + other.count
            delta = other.mean - self.mean
            self.mean += delta * other.count / total
            self.m2 += other.m2 + delta * delta * self.count * other.count / total
            self.count = total
        self.tweak += other.tweak
        self.max_log_weight = max(self.max_log_weight, other.max_log_weight)


def _mc_chunk(model, x):
    def run(rng, size, acc):
        _, s = sample_aggregate(model, rng, size)
        acc.add((s > x).astype(float))
    return run


def _is_chunk(model, plan, x):
    counting, claim = model.counting, model.claim
    t_counting, t_claim = plan.tilted_counting, plan.tilted_claim
    claim_mean = claim.mean

    def run(rng, size, acc):
        n = np.asarray(t_counting.sample(rng, size))
        log_w = counting.log_likelihood_ratio(t_counting, n)
        s = np.zeros(size)
        pos = n > 0
        tweak = pos & (n * claim_mean > x)
        tilted = pos & ~tweak
        if tweak.any():
            s[tweak] = claim.sample_sum(n[tweak], rng)
        if tilted.any():
            s[tilted] = t_claim.sample_sum(n[tilted], rng)
            log_w[tilted] += claim.log_density_ratio_sum(t_claim, n[tilted], s[tilted])
        hit = s > x
        top = float(log_w[hit].max()) if hit.any() else -math.inf
        if top > MAX_LOG_WEIGHT:
            raise WeightOverflowError(
                f"log-weight {top:.1f} exceeds {MAX_LOG_WEIGHT:g} at x={x:g} "
                f"(theta*={plan.theta_star:g}); the tilt does not match the model"
            )
        out = np.zeros(size)
        out[hit] = np.exp(log_w[hit])
        acc.add(out)
        acc.tweak += int(tweak.sum())
        acc.max_log_weight = max(acc.max_log_weight, top)
    return run


def _run_worker(kernel, seed_seq, count):
    rng = np.random.default_rng(seed_seq)
    acc = _Moments()
    done = 0
    while done < count:
        size = min(CHUNK, count - done)
        kernel(rng, size, acc)
        done += size
    return acc


def _replicate(kernel, M, seed_seq, workers):
    workers = max(1, int(workers))
    streams = seed_seq.spawn(workers)
    shares = [M // workers + (w < M % workers) for w in range(workers)]
    if workers == 1:
        parts = [_run_worker(kernel, streams[0], shares[0])]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_worker, [kernel] * workers, streams, shares))
    total = _Moments()
    for part in parts:
        total.merge(part)
    return total


# -- results --------------------------------------------------------------------

@dataclass
class EstimateResult:
    """One estimate of ``P(S_N > x)``.

    Every field except ``runtime_ms`` is a deterministic function of the
    model, ``x``, ``M``, ``seed`` and ``workers``.
    """

    estimate: float
    std_error: float
    M: int
    method: str
    seed: int
    level_x: float
    workers: int = 1
    theta_star: float = 0.0
    tweak_branch_fraction: float = 0.0
    converged: bool = True
    runtime_ms: float = 0.0
    model: Optional[dict] = field(default=None, repr=False)

    @property
    def relative_error(self):
        return self.std_error / self.estimate if self.estimate > 0 else math.inf

    def to_dict(self):
        record = asdict(self)
        record["x"] = record.pop("level_x")
        return record


def _finish(acc, method, seed, x, workers, theta_star, start, model, converged=True):
    M = acc.count
    std = math.sqrt(acc.m2 / (M - 1)) if M > 1 else 0.0
    return EstimateResult(
        estimate=acc.mean,
        std_error=std / math.sqrt(M),
        M=M,
        method=method,
        seed=seed,
        level_x=float(x),
        workers=workers,
        theta_star=theta_star,
        tweak_branch_fraction=acc.tweak / M if M else 0.0,
        converged=converged,
        runtime_ms=(time.perf_counter() - start) * 1e3,
        model=model.to_dict(),
    )


def _check_run(x, M):
    if not x >= 0:
        raise ValueError(f"level x must be nonnegative, got {x!r}")
    if int(M) < 1:
        raise ValueError(f"sample size M must be >= 1, got {M!r}")


def _kernel(model, x, method):
    if method == "mc":
        return _mc_chunk(model, x), 0.0
    if method == "is":
        if x <= model.mean:
            plan = TiltPlan(0.0, model.counting, model.claim, x)
        else:
            plan = solve_tilt(model, x)
        return _is_chunk(model, plan, x), plan.theta_star
    raise ValueError(f"method must be 'mc' or 'is', got {method!r}")


def estimate(model, x, M, method="is", seed=DEFAULT_SEED, workers=1):
    """Fixed-``M`` estimate by ``method`` (``"mc"`` or ``"is"``)."""
    _check_run(x, M)
    start = time.perf_counter()
    kernel, theta_star = _kernel(model, x, method)
    acc = _replicate(kernel, int(M), np.random.SeedSequence(seed), workers)
    return _finish(acc, method, seed, x, workers, theta_star, start, model)


def mc_estimate(model, x, M, seed=DEFAULT_SEED, workers=1):
    """Crude Monte Carlo: the mean of ``1{S_N > x}``."""
    return estimate(model, x, M, "mc", seed, workers)


def is_estimate(model, x, M, seed=DEFAULT_SEED, workers=1):
    """Importance sampling under the common saddlepoint tilt.

    Given ``N = n``, when ``n E[Y] > x`` the claim sum is drawn from the
    original law (claim weight 1); otherwise from the tilted law.  Below the
    mean ``x <= E[S_N]`` no tilt is applied and this reduces to crude MC.
    """
    return estimate(model, x, M, "is", seed, workers)


def adaptive_sample_size(model, x, target_rel_se=0.1, method="is", seed=DEFAULT_SEED,
                         workers=1, initial=1000, budget=DEFAULT_BUDGET):
    """Double the total ``M`` from ``initial`` until ``se/estimate <= target_rel_se``.

    Each batch draws from a fresh child of ``SeedSequence(seed)``, so the
    result is still determined by its inputs.  If ``budget`` replications are
    spent first, the partial result comes back with ``converged=False``.
    """
    if not 0 < target_rel_se < 1:
        raise ValueError("target_rel_se must lie in (0, 1)")
    _check_run(x, initial)
    start = time.perf_counter()
    kernel, theta_star = _kernel(model, x, method)
    root = np.random.SeedSequence(seed)
    acc = _Moments()
    batch = int(initial)
    while True:
        acc.merge(_replicate(kernel, batch, root.spawn(1)[0], workers))
        M = acc.count
        if acc.mean > 0 and M > 1:
            se = math.sqrt(acc.m2 / (M - 1) / M)
            if se <= target_rel_se * acc.mean:
                return _finish(acc, method, seed, x, workers, theta_star, start, model)
        if M >= budget:
            return _finish(acc, method, seed, x, workers, theta_star, start, model, converged=False)
        batch = min(M, budget - M)
