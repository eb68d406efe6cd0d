import math
import types
import warnings

import numpy as np
import pytest

from nefrisk import engine
from nefrisk.claims import GammaClaim, claim_from_moments
from nefrisk.counting import make_counting
from nefrisk.engine import (
    CompoundModel,
    InfeasibleTiltError,
    WeightOverflowError,
    adaptive_sample_size,
    estimate,
    is_estimate,
    mc_estimate,
    sample_aggregate,
    solve_tilt,
)

from conftest import CLAIM_MEAN, CLAIM_VAR, M_COUNT, P_ABEL, P_ARCSINE, P_TAKACS

# P(S_N > x) by the series sum_n f_N(n) P(Y_1 + ... + Y_n > x) over n <= 4e6,
# with the n-fold claim tail from scipy (inverse Gaussian logsf, regularised
# incomplete gamma)
EXACT_TAIL = {
    ("abel", "ig", 5000): 0.009871477647070375,
    ("abel", "ig", 15000): 0.0006657087471706216,
    ("abel", "ig", 25000): 8.050652512056765e-05,
    ("abel", "ig", 50000): 7.955802389195698e-07,
    ("abel", "gamma", 1000): 0.07491628704349157,
    ("arcsine", "gamma", 10000): 0.0022631346660869755,
    ("arcsine", "gamma", 25000): 8.607649117666819e-05,
    ("takacs", "ig", 25000): 8.018129310525645e-05,
    ("poisson", "gamma", 600): 0.04609132149865454,
    ("poisson", "gamma", 1000): 0.0004672593199564763,
}

P_COUNT = {"abel": P_ABEL, "arcsine": P_ARCSINE, "takacs": P_TAKACS, "poisson": 1.0}


def build(counting, claim):
    return CompoundModel(
        make_counting(counting, P_COUNT[counting], M_COUNT),
        claim_from_moments(claim, CLAIM_MEAN, CLAIM_VAR),
    )


@pytest.fixture(scope="module")
def abel_ig():
    return build("abel", "ig")


def within(result, exact, k=4.0):
    return abs(result.estimate - exact) <= k * result.std_error


# -- model and plain simulation ----------------------------------------------------

def test_model_moments(abel_ig):
    assert abel_ig.mean == pytest.approx(M_COUNT * CLAIM_MEAN, rel=1e-9)
    var = M_COUNT * CLAIM_VAR + abel_ig.counting.variance * CLAIM_MEAN ** 2
    assert abel_ig.variance == pytest.approx(var, rel=1e-9)
    assert abel_ig.to_dict()["counting"]["family"] == "abel"


def test_sample_aggregate_zero_count_gives_zero(abel_ig, rng):
    n, s = sample_aggregate(abel_ig, rng, 100_000)
    assert np.all(s[n == 0] == 0.0)
    assert np.all(s[n > 0] > 0.0)
    assert isinstance(sample_aggregate(abel_ig, rng)[1], float)


def test_sample_aggregate_moments(rng):
    model = build("poisson", "gamma")
    _, s = sample_aggregate(model, rng, 400_000)
    assert s.mean() == pytest.approx(model.mean, rel=0.01)
    assert s.var() == pytest.approx(model.variance, rel=0.03)


# -- tilt ---------------------------------------------------------------------------

@pytest.mark.parametrize("counting", ["abel", "arcsine", "takacs", "poisson"])
@pytest.mark.parametrize("claim", ["gamma", "ig", "stable"])
def test_solve_tilt_hits_level(counting, claim):
    model = build(counting, claim)
    for x in (1000.0, 25000.0, 50000.0):
        plan = solve_tilt(model, x)
        assert plan.theta_star > 0
        # steep tilted means (Takacs near m = 1e4) limit theta to ~1e-9 relative accuracy in x
        assert plan.residual < 1e-8
        assert plan.tilted_counting.theta == pytest.approx(model.counting.theta + plan.theta_star, abs=1e-15)


def test_tilt_increases_with_level(abel_ig):
    thetas = [solve_tilt(abel_ig, x).theta_star for x in range(5000, 50001, 5000)]
    assert all(a < b for a, b in zip(thetas, thetas[1:]))


def test_tilt_below_mean_warns(abel_ig):
    with pytest.warns(UserWarning, match="no tilt"):
        plan = solve_tilt(abel_ig, 100.0)
    assert plan.theta_star == 0.0 and plan.tilted_claim is abel_ig.claim


def test_tilt_rejects_nonpositive_level(abel_ig):
    with pytest.raises(ValueError):
        solve_tilt(abel_ig, 0.0)


def test_tilt_infeasible_when_mean_saturates():
    # toy families whose tilted means stay below 10, so x = 500 is out of reach
    class Toy:
        def __init__(self, theta):
            self.theta = theta
            self.mean = 10.0 * (1.0 - math.exp(theta - 1.0))
            self.curve = types.SimpleNamespace(theta_domain=(-math.inf, 1.0))

        def tilt(self, t):
            return Toy(self.theta + t)

    claim = Toy(0.0)
    model = CompoundModel(Toy(0.0), claim)
    with pytest.raises(InfeasibleTiltError, match="not reached"):
        solve_tilt(model, 500.0)


# -- estimators against the exact tail ----------------------------------------------

@pytest.mark.parametrize(
    "key, M",
    [
        (("abel", "ig", 5000), 20_000),
        (("abel", "ig", 25000), 20_000),
        (("abel", "ig", 50000), 40_000),
        (("arcsine", "gamma", 25000), 20_000),
        (("takacs", "ig", 25000), 20_000),
        (("poisson", "gamma", 1000), 20_000),
    ],
)
def test_is_matches_exact_tail(key, M):
    counting, claim, x = key
    r = is_estimate(build(counting, claim), x, M, seed=7)
    assert r.method == "is" and r.M == M
    assert r.std_error / r.estimate < 0.2
    assert within(r, EXACT_TAIL[key])


@pytest.mark.parametrize(
    "key, M",
    [
        (("abel", "ig", 5000), 50_000),
        (("abel", "ig", 15000), 200_000),
        (("abel", "gamma", 1000), 20_000),
        (("arcsine", "gamma", 10000), 100_000),
        (("poisson", "gamma", 600), 20_000),
    ],
)
def test_mc_matches_exact_tail(key, M):
    counting, claim, x = key
    r = mc_estimate(build(counting, claim), x, M, seed=7)
    assert r.method == "mc" and r.theta_star == 0.0
    assert within(r, EXACT_TAIL[key])


def test_is_variance_far_below_mc(abel_ig):
    exact = EXACT_TAIL[("abel", "ig", 25000)]
    mc_se = math.sqrt(exact * (1 - exact) / 20_000)
    is_ = is_estimate(abel_ig, 25000, 20_000, seed=3)
    assert is_.std_error < mc_se / 5


def test_is_below_mean_is_plain_mc(abel_ig):
    # without a tilt every weight is 1: the estimate is a hit frequency
    r = is_estimate(abel_ig, 200.0, 5000, seed=1)
    assert r.theta_star == 0.0
    hits = r.estimate * r.M
    assert hits == pytest.approx(round(hits), abs=1e-6)
    bernoulli = math.sqrt(r.estimate * (1 - r.estimate) / (r.M - 1))
    assert r.std_error == pytest.approx(bernoulli, rel=1e-9)


def test_tweak_branch_used_at_low_level(abel_ig):
    r = is_estimate(abel_ig, 5000, 20_000, seed=2)
    assert 0.0 < r.tweak_branch_fraction < 1.0


# -- determinism -----------------------------------------------------------------

def test_same_inputs_same_result(abel_ig):
    a = is_estimate(abel_ig, 25000, 5000, seed=11, workers=3)
    b = is_estimate(abel_ig, 25000, 5000, seed=11, workers=3)
    assert (a.estimate, a.std_error) == (b.estimate, b.std_error)


def test_seed_and_workers_change_streams(abel_ig):
    a = is_estimate(abel_ig, 25000, 5000, seed=11, workers=1)
    b = is_estimate(abel_ig, 25000, 5000, seed=12, workers=1)
    c = is_estimate(abel_ig, 25000, 5000, seed=11, workers=2)
    assert a.estimate != b.estimate and a.estimate != c.estimate
    assert c.M == 5000 and c.workers == 2


def test_uneven_worker_split(abel_ig):
    r = mc_estimate(abel_ig, 5000, 1001, seed=1, workers=4)
    assert r.M == 1001


def test_result_record(abel_ig):
    r = is_estimate(abel_ig, 25000, 2000, seed=5)
    d = r.to_dict()
    assert d["x"] == 25000.0 and "level_x" not in d
    assert d["theta_star"] == pytest.approx(solve_tilt(abel_ig, 25000).theta_star)
    assert d["converged"] is True and d["runtime_ms"] >= 0
    assert d["model"]["claim"]["family"] == "ig"
    assert r.relative_error == pytest.approx(r.std_error / r.estimate)


# -- errors ------------------------------------------------------------------------

def test_argument_errors(abel_ig):
    with pytest.raises(ValueError, match="M must be"):
        estimate(abel_ig, 1000, 0)
    with pytest.raises(ValueError, match="nonnegative"):
        estimate(abel_ig, -1.0, 10)
    with pytest.raises(ValueError, match="method"):
        estimate(abel_ig, 1000, 10, method="qmc")


def test_weight_overflow_detected(abel_ig, monkeypatch):
    monkeypatch.setattr(engine, "MAX_LOG_WEIGHT", -30.0)
    with pytest.raises(WeightOverflowError, match="log-weight"):
        is_estimate(abel_ig, 25000, 2000, seed=1)


# -- adaptive sample size ------------------------------------------------------

def test_adaptive_reaches_target(abel_ig):
    r = adaptive_sample_size(abel_ig, 25000, 0.1, "is", seed=4)
    assert r.converged
    assert r.std_error <= 0.1 * r.estimate
    # doubling from 1000
    assert r.M % 1000 == 0 and (r.M // 1000) & (r.M // 1000 - 1) == 0
    assert within(r, EXACT_TAIL[("abel", "ig", 25000)])


def test_adaptive_is_deterministic(abel_ig):
    a = adaptive_sample_size(abel_ig, 15000, 0.1, "mc", seed=4)
    b = adaptive_sample_size(abel_ig, 15000, 0.1, "mc", seed=4)
    assert (a.M, a.estimate) == (b.M, b.estimate)


def test_adaptive_budget_exhausted(abel_ig):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        r = adaptive_sample_size(abel_ig, 25000, 0.01, "mc", seed=4, budget=5000)
    assert not r.converged and r.M == 5000


def test_adaptive_rejects_bad_target(abel_ig):
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            adaptive_sample_size(abel_ig, 25000, bad)


def test_gamma_claim_model_with_scalar_classes():
    model = CompoundModel(make_counting("abel", 1.0, 5.0), GammaClaim(0.5, 2.0))
    r = is_estimate(model, 100.0, 4000, seed=1)
    assert r.estimate > 0 and math.isfinite(r.std_error)
