"""Exit criteria, one test each.

Every test records a single PASS/FAIL line (printed in the terminal summary)
before asserting, so a failing criterion is still reported with its numbers.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

from nefrisk import presets
from nefrisk.claims import claim_from_moments
from nefrisk.counting import (
    AbelDistribution,
    ArcsineDistribution,
    PoissonDistribution,
    TakacsDistribution,
    arcsine_bound_constants,
    arcsine_log_kernel,
    make_counting,
    poisson_log_pmf,
)
from nefrisk.engine import CompoundModel, adaptive_sample_size, estimate
from nefrisk.fitting import SampleMoments, fit_counting_dispersion, fit_model
from nefrisk.zipf import double_zipf_pmf, proposal_pmf

from conftest import ACCEPTANCE_LINES, M_COUNT, P_ABEL, P_ARCSINE, P_TAKACS, dataset_path, requires_data

pytestmark = pytest.mark.acceptance

COUNT_VAR = 52181.52
CLAIM_MEAN, CLAIM_VAR = 4.66, 265.34
SEED = 20240101

# published fitted claim parameters: theta, p, alpha
PUBLISHED_CLAIMS = {
    "gamma": (0.982425, 0.081960, None),
    "ig": (-0.008788, 2.616360, None),
    "stable": (-0.015496, 2.134192, 0.118315),
}
PUBLISHED_DISPERSION = {"abel": P_ABEL, "arcsine": P_ARCSINE, "takacs": P_TAKACS}

# published tables: x -> (estimate, std error)
PUBLISHED_TABLE1 = {5000: (1.08e-02, 1.09e-03), 10000: (2.59e-03, 2.64e-04), 15000: (6.47e-04, 6.56e-05),
                20000: (2.37e-04, 2.40e-05), 25000: (9.51e-05, 9.66e-06)}
PUBLISHED_TABLE2 = {5000: (1.01e-02, 9.09e-04), 10000: (2.46e-03, 2.43e-04), 15000: (7.18e-04, 6.88e-05),
                20000: (2.22e-04, 2.23e-05), 25000: (8.48e-05, 8.40e-06), 30000: (3.59e-05, 3.65e-06),
                35000: (1.29e-05, 1.25e-06), 40000: (4.42e-06, 4.41e-07), 45000: (2.18e-06, 2.16e-07),
                50000: (7.68e-07, 7.78e-08)}
PUBLISHED_TABLE3_MC = {5000: (1.02e-02, 1.00e-03), 10000: (2.11e-03, 2.14e-04), 15000: (7.64e-04, 7.73e-05),
                   20000: (2.49e-04, 2.51e-05), 25000: (7.13e-05, 7.24e-06)}
PUBLISHED_TABLE3_IS = {5000: (9.89e-03, 9.39e-04), 10000: (2.23e-03, 2.23e-04), 15000: (8.12e-04, 8.20e-05),
                   20000: (2.21e-04, 2.25e-05), 25000: (8.37e-05, 8.52e-06), 30000: (4.18e-05, 4.13e-06),
                   35000: (1.42e-05, 1.42e-06), 40000: (5.10e-06, 5.15e-07), 45000: (2.31e-06, 2.35e-07),
                   50000: (1.08e-06, 1.08e-07)}


def report(number, name, ok, detail):
    line = f"criterion {number:2d} {name}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES[number] = line
    print(line)
    assert ok, line


def case_study_model(counting, claim):
    mn, vn, my, vy = presets.case_study_moments()
    return fit_model(counting, claim, SampleMoments(mn, vn, 630), SampleMoments(my, vy, 44476)).model()


def compare_table(model, published, method, sizes):
    """Worst |ours - published| in units of the combined standard error."""
    worst, rows = 0.0, []
    for x, (est, se) in published.items():
        r = estimate(model, x, sizes[x], method, SEED)
        z = abs(r.estimate - est) / math.hypot(r.std_error, se)
        worst = max(worst, z)
        rows.append(f"{x}:{r.estimate:.2e}")
    return worst, rows


# -- 1 --------------------------------------------------------------------------------

def test_criterion_01_fitting():
    start = time.perf_counter()
    counts = SampleMoments(M_COUNT, COUNT_VAR, 630)
    disp_err = {f: abs(fit_counting_dispersion(f, counts) - p) for f, p in PUBLISHED_DISPERSION.items()}
    claim_err = {}
    consistency = 0.0
    for family, want in PUBLISHED_CLAIMS.items():
        c = claim_from_moments(family, CLAIM_MEAN, CLAIM_VAR)
        got = c.params()
        errs = [abs(got["theta"] / want[0] - 1), abs(got["p"] / want[1] - 1)]
        if want[2] is not None:
            errs.append(abs(got["alpha"] / want[2] - 1))
            consistency = abs((2 - c.alpha) / (1 - c.alpha) / got["p"] - 1)
        claim_err[family] = max(errs)
    runtime = time.perf_counter() - start
    ok = max(disp_err.values()) <= 1e-5 and max(claim_err.values()) <= 1e-4 and consistency <= 1e-4 and runtime < 1
    detail = (
        "p abs err " + ", ".join(f"{f} {e:.1e}" for f, e in disp_err.items())
        + "; claim rel err " + ", ".join(f"{f} {e:.1e}" for f, e in claim_err.items())
        + f"; stable (2-a)/(1-a)=p rel err {consistency:.1e}; {runtime:.2f}s"
    )
    report(1, "fitting reproduction at the printed summary statistics", ok, detail)


# -- 2 --------------------------------------------------------------------------------

def _chi2_bins(d, draws):
    # single values while the expected count stays large, then geometric groups
    edges = list(range(0, 201)) + [int(v) for v in np.unique(np.geomspace(201, 10 ** 5, 40).astype(int))][1:]
    edges = sorted(set(edges))
    support = np.arange(edges[-1])
    pmf = d.pmf(support)
    probs = np.add.reduceat(pmf, edges[:-1])
    probs = np.append(probs, max(0.0, 1.0 - pmf.sum()))
    counts = np.bincount(np.searchsorted(edges, draws, side="right") - 1, minlength=len(edges))
    expected = probs * draws.size
    keep = expected >= 5
    # fold the sparse bins into one
    obs = np.append(counts[keep], counts[~keep].sum())
    exp = np.append(expected[keep], expected[~keep].sum())
    if exp[-1] < 5:
        obs[-2] += obs[-1]
        exp[-2] += exp[-1]
        obs, exp = obs[:-1], exp[:-1]
    return stats.chisquare(obs, exp, sum_check=False).pvalue


@pytest.mark.slow
def test_criterion_02_sampler_exactness():
    parts, ok = [], True
    for family, p in PUBLISHED_DISPERSION.items():
        start = time.perf_counter()
        d = make_counting(family, p, M_COUNT)
        failures, total, sq, count = 0, 0.0, 0.0, 0
        for seed in range(20):
            draws = d.sample(np.random.default_rng(seed), 10 ** 6)
            failures += _chi2_bins(d, draws) < 1e-3
            total += draws.sum()
            sq += np.square(draws, dtype=float).sum()
            count += draws.size
        mean = total / count
        var = (sq - count * mean * mean) / (count - 1)
        z = abs(mean - d.m) / math.sqrt(d.variance / count)
        rel_var = abs(var / d.variance - 1)
        runtime = time.perf_counter() - start
        good = failures <= 2 and z <= 3 and rel_var <= 0.05 and runtime < 120
        ok &= good
        parts.append(f"{family}: {failures}/20 chi2 rejections, mean z {z:.2f}, var err {rel_var:.1%}, {runtime:.0f}s")
    report(2, "sampler exactness", ok, "; ".join(parts))


# -- 3 --------------------------------------------------------------------------------

def test_criterion_03_dominance():
    start = time.perf_counter()
    checks = {}
    n = np.arange(1, 10 ** 5 + 1)
    for cls, p in ((AbelDistribution, P_ABEL), (TakacsDistribution, P_TAKACS)):
        d = cls(p, M_COUNT)
        checks[f"{d.family} f/Cb"] = np.max(d.pmf(n) / (1 - d.f0) / (d.C * proposal_pmf(n)))
    d = ArcsineDistribution(P_ARCSINE, M_COUNT)
    n2 = np.arange(2, 10 ** 5 + 1)
    checks["arcsine f/Cb2"] = np.max(d.pmf(n2) / (1 - d.f0 - d.f1) / (d.C * double_zipf_pmf(n2)))
    k = n.astype(float)
    for refined in (True, False):
        b = arcsine_bound_constants(P_ARCSINE, refined)
        lim = math.log(b.K) - 1.5 * np.log(k)
        tag = "refined" if refined else "plain"
        checks[f"nu(2n) {tag}"] = np.exp(np.max(arcsine_log_kernel(P_ARCSINE, 2 * k) - lim))
        checks[f"nu(2n+1) {tag}"] = np.exp(np.max(arcsine_log_kernel(P_ARCSINE, 2 * k + 1) - lim))
    t = TakacsDistribution(P_TAKACS, M_COUNT)
    checks["takacs nu0"] = np.exp(np.max(t.log_kernel(k) + t.theta * k - math.log(t.bound.K) + 1.5 * np.log(k)))
    runtime = time.perf_counter() - start
    ok = all(v <= 1 + 1e-12 for v in checks.values()) and runtime < 60
    detail = ", ".join(f"{name} max ratio {v:.3f}" for name, v in checks.items()) + f"; {runtime:.1f}s"
    report(3, "dominance certification, n <= 1e5", ok, detail)


# -- 4 --------------------------------------------------------------------------------

def test_criterion_04_acceptance_rates():
    rates = {}
    for family, p in PUBLISHED_DISPERSION.items():
        d = make_counting(family, p, M_COUNT)
        _, (acc, prop) = d.sample(np.random.default_rng(4), 10 ** 6, return_stats=True)
        rates[family] = acc / prop
    ok = abs(rates["abel"] - 0.25) <= 0.05 and abs(rates["takacs"] - 0.23) <= 0.05 and rates["arcsine"] >= 0.15
    detail = ", ".join(f"{f} {r:.3f}" for f, r in rates.items()) + " (targets 0.25, >= 0.15, 0.23)"
    report(4, "acceptance rates", ok, detail)


# -- 5, 6, 7 ----------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_05_table1():
    start = time.perf_counter()
    worst, rows = compare_table(case_study_model("abel", "ig"), PUBLISHED_TABLE1, "mc", presets.TABLE1["mc"])
    runtime = time.perf_counter() - start
    report(5, "Table 1 (Abel+IG, MC)", worst <= 3 and runtime < 300,
           f"worst {worst:.2f} combined se; {' '.join(rows)}; {runtime:.0f}s")


def test_criterion_06_table2():
    start = time.perf_counter()
    worst, rows = compare_table(case_study_model("abel", "ig"), PUBLISHED_TABLE2, "is", presets.TABLE2["is"])
    runtime = time.perf_counter() - start
    report(6, "Table 2 (Abel+IG, IS)", worst <= 3 and runtime < 120,
           f"worst {worst:.2f} combined se; {' '.join(rows)}; {runtime:.0f}s")


@pytest.mark.slow
def test_criterion_07_table3():
    start = time.perf_counter()
    model = case_study_model("arcsine", "stable")
    worst_mc, rows_mc = compare_table(model, PUBLISHED_TABLE3_MC, "mc", presets.TABLE3["mc"])
    worst_is, rows_is = compare_table(model, PUBLISHED_TABLE3_IS, "is", presets.TABLE3["is"])
    runtime = time.perf_counter() - start
    report(7, "Table 3 (Arcsine+stable, MC and IS)", max(worst_mc, worst_is) <= 3,
           f"worst MC {worst_mc:.2f}, IS {worst_is:.2f} combined se; IS {' '.join(rows_is)}; {runtime:.0f}s")


# -- 8 --------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_08_mc_vs_is():
    mc_sizes = presets.TABLE1["mc"]
    is_sizes = presets.TABLE2["is"]
    worst, where = 0.0, None
    for counting in ("abel", "arcsine", "takacs"):
        for claim in ("gamma", "ig", "stable"):
            model = case_study_model(counting, claim)
            for x in (5000, 10000, 15000, 20000, 25000):
                mc = estimate(model, x, mc_sizes[x], "mc", SEED)
                is_ = estimate(model, x, is_sizes[x], "is", SEED)
                z = abs(mc.estimate - is_.estimate) / math.hypot(mc.std_error, is_.std_error)
                if z > worst:
                    worst, where = z, f"{counting}+{claim} x={x}"
    report(8, "MC vs IS over 9 models x 5 levels", worst <= 3, f"worst {worst:.2f} combined se at {where}")


# -- 9 --------------------------------------------------------------------------------

def _r2(x, y):
    return stats.linregress(x, y).rvalue ** 2


@pytest.mark.slow
def test_criterion_09_complexity():
    model = case_study_model("abel", "ig")
    is_levels = list(range(5000, 50001, 5000))
    mc_levels = list(range(5000, 25001, 5000))
    m_is = [adaptive_sample_size(model, x, 0.1, "is", SEED).M for x in is_levels]
    m_mc = [adaptive_sample_size(model, x, 0.1, "mc", SEED).M for x in mc_levels]
    r2_is = _r2(np.log(is_levels), np.log(m_is))
    r2_mc = _r2(mc_levels, np.log(m_mc))
    ratio = m_mc[-1] / m_is[is_levels.index(25000)]
    ok = r2_is > 0.9 and r2_mc > 0.9 and ratio > 10
    detail = (f"IS M {m_is} log-log R2 {r2_is:.3f}; MC M {m_mc} semilog R2 {r2_mc:.3f}; "
              f"MC/IS at 25000 {ratio:.0f}")
    report(9, "sample-size growth", ok, detail)


# -- 10 --------------------------------------------------------------------------------

@requires_data
@pytest.mark.slow
def test_criterion_10_gof_pattern():
    from nefrisk.cli import gof_grid
    from nefrisk.data import NAMED_FILTERS, load_dataset, summarize
    from nefrisk.fitting import recover_claim_moments

    records = NAMED_FILTERS["larger_cities"].apply(load_dataset(dataset_path()))
    s = summarize(records)
    claim_m = recover_claim_moments(s.count_moments, s.aggregate_moments, s.total_claims, s.total_payment)
    poisson_worst, cubic_passes = 0.0, {}
    for seed in range(20):
        _, grid = gof_grid(records, s.count_moments, claim_m, presets.GOF_SIMULATIONS, presets.GOF_BINS, seed)
        for c, y, g, _ in grid:
            if c == "poisson":
                poisson_worst = max(poisson_worst, g.p_value)
            else:
                cubic_passes[(c, y)] = cubic_passes.get((c, y), 0) + (g.p_value > 0.01)
    ok = poisson_worst <= 1e-6 and min(cubic_passes.values()) >= 18
    detail = f"largest Poisson p {poisson_worst:.1e}; " + ", ".join(
        f"{c}+{y} {k}/20" for (c, y), k in cubic_passes.items())
    report(10, "goodness-of-fit pattern", ok, detail)


def test_criterion_10_recorded_when_data_missing():
    if dataset_path():
        pytest.skip("dataset present; the criterion runs above")
    ACCEPTANCE_LINES[10] = "criterion 10 goodness-of-fit pattern: SKIPPED (needs the motor-insurance table; set NEFRISK_DATA)"
    pytest.skip("motor-insurance table not available")


# -- 11 --------------------------------------------------------------------------------

def test_criterion_11_figure1():
    n = np.arange(1000, 1201)
    abel = AbelDistribution(P_ABEL, M_COUNT).pmf(n)
    arcsine = ArcsineDistribution(P_ARCSINE, M_COUNT).pmf(n)
    takacs = TakacsDistribution(P_TAKACS, M_COUNT).pmf(n)
    poisson = PoissonDistribution(M_COUNT).log_pmf(n)
    ratio = np.maximum(abel / takacs, takacs / abel).max()
    ok = bool(np.all(arcsine < abel)) and ratio < 2 and poisson.max() < -300
    np.testing.assert_allclose(poisson, poisson_log_pmf(n, M_COUNT))
    detail = (f"max arcsine/abel {np.max(arcsine / abel):.3f}, max abel-takacs ratio {ratio:.3f}, "
              f"max Poisson log-pmf {poisson.max():.0f}")
    report(11, "Figure 1 tail ordering on [1000, 1200]", ok, detail)
