"""Chi-square comparison of observed aggregates with model simulations.

Bins are equal-probability quantiles of the pooled sample.  The simulated
sample is the reference: its bin frequencies, rescaled to the data size, are
the expected counts.  Adjacent bins are merged until each expects at least
five observations, and the statistic has ``bins - 1`` degrees of freedom.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

__all__ = ["GofResult", "chi_square_two_sample", "histogram_pair", "MIN_EXPECTED"]

MIN_EXPECTED = 5.0
MIN_SAMPLE = 50


@dataclass(frozen=True)
class GofResult:
    statistic: float
    dof: int
    p_value: float
    bins: tuple  # (upper edge, observed, expected) per bin; the last edge is inf

    def to_dict(self):
        return {
            "statistic": self.statistic,
            "dof": self.dof,
            "p_value": self.p_value,
            "bins": [{"upper": e, "observed": o, "expected": x} for e, o, x in self.bins],
        }


def _merge(edges, observed, expected):
    edges, observed, expected = list(edges), list(observed), list(expected)
    i = 0
    # sweep left to right, folding each short bin into its right neighbour
    while i < len(expected) - 1:
        if expected[i] < MIN_EXPECTED:
            observed[i + 1] += observed[i]
            expected[i + 1] += expected[i]
            del edges[i], observed[i], expected[i]
        else:
            i += 1
    # a short last bin goes into its left neighbour
    while len(expected) > 1 and expected[-1] < MIN_EXPECTED:
        observed[-2] += observed[-1]
        expected[-2] += expected[-1]
        edges[-2] = edges[-1]
        del edges[-1], observed[-1], expected[-1]
    return edges, observed, expected


def chi_square_two_sample(data, simulated, target_bins=20):
    """Chi-square homogeneity test of ``data`` against the ``simulated`` reference."""
    data = np.asarray(data, dtype=float).ravel()
    simulated = np.asarray(simulated, dtype=float).ravel()
    if data.size < MIN_SAMPLE or simulated.size < MIN_SAMPLE:
        raise ValueError(f"both samples need at least {MIN_SAMPLE} values")
    if target_bins < 3:
        raise ValueError("target_bins must be at least 3")
    if not (np.all(np.isfinite(data)) and np.all(np.isfinite(simulated))):
        raise ValueError("samples must be finite")
    pooled = np.concatenate([data, simulated])
    if pooled.min() == pooled.max():
        raise ValueError("degenerate samples: every value is equal, no bins can be formed")
    inner = np.unique(np.quantile(pooled, np.arange(1, target_bins) / target_bins))
    inner = inner[inner < pooled.max()]
    # bin k holds values in (inner[k-1], inner[k]]
    obs = np.bincount(np.searchsorted(inner, data, side="left"), minlength=inner.size + 1)
    sim = np.bincount(np.searchsorted(inner, simulated, side="left"), minlength=inner.size + 1)
    expected = sim * data.size / simulated.size
    edges = list(inner) + [np.inf]
    edges, observed, expected = _merge(edges, obs.astype(float), expected)
    if len(expected) < 2 or expected[0] < MIN_EXPECTED:
        raise ValueError("too few observations to form two bins with 5 expected counts each")
    observed = np.asarray(observed)
    expected = np.asarray(expected)
    statistic = float(((observed - expected) ** 2 / expected).sum())
    dof = len(expected) - 1
    p_value = float(stats.chi2.sf(statistic, dof))
    bins = tuple((float(e), int(o), float(x)) for e, o, x in zip(edges, observed, expected))
    return GofResult(statistic, dof, p_value, bins)


def histogram_pair(data, simulated, bins=30):
    """Common-edge density histograms of both samples (the numbers behind a plot)."""
    data = np.asarray(data, dtype=float).ravel()
    simulated = np.asarray(simulated, dtype=float).ravel()
    edges = np.histogram_bin_edges(np.concatenate([data, simulated]), bins=bins)
    d, _ = np.histogram(data, edges, density=True)
    s, _ = np.histogram(simulated, edges, density=True)
    return edges, d, s
