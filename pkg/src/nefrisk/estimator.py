"""Scikit-learn style front end.

``CompoundRiskEstimator`` is fitted on per-cell ``(claims, payment)`` rows and
predicts tail probabilities ``P(S_N > x)`` for an array of levels ``x``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .engine import DEFAULT_SEED, adaptive_sample_size, estimate, sample_aggregate
from .fitting import SampleMoments, fit_model, recover_claim_moments

__all__ = ["CompoundRiskEstimator"]


class CompoundRiskEstimator(BaseEstimator):
    """Two-moment compound model with a Monte Carlo tail estimator.

    Parameters
    ----------
    counting_family : {"abel", "arcsine", "takacs", "poisson"}
    claim_family : {"gamma", "ig", "stable"}
    method : {"is", "mc"}
    n_samples : int
        Replications per level; ignored when ``target_rel_se`` is set.
    target_rel_se : float or None
        Grow the sample size until the relative standard error reaches this.
    budget : int
        Replication cap for the adaptive mode.
    seed, workers : see :func:`nefrisk.engine.estimate`.
    """

    def __init__(self, counting_family="abel", claim_family="ig", method="is", n_samples=10_000,
                 target_rel_se=None, budget=2 ** 24, seed=DEFAULT_SEED, workers=1):
        self.counting_family = counting_family
        self.claim_family = claim_family
        self.method = method
        self.n_samples = n_samples
        self.target_rel_se = target_rel_se
        self.budget = budget
        self.seed = seed
        self.workers = workers

    def fit(self, X, y=None):
        """``X`` has two columns: claim count and total payment per cell."""
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        if X.shape[1] != 2:
            raise ValueError(f"X must have 2 columns (claims, payment), got {X.shape[1]}")
        if np.any(X < 0):
            raise ValueError("claim counts and payments must be nonnegative")
        counts, payments = X[:, 0], X[:, 1]
        self.count_moments_ = SampleMoments.from_sample(counts)
        aggregate = SampleMoments.from_sample(payments)
        self.claim_moments_ = recover_claim_moments(
            self.count_moments_, aggregate, counts.sum(), payments.sum()
        )
        self.fitted_model_ = fit_model(
            self.counting_family, self.claim_family, self.count_moments_, self.claim_moments_,
            provenance={"cells": int(X.shape[0])},
        )
        self.model_ = self.fitted_model_.model()
        self.n_features_in_ = 2
        return self

    def predict(self, X):
        """Estimated ``P(S_N > x)`` for each level in ``X`` (1-D or one column)."""
        check_is_fitted(self, "model_")
        levels = check_array(np.asarray(X, dtype=float).reshape(-1, 1), dtype=np.float64).ravel()
        self.results_ = [self._estimate_one(x) for x in levels]
        return np.array([r.estimate for r in self.results_])

    def predict_std(self, X):
        """Standard errors matching :meth:`predict`."""
        self.predict(X)
        return np.array([r.std_error for r in self.results_])

    def _estimate_one(self, x):
        if self.target_rel_se is not None:
            return adaptive_sample_size(self.model_, x, self.target_rel_se, self.method, self.seed,
                                        self.workers, budget=self.budget)
        return estimate(self.model_, x, self.n_samples, self.method, self.seed, self.workers)

    def sample(self, n_samples=1, random_state=None):
        """Draw ``(N, S_N)`` pairs from the fitted model."""
        check_is_fitted(self, "model_")
        rng = np.random.default_rng(random_state)
        return sample_aggregate(self.model_, rng, n_samples)
