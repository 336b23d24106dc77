"""scikit-learn compatible wrappers.

``SparseIndexSelector`` is a feature selector over the columns of a return
matrix, ``SimplexTracker`` a long-only regressor whose coefficients sum to
one.  Chained in a ``Pipeline`` they fit a sparse tracking portfolio::

    pipe = make_pipeline(SparseIndexSelector(n_select=30), SimplexTracker())
    pipe.fit(asset_returns, index_returns)
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .market_data import ReturnPanel, correlation_to_distance, estimate_correlation
from .multi_stage import run_stages, union_and_truncate
from .selection import plan_from_blocks
from .solver import SaConfig
from .weighting import fit_simplex_weights


class SparseIndexSelector(SelectorMixin, BaseEstimator):
    """Select index constituents from a matrix of periodic log returns.

    Parameters
    ----------
    n_select : int
        Assets picked per stage (ignored when ``stages`` is given).
    n_forced : int
        Number of largest-cap assets always selected.
    max_rank : int or None
        Only the ``max_rank`` largest assets may be selected (default: all).
    n_candidates : int or None
        Size of the distance universe (default: all columns).
    dissimilarity, centrality : float or str
        Objective weights; ``"c/M"`` and ``"c/H"`` are resolved per stage.
    stages : list of dict or None
        ``[{"m": 20, "alpha": "1/M", "beta": "1/H"}, ...]`` for multi-stage
        selection.  ``m_star`` caps the union (default: largest stage size).
    lookback : int or None
        Most recent rows used for the correlation estimate (default: all).
    shrinkage, weighting
        Passed to :func:`estimate_correlation`.
    random_state, restarts, sweeps, cooling_ratio
        Annealing settings.

    Attributes
    ----------
    support_ : ndarray of bool
        Selected columns in input order.
    distance_ : DistanceMatrix
        Distances in descending market-cap order.
    selected_set_ : SelectedSet
        Final selection as MC-rank indices with stage provenance.
    """

    def __init__(self, n_select=30, n_forced=0, max_rank=None, n_candidates=None,
                 dissimilarity="1/M", centrality="1/H", stages=None, m_star=None,
                 lookback=None, shrinkage=0.1, weighting="linear", random_state=0,
                 restarts=8, sweeps=300, cooling_ratio=0.97):
        self.n_select = n_select
        self.n_forced = n_forced
        self.max_rank = max_rank
        self.n_candidates = n_candidates
        self.dissimilarity = dissimilarity
        self.centrality = centrality
        self.stages = stages
        self.m_star = m_star
        self.lookback = lookback
        self.shrinkage = shrinkage
        self.weighting = weighting
        self.random_state = random_state
        self.restarts = restarts
        self.sweeps = sweeps
        self.cooling_ratio = cooling_ratio

    def fit(self, X, y=None, market_caps=None):
        """Estimate distances and solve the selection.

        Columns of ``X`` are taken to be in descending market-cap order unless
        ``market_caps`` is given.
        """
        X = validate_data(self, X, dtype=np.float64)
        n_rows, n_cols = X.shape
        ids = [str(j) for j in range(n_cols)]
        if market_caps is None:
            ranking = ids
        else:
            caps = np.asarray(market_caps, dtype=float)
            if caps.shape != (n_cols,):
                raise ValueError("market_caps must have one entry per column")
            ranking = [ids[j] for j in sorted(range(n_cols), key=lambda j: (-caps[j], j))]

        panel = ReturnPanel(range(n_rows), ids, X, np.zeros(n_rows), "weekly")
        lookback = self.lookback or n_rows
        self.correlation_ = estimate_correlation(panel, lookback, self.weighting, self.shrinkage)
        self.distance_ = correlation_to_distance(self.correlation_, ranking)

        K = self.n_candidates or n_cols
        H = self.max_rank or K
        stages = self.stages or [{"m": self.n_select, "alpha": self.dissimilarity,
                                  "beta": self.centrality}]
        m_star = self.m_star or max(int(s["m"]) for s in stages)
        self.plan_ = plan_from_blocks(stages, self.n_forced, H, K, m_star)
        cfg = SaConfig(rng_seed=int(self.random_state or 0), restarts=self.restarts,
                       sweeps=self.sweeps, cooling_ratio=self.cooling_ratio)
        self.stage_sets_ = run_stages(self.plan_, self.distance_, cfg)
        self.selected_set_ = union_and_truncate(self.stage_sets_, m_star)

        support = np.zeros(n_cols, dtype=bool)
        for i in self.selected_set_.indices:
            support[int(self.distance_.mc_rank_order[i])] = True
        self.support_ = support
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "support_")
        return self.support_


class SimplexTracker(RegressorMixin, BaseEstimator):
    """Least-squares regression with nonnegative coefficients summing to one."""

    def __init__(self, tol=1e-10, max_iter=10_000):
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=np.float64, y_numeric=True)
        self.coef_, self.n_iter_ = fit_simplex_weights(X, y, self.tol, self.max_iter)
        self.intercept_ = 0.0
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return X @ self.coef_

    def tracking_error(self, X, y):
        """Root mean squared difference between fitted and target returns."""
        return float(np.sqrt(np.mean((self.predict(X) - np.asarray(y, dtype=float)) ** 2)))
