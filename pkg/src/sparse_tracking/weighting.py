"""Long-only, fully invested tracking weights by projected gradient descent."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from ._io import fmt, write_csv
from .exceptions import ParameterError, ValidationError

logger = logging.getLogger(__name__)


def project_simplex(v):
    """Euclidean projection of ``v`` onto ``{w : w >= 0, sum(w) = 1}``."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    w = np.maximum(v - theta, 0.0)
    # renormalise the rounding residue so the budget holds to machine precision
    return w / w.sum()


def tracking_objective(weights, asset_returns, index_returns):
    """Sum of squared differences between portfolio and index returns."""
    r = np.asarray(asset_returns, dtype=float) @ np.asarray(weights, dtype=float)
    return float(np.sum((r - np.asarray(index_returns, dtype=float)) ** 2))


def fit_simplex_weights(G, y, tol=1e-10, max_iter=10_000):
    """Minimize ``||G w - y||^2`` over the unit simplex.

    Starts from equal weights, uses step ``1 / L`` with ``L = 2 * lambda_max(G'G)``
    and stops when the largest weight change drops below ``tol``.
    Returns ``(weights, n_iter)``.
    """
    G = np.asarray(G, dtype=float)
    y = np.asarray(y, dtype=float)
    n = G.shape[1]
    w = np.full(n, 1.0 / n)
    if n == 1:
        return np.ones(1), 0
    Q = G.T @ G
    c = G.T @ y
    lipschitz = 2.0 * np.linalg.eigvalsh(Q)[-1]
    if lipschitz <= 0:
        return w, 0
    step = 1.0 / lipschitz
    for it in range(1, max_iter + 1):
        w_new = project_simplex(w - step * 2.0 * (Q @ w - c))
        change = np.max(np.abs(w_new - w))
        w = w_new
        if change < tol:
            return w, it
    return w, max_iter


@dataclass(frozen=True)
class Portfolio:
    holdings: dict
    as_of: object = None

    def __post_init__(self):
        w = np.array(list(self.holdings.values()), dtype=float)
        if np.any(w < 0):
            raise ValidationError("portfolio weights must be nonnegative")
        if w.size and abs(w.sum() - 1.0) > 1e-9:
            raise ValidationError(f"portfolio weights sum to {w.sum()}, not 1")

    @property
    def assets(self):
        return list(self.holdings)

    @property
    def weights(self):
        return np.array(list(self.holdings.values()), dtype=float)

    def to_csv(self, path):
        rows = [["asset", "weight", "as_of"]]
        rows += [[a, fmt(w), str(self.as_of)] for a, w in self.holdings.items()]
        write_csv(path, rows)


def optimize_weights(selected, returns, index_returns=None, as_of=None):
    """Tracking-error-minimizing weights for the ``selected`` asset ids.

    ``returns`` is a :class:`ReturnPanel` window (its ``index_returns`` are
    used unless given) or a ``(T, n)`` array whose columns follow ``selected``.
    """
    selected = list(selected)
    if not selected:
        raise ParameterError("cannot weight an empty selection")
    if hasattr(returns, "returns"):
        G = returns.select(selected).returns
        if index_returns is None:
            index_returns = returns.index_returns
    else:
        G = np.asarray(returns, dtype=float)
    y = np.asarray(index_returns, dtype=float)
    if G.ndim != 2 or G.shape[1] != len(selected) or G.shape[0] != y.shape[0]:
        raise ValidationError("return window and index series do not align")
    if not (np.all(np.isfinite(G)) and np.all(np.isfinite(y))):
        raise ValidationError("returns contain non-finite values")
    if G.shape[0] < len(selected):
        warnings.warn(
            f"window of {G.shape[0]} periods is shorter than the {len(selected)} selected assets",
            stacklevel=2,
        )
    w, n_iter = fit_simplex_weights(G, y)
    logger.debug("simplex weights converged in %d iterations", n_iter)
    return Portfolio(dict(zip(selected, (float(v) for v in w))), as_of)
