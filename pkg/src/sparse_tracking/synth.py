"""Seeded factor-model market with a cap-weighted index."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._io import fmt, write_csv
from .exceptions import ValidationError
from .market_data import PricePanel


@dataclass(frozen=True)
class SyntheticMarket:
    panel: PricePanel
    loadings: np.ndarray
    factor_returns: np.ndarray
    shares: np.ndarray

    def write(self, directory):
        """Write ``prices.csv`` and ``market_caps.csv``; returns their paths."""
        out = Path(directory)
        p = self.panel
        rows = [["date", "index", *p.assets]]
        for d, level, row in zip(p.dates, p.index_level, p.prices):
            rows.append([d.isoformat(), fmt(level), *(fmt(v) for v in row)])
        prices_path, caps_path = out / "prices.csv", out / "market_caps.csv"
        write_csv(prices_path, rows)
        rows = [["asset", "market_cap", "as_of"]]
        rows += [[a, fmt(c), p.mc_date.isoformat()] for a, c in zip(p.assets, p.market_caps)]
        write_csv(caps_path, rows)
        return prices_path, caps_path


def business_days(start, n):
    start = np.busday_offset(np.datetime64(start, "D"), 0, roll="forward")
    days = np.busday_offset(start, np.arange(n))
    return [dt.date.fromisoformat(str(d)) for d in days]


def generate_market(n_assets=100, n_days=1500, n_factors=3, seed=0, noise=1.0,
                    mc_exponent=1.0, start="2015-01-01"):
    """Daily log returns ``r = B (f + mu) + noise * eps`` chained into prices.

    Market caps on the first day follow ``rank ** -mc_exponent`` with ranks
    shuffled across assets; the index is the cap-weighted price aggregate with
    constant share counts, so its daily return is the cap-weighted average of
    asset simple returns.
    """
    if n_assets < 1 or n_days < 2 or n_factors < 1:
        raise ValidationError("need at least 1 asset, 2 days and 1 factor")
    if noise < 0:
        raise ValidationError("noise scale must be nonnegative")
    rng = np.random.Generator(np.random.PCG64(seed))

    loadings = np.empty((n_assets, n_factors))
    loadings[:, 0] = rng.uniform(0.5, 1.5, n_assets)
    loadings[:, 1:] = rng.normal(0.0, 0.6, (n_assets, n_factors - 1))
    factor_vol = np.r_[0.010, np.full(n_factors - 1, 0.006)]
    factor_drift = np.r_[0.0003, np.zeros(n_factors - 1)]
    f = rng.normal(0.0, 1.0, (n_days - 1, n_factors)) * factor_vol
    idio_vol = rng.uniform(0.005, 0.02, n_assets)
    eps = rng.normal(0.0, 1.0, (n_days - 1, n_assets)) * idio_vol

    log_ret = (f + factor_drift) @ loadings.T + noise * eps
    p0 = rng.uniform(20.0, 200.0, n_assets)
    log_p = np.vstack([np.zeros(n_assets), np.cumsum(log_ret, axis=0)])
    prices = p0 * np.exp(log_p)

    ranks = rng.permutation(n_assets) + 1
    caps = 1e12 * ranks.astype(float) ** (-mc_exponent)
    shares = caps / p0
    agg = prices @ shares
    index_level = 1000.0 * agg / agg[0]

    width = max(3, len(str(n_assets)))
    assets = [f"A{i:0{width}d}" for i in range(1, n_assets + 1)]
    dates = business_days(start, n_days)
    panel = PricePanel(dates, assets, caps, prices, index_level, mc_date=dates[0])
    return SyntheticMarket(panel, loadings, f, shares)
