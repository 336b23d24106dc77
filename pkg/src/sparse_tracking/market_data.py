"""Price panels, log returns, weighted shrunk correlations and correlation distances."""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._io import write_csv
from .exceptions import (
    DegenerateAssetError,
    InsufficientDataError,
    ParseError,
    ValidationError,
)

logger = logging.getLogger(__name__)

FREQUENCIES = ("daily", "weekly")
WEIGHTINGS = ("linear", "uniform")
PSD_TOL = 1e-8
RHO_TOL = 1e-12


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PricePanel:
    """Close prices of ``L`` assets and the index level on ``T`` business days.

    ``market_caps`` are stated as of ``mc_date``; capitalizations at other
    dates are obtained by scaling with the price ratio (constant share count),
    see :meth:`market_caps_at`.
    """

    dates: tuple
    assets: tuple
    market_caps: np.ndarray
    prices: np.ndarray
    index_level: np.ndarray
    mc_date: dt.date | None = None
    load_log: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "assets", tuple(str(a) for a in self.assets))
        object.__setattr__(self, "market_caps", _frozen(self.market_caps))
        object.__setattr__(self, "prices", _frozen(self.prices))
        object.__setattr__(self, "index_level", _frozen(self.index_level))
        object.__setattr__(self, "load_log", tuple(self.load_log))
        if self.mc_date is None and self.dates:
            object.__setattr__(self, "mc_date", self.dates[-1])
        self._validate()

    def _validate(self):
        T, L = len(self.dates), len(self.assets)
        if T < 2:
            raise InsufficientDataError(f"price panel needs at least 2 rows, got {T}")
        if self.prices.shape != (T, L):
            raise ValidationError(f"prices shape {self.prices.shape} != ({T}, {L})")
        if self.index_level.shape != (T,):
            raise ValidationError("index level length does not match dates")
        if self.market_caps.shape != (L,):
            raise ValidationError("one market cap per asset required")
        if len(set(self.assets)) != L:
            raise ValidationError("asset identifiers must be distinct")
        for a, b in zip(self.dates, self.dates[1:]):
            if not b > a:
                raise ValidationError(f"dates not strictly increasing at {b}")
        bad = np.argwhere(~(self.prices > 0))
        if bad.size:
            t, j = bad[0]
            raise ValidationError(
                f"non-positive price for asset {self.assets[j]!r} on {self.dates[t]}"
            )
        bad = np.flatnonzero(~(self.index_level > 0))
        if bad.size:
            raise ValidationError(f"non-positive index level on {self.dates[bad[0]]}")
        bad = np.flatnonzero(~(self.market_caps > 0))
        if bad.size:
            raise ValidationError(
                f"non-positive market cap for asset {self.assets[bad[0]]!r}"
            )

    @property
    def n_dates(self):
        return len(self.dates)

    @property
    def n_assets(self):
        return len(self.assets)

    def date_position(self, date):
        """Index of the last panel date not after ``date``."""
        pos = np.searchsorted(np.array(self.dates, dtype="datetime64[D]"),
                              np.datetime64(date, "D"), side="right") - 1
        if pos < 0:
            raise InsufficientDataError(f"no panel data on or before {date}")
        return int(pos)

    def market_caps_at(self, t):
        """Market caps at row ``t`` assuming constant share counts since ``mc_date``."""
        ref = self.date_position(self.mc_date)
        return self.market_caps * self.prices[t] / self.prices[ref]

    def mc_ranking(self, t=None):
        """Asset ids sorted by descending market cap; equal caps fall back to id order."""
        caps = self.market_caps if t is None else self.market_caps_at(t)
        order = sorted(range(self.n_assets), key=lambda j: (-caps[j], self.assets[j]))
        return [self.assets[j] for j in order]

    def truncate(self, t):
        """Panel restricted to rows ``0..t`` inclusive."""
        return PricePanel(
            dates=self.dates[: t + 1],
            assets=self.assets,
            market_caps=self.market_caps,
            prices=self.prices[: t + 1],
            index_level=self.index_level[: t + 1],
            mc_date=self.mc_date,
        )


@dataclass(frozen=True)
class ReturnPanel:
    periods: tuple
    assets: tuple
    returns: np.ndarray
    index_returns: np.ndarray
    frequency: str = "daily"

    def __post_init__(self):
        object.__setattr__(self, "periods", tuple(self.periods))
        object.__setattr__(self, "assets", tuple(str(a) for a in self.assets))
        object.__setattr__(self, "returns", _frozen(self.returns))
        object.__setattr__(self, "index_returns", _frozen(self.index_returns))
        if self.frequency not in FREQUENCIES:
            raise ValidationError(f"unknown frequency {self.frequency!r}")
        n = len(self.periods)
        if self.returns.shape != (n, len(self.assets)) or self.index_returns.shape != (n,):
            raise ValidationError("return panel shapes are inconsistent")

    @property
    def n_periods(self):
        return len(self.periods)

    def tail(self, n):
        return ReturnPanel(self.periods[-n:], self.assets, self.returns[-n:],
                           self.index_returns[-n:], self.frequency)

    def select(self, assets):
        pos = {a: j for j, a in enumerate(self.assets)}
        cols = [pos[a] for a in assets]
        return ReturnPanel(self.periods, tuple(assets), self.returns[:, cols],
                           self.index_returns, self.frequency)


@dataclass(frozen=True)
class CorrelationMatrix:
    rho: np.ndarray
    assets: tuple
    estimator_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "rho", _frozen(self.rho))
        object.__setattr__(self, "assets", tuple(str(a) for a in self.assets))
        k = len(self.assets)
        if self.rho.shape != (k, k):
            raise ValidationError(f"rho shape {self.rho.shape} does not match {k} assets")


@dataclass(frozen=True)
class DistanceMatrix:
    """Correlation distances with rows and columns in descending-MC order.

    Row ``i`` (0-based) holds the asset of MC rank ``i + 1``;
    ``mc_rank_order[i]`` is its identifier.
    """

    d: np.ndarray
    mc_rank_order: tuple

    def __post_init__(self):
        object.__setattr__(self, "d", _frozen(self.d))
        object.__setattr__(self, "mc_rank_order", tuple(self.mc_rank_order))
        k = len(self.mc_rank_order)
        if self.d.shape != (k, k):
            raise ValidationError(f"distance shape {self.d.shape} does not match {k} assets")

    @property
    def size(self):
        return len(self.mc_rank_order)

    def top(self, k):
        if k > self.size:
            raise ValidationError(f"cannot take top {k} of {self.size} assets")
        return DistanceMatrix(self.d[:k, :k], self.mc_rank_order[:k])

    def to_csv(self, path):
        rows = [["asset", *self.mc_rank_order]]
        for a, row in zip(self.mc_rank_order, self.d):
            rows.append([a, *(repr(float(v)) for v in row)])
        write_csv(path, rows)

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        ids = rows[0][1:]
        d = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
        return cls(d, ids)


@dataclass(frozen=True)
class PanelSchema:
    """Column mapping for price-panel CSV files.

    When no sidecar MC file is given, the row whose date cell equals
    ``mc_row_label`` supplies the market caps.
    """

    date_column: str = "date"
    index_column: str = "index"
    mc_row_label: str = "market_cap"
    mc_asset_column: str = "asset"
    mc_value_column: str = "market_cap"
    mc_date_column: str = "as_of"


def _parse_date(text, line):
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise ParseError(f"invalid ISO-8601 date {text!r}", line) from None


def _parse_float(text, line, what):
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"invalid number {text!r} for {what}", line) from None


def load_market_caps(path, schema=None):
    """Read a sidecar MC table; returns ``({asset: cap}, as_of or None)``."""
    schema = schema or PanelSchema()
    caps, as_of = {}, None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError("empty market-cap file", 1)
        for col in (schema.mc_asset_column, schema.mc_value_column):
            if col not in reader.fieldnames:
                raise ParseError(f"missing column {col!r}", 1)
        for row in reader:
            line = reader.line_num
            asset = row[schema.mc_asset_column].strip()
            caps[asset] = _parse_float(row[schema.mc_value_column], line, asset)
            date_text = row.get(schema.mc_date_column)
            if date_text:
                as_of = _parse_date(date_text, line)
    return caps, as_of


def load_price_panel(path, schema=None, mc_path=None):
    """Parse a price CSV into a validated :class:`PricePanel`.

    Rows with any blank price are dropped and recorded in ``load_log``.
    """
    schema = schema or PanelSchema()
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", 1) from None
        header = [h.strip() for h in header]
        for col in (schema.date_column, schema.index_column):
            if col not in header:
                raise ParseError(f"missing column {col!r}", 1)
        i_date = header.index(schema.date_column)
        i_index = header.index(schema.index_column)
        asset_cols = [j for j in range(len(header)) if j not in (i_date, i_index)]
        assets = [header[j] for j in asset_cols]
        if not assets:
            raise ParseError("no asset price columns", 1)

        dates, prices, levels, log = [], [], [], []
        mc_row = None
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line)
            if row[i_date].strip() == schema.mc_row_label:
                mc_row = [_parse_float(row[j], line, header[j]) for j in asset_cols]
                continue
            date = _parse_date(row[i_date], line)
            cells = [row[j].strip() for j in asset_cols]
            missing = [a for a, c in zip(assets, cells) if not c]
            if missing or not row[i_index].strip():
                what = ", ".join(missing) if missing else schema.index_column
                log.append(f"dropped line {line} ({date}): missing {what}")
                continue
            dates.append(date)
            prices.append([_parse_float(c, line, a) for a, c in zip(assets, cells)])
            levels.append(_parse_float(row[i_index], line, schema.index_column))

    mc_date = None
    if mc_path is not None:
        caps, mc_date = load_market_caps(mc_path, schema)
        unknown = [a for a in assets if a not in caps]
        if unknown:
            raise ValidationError(f"no market cap for assets {unknown}")
        mc = [caps[a] for a in assets]
    elif mc_row is not None:
        mc = mc_row
    else:
        raise ValidationError(
            f"no market caps: give a sidecar file or a {schema.mc_row_label!r} row"
        )
    for entry in log:
        logger.info(entry)
    return PricePanel(
        dates=dates,
        assets=assets,
        market_caps=mc,
        prices=np.array(prices, dtype=float).reshape(len(dates), len(assets)),
        index_level=levels,
        mc_date=mc_date,
        load_log=log,
    )


def _weekly_rows(dates):
    """Row positions of the last business day of each ISO week."""
    rows = []
    for t, d in enumerate(dates):
        week = d.isocalendar()[:2]
        if rows and dates[rows[-1]].isocalendar()[:2] == week:
            rows[-1] = t
        else:
            rows.append(t)
    return rows


def compute_log_returns(panel, frequency="daily"):
    if frequency not in FREQUENCIES:
        raise ValidationError(f"unknown frequency {frequency!r}")
    if frequency == "weekly":
        rows = _weekly_rows(panel.dates)
    else:
        rows = list(range(panel.n_dates))
    if len(rows) < 2:
        raise InsufficientDataError(
            f"{frequency} returns need at least 2 sampled rows, got {len(rows)}"
        )
    logp = np.log(panel.prices[rows])
    logi = np.log(panel.index_level[rows])
    return ReturnPanel(
        periods=[panel.dates[t] for t in rows[1:]],
        assets=panel.assets,
        returns=np.diff(logp, axis=0),
        index_returns=np.diff(logi),
        frequency=frequency,
    )


def period_weights(n, weighting="linear"):
    """Observation weights for a window of ``n`` periods, oldest first."""
    if weighting == "linear":
        w = np.arange(1, n + 1, dtype=float)
    elif weighting == "uniform":
        w = np.ones(n)
    else:
        raise ValidationError(f"unknown weighting {weighting!r}")
    return w / w.sum()


def weighted_correlation(x, weights):
    """Correlation of the columns of ``x`` under observation ``weights``.

    Returns ``(rho, variances)``; the variances are the weighted second central
    moments, used by callers to detect degenerate columns.
    """
    mu = weights @ x
    xc = x - mu
    cov = (xc * weights[:, None]).T @ xc
    var = np.diag(cov).copy()
    with np.errstate(divide="ignore", invalid="ignore"):
        sd = np.sqrt(var)
        rho = cov / np.outer(sd, sd)
    return rho, var


def constant_correlation_target(rho):
    k = rho.shape[0]
    if k < 2:
        return np.eye(k), 1.0
    mean_off = (rho.sum() - np.trace(rho)) / (k * (k - 1))
    target = np.full((k, k), mean_off)
    np.fill_diagonal(target, 1.0)
    return target, mean_off


def repair_psd(rho, tol=PSD_TOL):
    """Clip negative eigenvalues and rescale to unit diagonal if below ``-tol``."""
    vals, vecs = np.linalg.eigh(rho)
    if vals[0] >= -tol:
        return rho, False
    fixed = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    s = np.sqrt(np.diag(fixed))
    fixed = fixed / np.outer(s, s)
    fixed = 0.5 * (fixed + fixed.T)
    np.fill_diagonal(fixed, 1.0)
    return np.clip(fixed, -1.0, 1.0), True


def estimate_correlation(returns, lookback=260, weighting="linear", shrinkage=0.1):
    """Weighted sample correlation over the last ``lookback`` periods, shrunk
    toward the constant-correlation target with intensity ``shrinkage``.

    With ``weighting="linear"`` the n-th oldest period in the window has
    weight ``n / sum(1..lookback)``; weights enter the means and the
    cross-moment sums.
    """
    if lookback < 3:
        raise InsufficientDataError(f"lookback must be at least 3, got {lookback}")
    if returns.n_periods < lookback:
        raise InsufficientDataError(
            f"lookback {lookback} exceeds the {returns.n_periods} available periods"
        )
    if not 0.0 <= shrinkage <= 1.0:
        raise ValidationError(f"shrinkage intensity {shrinkage} outside [0, 1]")
    x = np.asarray(returns.returns[-lookback:], dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValidationError("returns contain non-finite values")
    w = period_weights(lookback, weighting)
    rho, var = weighted_correlation(x, w)
    scale = np.maximum(np.abs(x).max(axis=0), 1.0) ** 2
    flat = np.flatnonzero(var <= 1e-28 * scale)
    if flat.size:
        raise DegenerateAssetError(returns.assets[flat[0]])

    rho = 0.5 * (rho + rho.T)
    np.fill_diagonal(rho, 1.0)
    target, mean_off = constant_correlation_target(rho)
    shrunk = (1.0 - shrinkage) * rho + shrinkage * target
    shrunk = np.clip(0.5 * (shrunk + shrunk.T), -1.0, 1.0)
    np.fill_diagonal(shrunk, 1.0)
    shrunk, repaired = repair_psd(shrunk)
    meta = {
        "shrinkage": float(shrinkage),
        "target": "constant_correlation",
        "target_mean_correlation": float(mean_off),
        "weighting": weighting,
        "lookback": int(lookback),
        "psd_repaired": repaired,
    }
    return CorrelationMatrix(shrunk, returns.assets, meta)


def correlation_to_distance(rho, mc_ranking):
    """``d = sqrt(2 (1 - rho))`` with rows/columns reordered to ``mc_ranking``."""
    r = rho.rho
    if np.any(r > 1.0 + RHO_TOL) or np.any(r < -1.0 - RHO_TOL) or not np.all(np.isfinite(r)):
        raise ValidationError("correlation entries outside [-1, 1]")
    mc_ranking = [str(a) for a in mc_ranking]
    if sorted(mc_ranking) != sorted(rho.assets) or len(set(mc_ranking)) != len(mc_ranking):
        raise ValidationError("mc_ranking must be a permutation of the correlation assets")
    pos = {a: j for j, a in enumerate(rho.assets)}
    perm = [pos[a] for a in mc_ranking]
    r = np.clip(r[np.ix_(perm, perm)], -1.0, 1.0)
    d = np.sqrt(2.0 * (1.0 - r))
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(d, mc_ranking)


def distance_from_panel(panel, t=None, lookback=260, weighting="linear", shrinkage=0.1):
    """Distance matrix from weekly log returns of ``panel`` up to row ``t``."""
    if t is None:
        t = panel.n_dates - 1
    sub = panel.truncate(t) if t < panel.n_dates - 1 else panel
    weekly = compute_log_returns(sub, "weekly")
    rho = estimate_correlation(weekly, lookback, weighting, shrinkage)
    return correlation_to_distance(rho, panel.mc_ranking(t))


def distance(rho_value):
    """Scalar correlation distance."""
    return math.sqrt(2.0 * (1.0 - rho_value))
