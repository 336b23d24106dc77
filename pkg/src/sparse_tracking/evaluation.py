"""Residual-based tracking evaluation and the quarterly-rebalanced backtest.

Time indices are 0-based: ``t = 0`` is the first day of the evaluated
return series.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import betainc

from ._io import atomic_write_text, fmt, write_csv
from .exceptions import InsufficientDataError, RangeError, ValidationError
from .market_data import distance_from_panel
from .multi_stage import SelectedSet, select
from .solver import SaConfig
from .weighting import Portfolio, optimize_weights

logger = logging.getLogger(__name__)

ALPHA_LEVEL = 0.05
SAMPLING_MODES = ("even", "contiguous", "non_overlapping", "all")
DEFAULT_HORIZONS = (1, 10, 50, 100)
LONG_HORIZONS = {"1y": 250, "2y": 500}


def _compound(c, r):
    # (1 + c)(1 + r) - 1 without the cancellation of subtracting one
    return c + r + c * r


def cumulative_return(returns, t, p):
    """Compounded return over ``returns[t : t + p]``; exactly ``returns[t]`` when ``p == 1``."""
    returns = np.asarray(returns, dtype=float)
    if t < 0 or p < 1:
        raise RangeError(f"invalid start {t} or horizon {p}")
    if t + p > returns.size:
        raise RangeError(
            f"horizon {p} from t={t} needs {t + p} returns, have {returns.size}"
        )
    c = returns[t]
    for r in returns[t + 1 : t + p]:
        c = _compound(c, r)
    return float(c)


def rolling_cumulative_returns(returns, p):
    """``cumulative_return(returns, t, p)`` for every feasible ``t``."""
    returns = np.asarray(returns, dtype=float)
    n = returns.size - p + 1
    if n < 1:
        return np.empty(0)
    c = returns[:n].copy()
    for k in range(1, p):
        c = _compound(c, returns[k : k + n])
    return c


@dataclass(frozen=True)
class ResidualSeries:
    horizon_p: int
    values: np.ndarray
    sample_times: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        t = np.array(self.sample_times, dtype=np.int64)
        if v.shape != t.shape:
            raise ValidationError("values and sample times differ in length")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "sample_times", t)

    def __len__(self):
        return self.values.size

    @property
    def mean(self):
        return float(np.mean(self.values))

    @property
    def variance(self):
        return float(np.var(self.values, ddof=1)) if self.values.size > 1 else math.nan

    @property
    def abs_mean(self):
        return float(np.mean(np.abs(self.values)))

    @property
    def abs_variance(self):
        return float(np.var(np.abs(self.values), ddof=1)) if self.values.size > 1 else math.nan


def sample_times(n_starts, sample_size, p, sampling="even"):
    """Start times for the residual sample.

    ``even`` spreads ``sample_size`` starts uniformly over the ``n_starts``
    feasible ones (windows overlap whenever ``p > 1``), ``contiguous`` takes
    the first ``sample_size``, ``non_overlapping`` steps by ``p`` and ``all``
    returns every feasible start.
    """
    if sampling == "all":
        return np.arange(n_starts)
    if sampling == "non_overlapping":
        if sample_size * p > n_starts + p - 1:
            raise RangeError(
                f"non-overlapping sampling needs {sample_size * p} returns, "
                f"have {n_starts + p - 1}"
            )
        return np.arange(sample_size) * p
    if sample_size > n_starts:
        raise RangeError(
            f"{sample_size} samples at horizon {p} need {p + sample_size - 1} "
            f"returns, have {n_starts + p - 1}"
        )
    if sampling == "contiguous":
        return np.arange(sample_size)
    if sampling == "even":
        if sample_size == 1:
            return np.zeros(1, dtype=np.int64)
        return (np.arange(sample_size) * (n_starts - 1)) // (sample_size - 1)
    raise ValidationError(f"unknown sampling mode {sampling!r}")


def residual_series(index_returns, portfolio_returns, p, sample_size=200, sampling="even"):
    """Residuals ``C_hat(t, p) - C(t, p)`` at the sampled start times."""
    index_returns = np.asarray(index_returns, dtype=float)
    portfolio_returns = np.asarray(portfolio_returns, dtype=float)
    if index_returns.shape != portfolio_returns.shape:
        raise ValidationError("index and portfolio return series differ in length")
    if p < 1:
        raise RangeError("horizon must be at least 1")
    n_starts = index_returns.size - p + 1
    if n_starts < 1:
        raise RangeError(f"horizon {p} exceeds the {index_returns.size} available returns")
    times = sample_times(n_starts, sample_size, p, sampling)
    c_hat = rolling_cumulative_returns(portfolio_returns, p)
    c = rolling_cumulative_returns(index_returns, p)
    return ResidualSeries(p, c_hat[times] - c[times], times)


def residual_curve(index_returns, portfolio_returns):
    """Residual from the first day as a function of horizon ``p = 1..T``."""
    def running(returns):
        out = np.empty(len(returns))
        c = 0.0
        for i, r in enumerate(np.asarray(returns, dtype=float)):
            c = r if i == 0 else _compound(c, r)
            out[i] = c
        return out

    return running(portfolio_returns) - running(index_returns)


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    test_name: str
    n: int = 0

    __test__ = False  # not a pytest class

    @property
    def rejected_at_5pct(self):
        return self.p_value < ALPHA_LEVEL


def midranks(values):
    """1-based ranks with ties sharing their average rank."""
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    ranks = np.empty(values.size)
    start = 0
    n = values.size
    while start < n:
        stop = start + 1
        while stop < n and sorted_vals[stop] == sorted_vals[start]:
            stop += 1
        ranks[order[start:stop]] = 0.5 * (start + 1 + stop)
        start = stop
    return ranks


def wilcoxon_signed_rank(values, min_size=10):
    """Two-sided signed-rank test of zero median.

    Zeros are dropped, ties get midranks and the p-value uses the normal
    approximation with tie and continuity corrections.  The statistic is the
    rank sum of the positive values.
    """
    v = np.asarray(getattr(values, "values", values), dtype=float)
    v = v[v != 0.0]
    n = v.size
    if n < min_size:
        raise InsufficientDataError(
            f"signed-rank test needs {min_size} nonzero values, got {n}"
        )
    ranks = midranks(np.abs(v))
    w_plus = float(ranks[v > 0].sum())
    _, counts = np.unique(np.abs(v), return_counts=True)
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(counts**3 - counts)) / 48.0
    diff = w_plus - mean
    diff -= 0.5 * np.sign(diff)
    z = diff / math.sqrt(var)
    p_value = min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))
    return TestResult(w_plus, p_value, "wilcoxon_signed_rank", n)


def f_survival(f, dfn, dfd):
    """Upper tail of the F distribution via the regularized incomplete beta."""
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return float(betainc(dfd / 2.0, dfn / 2.0, dfd / (dfd + dfn * f)))


def levene_test(groups, min_size=3):
    """Mean-centred Levene test for equal variances across ``groups``."""
    groups = [np.asarray(getattr(g, "values", g), dtype=float) for g in groups]
    k = len(groups)
    if k < 2:
        raise InsufficientDataError("Levene test needs at least 2 groups")
    for i, g in enumerate(groups):
        if g.size < min_size:
            raise InsufficientDataError(
                f"group {i} has {g.size} values, Levene test needs {min_size}"
            )
    dev = [np.abs(g - g.mean()) for g in groups]
    sizes = np.array([z.size for z in dev], dtype=float)
    total = sizes.sum()
    group_means = np.array([z.mean() for z in dev])
    grand = float(np.sum(sizes * group_means) / total)
    between = float(np.sum(sizes * (group_means - grand) ** 2))
    within = float(sum(np.sum((z - m) ** 2) for z, m in zip(dev, group_means)))
    dfn, dfd = k - 1, int(total) - k
    if within == 0.0:
        # constant deviations within every group: 0/0 reads as no evidence
        if between == 0.0:
            return TestResult(0.0, 1.0, "levene", int(total))
        return TestResult(math.inf, 0.0, "levene", int(total))
    stat = (dfd / dfn) * between / within
    return TestResult(stat, f_survival(stat, dfn, dfd), "levene", int(total))


@dataclass
class HorizonStats:
    horizon: int
    residuals: ResidualSeries
    sampled: ResidualSeries | None
    wilcoxon: TestResult | None
    note: str = ""

    @property
    def mean(self):
        return self.residuals.mean

    @property
    def variance(self):
        return self.residuals.variance


@dataclass
class Rebalance:
    date: object
    row: int
    selected: SelectedSet
    portfolio: Portfolio
    ranks: dict = field(default_factory=dict)


@dataclass
class BacktestReport:
    """Out-of-sample tracking statistics for one portfolio construction.

    Per-horizon means and variances use every feasible start time; the tests
    use the ``sample_size`` sampled residuals.  Long horizons report the mean
    and variance of absolute residuals.
    """

    name: str
    dates: tuple
    portfolio_returns: np.ndarray
    index_returns: np.ndarray
    horizons: dict
    long_horizons: dict
    curve: np.ndarray
    rebalances: list
    settings: dict = field(default_factory=dict)

    @property
    def max_abs_residual(self):
        return float(np.max(np.abs(self.curve))) if self.curve.size else math.nan

    def write(self, directory):
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        rows = [["p", "n", "mean", "variance", "wilcoxon_n", "wilcoxon_W",
                 "wilcoxon_p", "wilcoxon_rejected_5pct", "note"]]
        for p, h in sorted(self.horizons.items()):
            w = h.wilcoxon
            rows.append([p, len(h.residuals), fmt(h.mean), fmt(h.variance),
                         w.n if w else "", fmt(w.statistic) if w else "",
                         fmt(w.p_value) if w else "",
                         str(w.rejected_at_5pct).lower() if w else "", h.note])
        write_csv(out / "residual_stats.csv", rows)

        rows = [["horizon", "p", "n", "abs_mean", "abs_variance"]]
        for label, (p, s) in self.long_horizons.items():
            if s is None:
                rows.append([label, p, 0, "", ""])
            else:
                rows.append([label, p, len(s), fmt(s.abs_mean), fmt(s.abs_variance)])
        write_csv(out / "long_horizon_stats.csv", rows)

        rows = [["p", "residual"]]
        rows += [[i + 1, fmt(v)] for i, v in enumerate(self.curve)]
        write_csv(out / "residual_curve.csv", rows)

        rows = [["date", "portfolio_return", "index_return"]]
        rows += [[str(d), fmt(a), fmt(b)] for d, a, b in
                 zip(self.dates, self.portfolio_returns, self.index_returns)]
        write_csv(out / "returns.csv", rows)

        rows = [["date", "asset", "mc_rank", "weight", "stages"]]
        for rb in self.rebalances:
            for asset, w in rb.portfolio.holdings.items():
                rank = rb.ranks.get(asset, "")
                stages = rb.selected.provenance.get(rank - 1, ()) if rank != "" else ()
                rows.append([str(rb.date), asset, rank, fmt(w),
                             " ".join(str(s) for s in stages)])
        write_csv(out / "rebalances.csv", rows)

        atomic_write_text(out / "summary.txt", self.summary())

    def summary(self):
        lines = [f"portfolio: {self.name}",
                 f"evaluation days: {len(self.dates)}",
                 f"rebalances: {len(self.rebalances)}",
                 f"max_p |residual from day 1|: {fmt(self.max_abs_residual)}",
                 ""]
        for p, h in sorted(self.horizons.items()):
            line = f"p={p}: mean={fmt(h.mean)} variance={fmt(h.variance)}"
            if h.wilcoxon:
                w = h.wilcoxon
                verdict = "rejected" if w.rejected_at_5pct else "not rejected"
                line += f" wilcoxon W={fmt(w.statistic)} p={fmt(w.p_value)} ({verdict})"
            elif h.note:
                line += f" wilcoxon skipped: {h.note}"
            lines.append(line)
        for label, (p, s) in self.long_horizons.items():
            if s is None:
                lines.append(f"{label} (p={p}): insufficient data")
            else:
                lines.append(f"{label} (p={p}): mean|e|={fmt(s.abs_mean)} "
                             f"var|e|={fmt(s.abs_variance)}")
        return "\n".join(lines) + "\n"


def build_report(name, dates, portfolio_returns, index_returns, horizons=DEFAULT_HORIZONS,
                 long_horizons=None, sample_size=200, sampling="even", rebalances=(),
                 settings=None):
    """Compute every statistic of a :class:`BacktestReport` from two return series."""
    long_horizons = LONG_HORIZONS if long_horizons is None else long_horizons
    r_hat = np.asarray(portfolio_returns, dtype=float)
    r = np.asarray(index_returns, dtype=float)
    per_h = {}
    for p in horizons:
        if p > r.size:
            raise RangeError(f"horizon {p} exceeds the {r.size} evaluation days")
        full = residual_series(r, r_hat, p, sampling="all")
        sampled, test, note = None, None, ""
        try:
            sampled = residual_series(r, r_hat, p, sample_size, sampling)
            test = wilcoxon_signed_rank(sampled)
        except (RangeError, InsufficientDataError) as exc:
            note = str(exc)
        per_h[p] = HorizonStats(p, full, sampled, test, note)
    longs = {}
    for label, p in long_horizons.items():
        longs[label] = (p, residual_series(r, r_hat, p, sampling="all") if p <= r.size else None)
    return BacktestReport(name, tuple(dates), r_hat, r, per_h, longs,
                          residual_curve(r, r_hat), list(rebalances), dict(settings or {}))


def compare_reports(reports, horizons=None):
    """Levene test per horizon across the portfolios whose signed-rank test
    did not reject; returns ``{p: (names, TestResult or None)}``."""
    if horizons is None:
        horizons = sorted(set().union(*(r.horizons for r in reports))) if reports else []
    out = {}
    for p in horizons:
        names, groups = [], []
        for rep in reports:
            h = rep.horizons.get(p)
            if h and h.wilcoxon and not h.wilcoxon.rejected_at_5pct:
                names.append(rep.name)
                groups.append(h.sampled.values)
        result = levene_test(groups) if len(groups) >= 2 else None
        out[p] = (names, result)
    return out


def quarter_end_rows(dates):
    """Rows that are the last panel day of March, June, September or December."""
    rows = []
    for t in range(len(dates) - 1):
        d, nxt = dates[t], dates[t + 1]
        if d.month in (3, 6, 9, 12) and (nxt.month != d.month or nxt.year != d.year):
            rows.append(t)
    return rows


def simple_returns(levels):
    levels = np.asarray(levels, dtype=float)
    return levels[1:] / levels[:-1] - 1.0


def _history_ok(panel, t, lookback, weight_window):
    if t < weight_window:
        return False
    weeks = {d.isocalendar()[:2] for d in panel.dates[: t + 1]}
    return len(weeks) - 1 >= lookback


def market_cap_weighter(ids, window, index_window, panel, t):
    """Weights proportional to market caps on the rebalance day."""
    caps = panel.market_caps_at(t)
    pos = {a: j for j, a in enumerate(panel.assets)}
    v = np.array([caps[pos[a]] for a in ids])
    return dict(zip(ids, v / v.sum()))


def tracking_weighter(ids, window, index_window, panel, t):
    return optimize_weights(ids, window, index_window).holdings


WEIGHTERS = {"tracking": tracking_weighter, "market_cap": market_cap_weighter}


def plan_selector(plan, cfg, lookback, weighting, shrinkage):
    def selector(panel, t):
        d = distance_from_panel(panel, t, lookback, weighting, shrinkage)
        return select(plan, d, cfg), d.mc_rank_order
    return selector


def run_backtest(plan, data, cfg=None, rebalance="quarterly", *, lookback=260,
                 shrinkage=0.1, weighting="linear", weight_window=250,
                 horizons=DEFAULT_HORIZONS, long_horizons=None, sample_size=200,
                 sampling="even", selector=None, weighter="tracking", name="portfolio"):
    """Quarterly-rebalanced out-of-sample backtest of a selection plan.

    At each rebalance row the distance matrix is estimated from the trailing
    ``lookback`` weekly log returns, assets are selected with ``plan`` (or a
    custom ``selector(panel, t) -> (SelectedSet, mc_rank_order)``), and
    weights are fitted on the trailing ``weight_window`` daily simple returns.
    Share counts are then held until the next rebalance.  ``rebalance`` is
    ``"quarterly"`` or an explicit sequence of dates.
    """
    cfg = cfg or SaConfig()
    panel = data
    if rebalance == "quarterly":
        candidates = quarter_end_rows(panel.dates)
        rows = [t for t in candidates if _history_ok(panel, t, lookback, weight_window)]
        if not rows:
            raise RangeError(
                f"no quarter end has {lookback} weeks and {weight_window} days of history"
            )
    else:
        rows = sorted({panel.date_position(d) for d in rebalance})
        if not rows or not _history_ok(panel, rows[0], lookback, weight_window):
            raise RangeError("insufficient history at the first rebalance date")
        rows = [t for t in rows if t < panel.n_dates - 1]
        if not rows:
            raise RangeError("no rebalance date precedes the end of the data")
    if selector is None:
        selector = plan_selector(plan, cfg, lookback, weighting, shrinkage)
    if isinstance(weighter, str):
        weighter = WEIGHTERS[weighter]

    prices = panel.prices
    asset_ret = prices[1:] / prices[:-1] - 1.0
    index_ret = simple_returns(panel.index_level)
    pos = {a: j for j, a in enumerate(panel.assets)}

    first = rows[0]
    n_eval = panel.n_dates - 1 - first
    port_ret = np.empty(n_eval)
    rebalances = []
    value = 1.0
    shares = None
    cols = None
    schedule = set(rows)
    for t in range(first, panel.n_dates):
        if t > first:
            new_value = float(shares @ prices[t, cols])
            port_ret[t - first - 1] = new_value / value - 1.0
            value = new_value
        if t in schedule and t < panel.n_dates - 1:
            selected, order = selector(panel, t)
            ids = [order[i] for i in selected.indices]
            c = [pos[a] for a in ids]
            window = asset_ret[t - weight_window : t][:, c]
            index_window = index_ret[t - weight_window : t]
            holdings = weighter(ids, window, index_window, panel, t)
            portfolio = Portfolio({a: float(holdings[a]) for a in ids}, panel.dates[t])
            cols = np.array(c, dtype=np.int64)
            shares = portfolio.weights * value / prices[t, cols]
            rank = {a: order.index(a) + 1 for a in ids}
            rebalances.append(Rebalance(panel.dates[t], t, selected, portfolio, rank))
            logger.info("rebalanced %s on %s: %d assets", name, panel.dates[t], len(ids))

    settings = {"lookback": lookback, "shrinkage": shrinkage, "weighting": weighting,
                "weight_window": weight_window, "sample_size": sample_size,
                "sampling": sampling}
    horizons = [p for p in horizons if p <= n_eval] if n_eval else []
    return build_report(name, panel.dates[first + 1 :], port_ret, index_ret[first:],
                        horizons, long_horizons, sample_size, sampling, rebalances, settings)
