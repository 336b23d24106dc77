import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparse_tracking.exceptions import (
    DegenerateAssetError,
    InsufficientDataError,
    ParseError,
    ValidationError,
)
from sparse_tracking.market_data import (
    CorrelationMatrix,
    DistanceMatrix,
    PricePanel,
    ReturnPanel,
    compute_log_returns,
    correlation_to_distance,
    estimate_correlation,
    load_price_panel,
)

from conftest import random_correlation


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture
def caps_file(tmp_path):
    return write(tmp_path / "caps.csv", "asset,market_cap\nA,200\nB,100\n")


def test_load_three_rows(tmp_path, caps_file):
    prices = write(tmp_path / "p.csv", "date,index,A,B\n"
                   "2024-01-02,100,10,20\n2024-01-03,101,11,21\n2024-01-04,102,12,22\n")
    panel = load_price_panel(prices, mc_path=caps_file)
    assert panel.n_dates == 3 and panel.n_assets == 2
    assert panel.assets == ("A", "B")
    assert panel.mc_ranking() == ["A", "B"]


def test_load_rejects_zero_price(tmp_path, caps_file):
    prices = write(tmp_path / "p.csv", "date,index,A,B\n"
                   "2024-01-02,100,10,20\n2024-01-03,101,0,21\n")
    with pytest.raises(ValidationError, match="'A' on 2024-01-03"):
        load_price_panel(prices, mc_path=caps_file)


def test_load_drops_row_with_missing_price(tmp_path, caps_file):
    prices = write(tmp_path / "p.csv", "date,index,A,B\n"
                   "2024-01-02,100,10,20\n2024-01-03,101,,21\n2024-01-04,102,12,22\n")
    panel = load_price_panel(prices, mc_path=caps_file)
    assert panel.n_dates == 2
    assert len(panel.load_log) == 1 and "line 3" in panel.load_log[0]


def test_load_parse_error_has_line_number(tmp_path, caps_file):
    prices = write(tmp_path / "p.csv", "date,index,A,B\n"
                   "2024-01-02,100,10,20\n2024-01-03,101,abc,21\n")
    with pytest.raises(ParseError, match="line 3"):
        load_price_panel(prices, mc_path=caps_file)


def test_load_needs_two_rows(tmp_path, caps_file):
    prices = write(tmp_path / "p.csv", "date,index,A,B\n2024-01-02,100,10,20\n")
    with pytest.raises(InsufficientDataError):
        load_price_panel(prices, mc_path=caps_file)


def test_load_mc_header_row(tmp_path):
    prices = write(tmp_path / "p.csv", "date,index,A,B\nmarket_cap,,5,50\n"
                   "2024-01-02,100,10,20\n2024-01-03,101,11,21\n")
    panel = load_price_panel(prices)
    assert panel.mc_ranking() == ["B", "A"]


def test_mc_ties_broken_by_id():
    panel = PricePanel([dt.date(2024, 1, 2), dt.date(2024, 1, 3)], ["Z", "A"],
                       [1.0, 1.0], [[1.0, 1.0], [1.0, 1.0]], [1.0, 1.0])
    assert panel.mc_ranking() == ["A", "Z"]


def _panel(prices, start=dt.date(2024, 1, 1)):
    prices = np.asarray(prices, dtype=float).reshape(len(prices), -1)
    dates = list(np.busday_offset(np.datetime64(start), np.arange(len(prices)), roll="forward"))
    dates = [dt.date.fromisoformat(str(d)) for d in dates]
    return PricePanel(dates, [f"a{j}" for j in range(prices.shape[1])],
                      np.arange(prices.shape[1], 0, -1), prices, prices[:, 0])


def test_daily_log_return_definition():
    r = compute_log_returns(_panel([100.0, 110.0]), "daily")
    assert r.returns[0, 0] == pytest.approx(0.0953102, abs=1e-7)
    assert r.returns[0, 0] == math.log(1.1) or abs(r.returns[0, 0] - math.log(1.1)) < 1e-15


def test_constant_prices_zero_returns():
    r = compute_log_returns(_panel(np.full((5, 3), 7.0)), "daily")
    assert np.all(r.returns == 0.0) and np.all(r.index_returns == 0.0)


def test_weekly_sampling_two_iso_weeks():
    # Mon 2024-01-01 .. Fri 2024-01-12: ten business days in ISO weeks 1 and 2.
    prices = np.arange(1.0, 11.0)
    r = compute_log_returns(_panel(prices), "weekly")
    assert r.n_periods == 1
    # last day of week 1 is Fri Jan 5 (price 5), of week 2 is Fri Jan 12 (price 10)
    assert r.returns[0, 0] == pytest.approx(math.log(10.0 / 5.0), abs=1e-15)
    assert r.periods == (dt.date(2024, 1, 12),)


def test_weekly_needs_two_weeks():
    with pytest.raises(InsufficientDataError):
        compute_log_returns(_panel(np.arange(1.0, 6.0)), "weekly")


def _returns(x):
    x = np.asarray(x, dtype=float)
    return ReturnPanel(range(x.shape[0]), [f"a{j}" for j in range(x.shape[1])], x,
                       np.zeros(x.shape[0]), "weekly")


def test_identical_columns_correlate_perfectly():
    x = np.array([[1.0, 1.0], [2.0, 2.0], [-1.0, -1.0], [0.5, 0.5]])
    rho = estimate_correlation(_returns(x), lookback=4, shrinkage=0.0)
    assert rho.rho[0, 1] == pytest.approx(1.0, abs=1e-12)


def test_full_shrinkage_gives_constant_offdiagonal(rng):
    x = rng.normal(size=(40, 5))
    rho = estimate_correlation(_returns(x), lookback=40, shrinkage=1.0).rho
    sample = estimate_correlation(_returns(x), lookback=40, shrinkage=0.0).rho
    mean_off = (sample.sum() - 5) / 20
    off = rho[~np.eye(5, dtype=bool)]
    np.testing.assert_allclose(off, mean_off, atol=1e-12)


SMALL_RETURNS = [[1, 2, 0], [-1, 0, 1], [2, 1, -1], [0, -2, 2], [1, 1, 1]]


def weighted_correlation_oracle(rows, weights):
    n, k = len(rows), len(rows[0])
    means = [sum(weights[t] * rows[t][i] for t in range(n)) for i in range(k)]

    def cov(i, j):
        return sum(weights[t] * (rows[t][i] - means[i]) * (rows[t][j] - means[j])
                   for t in range(n))

    return [[cov(i, j) / math.sqrt(cov(i, i) * cov(j, j)) for j in range(k)] for i in range(k)]


def test_linear_weighted_shrunk_correlation_matches_oracle():
    weights = [n / 15 for n in range(1, 6)]
    sample = weighted_correlation_oracle(SMALL_RETURNS, weights)
    mean_off = (sample[0][1] + sample[0][2] + sample[1][2]) / 3
    expected = [[1.0 if i == j else 0.5 * sample[i][j] + 0.5 * mean_off for j in range(3)]
                for i in range(3)]
    got = estimate_correlation(_returns(SMALL_RETURNS), lookback=5, weighting="linear",
                               shrinkage=0.5).rho
    np.testing.assert_allclose(got, expected, atol=1e-12)
    # frozen from the oracle above
    assert got[0, 1] == pytest.approx(0.1585762145145377, abs=1e-12)
    assert got[0, 2] == pytest.approx(-0.5167141795964503, abs=1e-12)
    assert got[1, 2] == pytest.approx(-0.5105147666948943, abs=1e-12)


def test_uniform_weights_equal_pearson(rng):
    x = rng.normal(size=(30, 6))
    got = estimate_correlation(_returns(x), lookback=30, weighting="uniform", shrinkage=0.0).rho
    np.testing.assert_allclose(got, np.corrcoef(x, rowvar=False), atol=1e-12)


def test_lookback_uses_most_recent_rows(rng):
    x = rng.normal(size=(50, 4))
    a = estimate_correlation(_returns(x), lookback=20).rho
    b = estimate_correlation(_returns(x[-20:]), lookback=20).rho
    np.testing.assert_array_equal(a, b)


def test_zero_variance_column_is_named():
    x = np.array([[1.0, 3.0], [2.0, 3.0], [0.0, 3.0], [1.5, 3.0]])
    with pytest.raises(DegenerateAssetError, match="a1"):
        estimate_correlation(_returns(x), lookback=4)


def test_lookback_exceeding_data():
    with pytest.raises(InsufficientDataError):
        estimate_correlation(_returns(SMALL_RETURNS), lookback=6)


def test_estimate_is_valid_correlation(rng):
    x = rng.normal(size=(10, 25))  # more assets than periods: rank deficient
    rho = estimate_correlation(_returns(x), lookback=10, shrinkage=0.1).rho
    np.testing.assert_array_equal(rho, rho.T)
    np.testing.assert_array_equal(np.diag(rho), 1.0)
    assert np.all(np.abs(rho) <= 1.0)
    assert np.linalg.eigvalsh(rho)[0] >= -1e-8


@pytest.mark.parametrize("r, expected", [(1.0, 0.0), (-1.0, 2.0), (0.0, 1.4142136)])
def test_distance_special_values(r, expected):
    rho = CorrelationMatrix(np.array([[1.0, r], [r, 1.0]]), ["x", "y"])
    d = correlation_to_distance(rho, ["x", "y"])
    assert d.d[0, 1] == pytest.approx(expected, abs=1e-7)


def test_distance_reorders_to_mc_rank():
    rho = np.array([[1.0, 0.5, 0.1], [0.5, 1.0, -0.2], [0.1, -0.2, 1.0]])
    d = correlation_to_distance(CorrelationMatrix(rho, ["a", "b", "c"]), ["c", "a", "b"])
    assert d.mc_rank_order == ("c", "a", "b")
    assert d.d[0, 1] == pytest.approx(math.sqrt(2 * 0.9))
    assert d.d[1, 2] == pytest.approx(math.sqrt(2 * 0.5))


def test_distance_rejects_out_of_range():
    rho = CorrelationMatrix(np.array([[1.0, 1.1], [1.1, 1.0]]), ["x", "y"])
    with pytest.raises(ValidationError):
        correlation_to_distance(rho, ["x", "y"])


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_distance_metric_properties(k, seed):
    rng = np.random.default_rng(seed)
    rho = random_correlation(rng, k)
    d = correlation_to_distance(CorrelationMatrix(rho, range(k)), [str(i) for i in range(k)]).d
    assert np.all(np.diag(d) == 0)
    np.testing.assert_array_equal(d, d.T)
    assert np.all((d >= 0) & (d <= 2))
    lhs = d[:, None, :]
    rhs = d[:, :, None] + d[None, :, :]
    assert np.all(lhs <= rhs + 1e-9)


@given(st.floats(-1, 1), st.floats(-1, 1))
def test_distance_monotone_decreasing(a, b):
    if a == b:
        return
    lo, hi = sorted((a, b))
    f = lambda r: correlation_to_distance(
        CorrelationMatrix(np.array([[1.0, r], [r, 1.0]]), ["x", "y"]), ["x", "y"]).d[0, 1]
    assert f(lo) >= f(hi)
    if hi - lo > 1e-12:
        assert f(lo) > f(hi)


def test_distance_csv_round_trip(tmp_path, rng):
    rho = random_correlation(rng, 5)
    d = correlation_to_distance(CorrelationMatrix(rho, list("abcde")), list("ecabd"))
    d.to_csv(tmp_path / "d.csv")
    back = DistanceMatrix.from_csv(tmp_path / "d.csv")
    assert back.mc_rank_order == d.mc_rank_order
    np.testing.assert_array_equal(back.d, d.d)
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "asset,e,c,a,b,d"
