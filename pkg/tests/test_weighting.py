import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparse_tracking.exceptions import ParameterError, ValidationError
from sparse_tracking.weighting import (
    fit_simplex_weights,
    optimize_weights,
    project_simplex,
    tracking_objective,
)


def grid_search(G, y, step):
    """Brute-force minimum over a regular grid on the 2- or 3-asset simplex."""
    n = int(round(1 / step))
    best = (np.inf, None)
    if G.shape[1] == 2:
        for a in range(n + 1):
            w = np.array([a, n - a]) / n
            best = min(best, (tracking_objective(w, G, y), tuple(w)))
    else:
        for a in range(n + 1):
            for b in range(n + 1 - a):
                w = np.array([a, b, n - a - b]) / n
                best = min(best, (tracking_objective(w, G, y), tuple(w)))
    return best


def test_single_asset_full_weight(rng):
    p = optimize_weights(["x"], rng.normal(size=(20, 1)), rng.normal(size=20))
    assert p.holdings == {"x": 1.0}


def test_index_equal_to_first_asset(rng):
    G = rng.normal(0, 0.01, size=(60, 2))
    y = G[:, 0].copy()
    p = optimize_weights(["a", "b"], G, y)
    w = p.weights
    assert w[0] >= 0.5
    assert tracking_objective(w, G, y) <= tracking_objective([0.5, 0.5], G, y)
    grid_value, _ = grid_search(G, y, 1e-4)
    assert abs(tracking_objective(w, G, y) - grid_value) < 1e-6


def test_identical_assets_zero_objective(rng):
    g = rng.normal(0, 0.01, 40)
    G = np.column_stack([g, g])
    p = optimize_weights(["a", "b"], G, g)
    assert p.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert tracking_objective(p.weights, G, g) == pytest.approx(0.0, abs=1e-20)


@pytest.mark.parametrize("n_assets", [2, 3])
def test_matches_grid_search(rng, n_assets):
    for _ in range(3):
        G = rng.normal(0, 0.02, size=(50, n_assets))
        y = G @ rng.dirichlet(np.ones(n_assets)) + rng.normal(0, 0.005, 50)
        w, _ = fit_simplex_weights(G, y)
        grid_value, _ = grid_search(G, y, 1e-3)
        assert tracking_objective(w, G, y) <= grid_value + 1e-12
        assert abs(tracking_objective(w, G, y) - grid_value) < 1e-6


def test_empty_selection_rejected():
    with pytest.raises(ParameterError):
        optimize_weights([], np.zeros((5, 0)), np.zeros(5))


def test_non_finite_rejected():
    G = np.array([[0.1, np.nan], [0.0, 0.1]])
    with pytest.raises(ValidationError):
        optimize_weights(["a", "b"], G, np.zeros(2))


def test_short_window_warns(rng):
    with pytest.warns(UserWarning):
        optimize_weights(list("abcd"), rng.normal(size=(3, 4)), rng.normal(size=3))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30))
def test_projection_lands_on_simplex(v):
    w = project_simplex(v)
    assert np.all(w >= 0)
    assert abs(w.sum() - 1.0) < 1e-12


def test_projection_is_nearest_point(rng):
    for _ in range(20):
        v = rng.normal(size=5)
        w = project_simplex(v)
        for _ in range(50):
            other = rng.dirichlet(np.ones(5))
            assert np.sum((v - w) ** 2) <= np.sum((v - other) ** 2) + 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 12))
def test_descent_guarantee(seed, n):
    rng = np.random.default_rng(seed)
    G = rng.normal(0, 0.01, size=(80, n))
    y = rng.normal(0, 0.01, 80)
    p = optimize_weights([str(i) for i in range(n)], G, y)
    assert np.all(p.weights >= 0)
    assert abs(p.weights.sum() - 1.0) <= 1e-9
    assert tracking_objective(p.weights, G, y) <= tracking_objective(np.full(n, 1 / n), G, y)


def test_portfolio_csv(tmp_path, rng):
    p = optimize_weights(["a", "b"], rng.normal(size=(10, 2)), rng.normal(size=10), "2024-03-29")
    p.to_csv(tmp_path / "w.csv")
    lines = (tmp_path / "w.csv").read_text().splitlines()
    assert lines[0] == "asset,weight,as_of"
    assert lines[1].startswith("a,") and lines[1].endswith(",2024-03-29")
