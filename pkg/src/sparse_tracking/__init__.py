"""Sparse index tracking by cardinality-constrained correlation-distance selection."""

__version__ = "0.1.0"

from .estimators import SimplexTracker, SparseIndexSelector
from .evaluation import (
    BacktestReport,
    ResidualSeries,
    TestResult,
    compare_reports,
    cumulative_return,
    levene_test,
    residual_series,
    run_backtest,
    wilcoxon_signed_rank,
)
from .exceptions import SparseTrackingError
from .market_data import (
    CorrelationMatrix,
    DistanceMatrix,
    PricePanel,
    ReturnPanel,
    compute_log_returns,
    correlation_to_distance,
    estimate_correlation,
    load_price_panel,
)
from .multi_stage import SelectedSet, run_stages, union_and_truncate
from .selection import (
    Selection,
    SelectionParams,
    SelectionProblem,
    StagePlan,
    build_problem,
    objective,
    objective_delta_swap,
    preset,
)
from .solver import SaConfig, SolveResult, post_process_swaps, solve, solve_exact, solve_sa
from .synth import generate_market
from .weighting import Portfolio, optimize_weights, project_simplex

__all__ = [
    "BacktestReport", "CorrelationMatrix", "DistanceMatrix", "Portfolio", "PricePanel",
    "ResidualSeries", "ReturnPanel", "SaConfig", "SelectedSet", "Selection",
    "SelectionParams", "SelectionProblem", "SimplexTracker", "SolveResult",
    "SparseIndexSelector", "SparseTrackingError", "StagePlan", "TestResult",
    "build_problem", "compare_reports", "compute_log_returns", "correlation_to_distance",
    "cumulative_return", "estimate_correlation", "generate_market", "levene_test",
    "load_price_panel", "objective", "objective_delta_swap", "optimize_weights",
    "post_process_swaps", "preset", "project_simplex", "residual_series", "run_backtest",
    "run_stages", "solve", "solve_exact", "solve_sa", "union_and_truncate",
    "wilcoxon_signed_rank",
]
