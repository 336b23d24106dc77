"""Cardinality-constrained binary-quadratic asset selection.

Assets are indexed by market-cap rank (0-based in storage, rank 1 is the
largest).  A selection ``x`` always holds the ``n_forced`` largest assets,
never holds assets beyond ``max_rank`` and picks exactly ``n_select`` assets
in total.  The objective to minimize is

    centrality * sum_{i in S} rowsum(D)_i  -  dissimilarity / 2 * sum_{i,j in S} D_ij
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from ._io import atomic_write_text
from .exceptions import (
    ConfigurationError,
    FeasibilityError,
    MoveError,
    ParameterError,
    ValidationError,
)


@dataclass(frozen=True)
class SelectionParams:
    n_candidates: int
    max_rank: int
    n_forced: int
    n_select: int
    dissimilarity: float = 0.0
    centrality: float = 0.0

    def __post_init__(self):
        K, H, N, M = self.n_candidates, self.max_rank, self.n_forced, self.n_select
        for name, lhs, rhs, text in (
            ("n_forced", 0, N, "0 <= N"),
            ("n_select", N, M, "N <= M"),
            ("max_rank", M, H, "M <= H"),
            ("n_candidates", H, K, "H <= K"),
        ):
            if lhs > rhs:
                raise ParameterError(
                    f"{text} violated (N={N}, M={M}, H={H}, K={K})"
                )
        if M < 1:
            raise ParameterError("n_select must be at least 1")
        if not (self.dissimilarity >= 0 and self.centrality >= 0):
            raise ParameterError("dissimilarity and centrality must be nonnegative")

    @property
    def n_free_slots(self):
        return self.n_select - self.n_forced

    @property
    def n_free(self):
        return self.max_rank - self.n_forced

    def scaled(self, c):
        return replace(self, dissimilarity=self.dissimilarity * c, centrality=self.centrality * c)


class Selection:
    """A 0/1 assignment over the candidate universe."""

    __slots__ = ("x",)

    def __init__(self, x):
        x = np.array(x, dtype=np.int8)
        if x.ndim != 1 or not np.all((x == 0) | (x == 1)):
            raise ValidationError("selection vector must be one-dimensional 0/1")
        x.setflags(write=False)
        self.x = x

    @classmethod
    def from_indices(cls, indices, size):
        x = np.zeros(size, dtype=np.int8)
        x[list(indices)] = 1
        return cls(x)

    @property
    def indices(self):
        return tuple(int(i) for i in np.flatnonzero(self.x))

    def __len__(self):
        return int(self.x.sum())

    def __eq__(self, other):
        return isinstance(other, Selection) and np.array_equal(self.x, other.x)

    def __hash__(self):
        return hash(self.x.tobytes())

    def __repr__(self):
        return f"Selection({list(self.indices)})"


def check_feasible(params, sel):
    x = sel.x
    problems = []
    if x.shape != (params.n_candidates,):
        raise FeasibilityError(
            f"selection has length {x.shape[0]}, expected {params.n_candidates}"
        )
    N, H, M = params.n_forced, params.max_rank, params.n_select
    if N and not np.all(x[:N] == 1):
        problems.append(f"forced assets 1..{N} not all selected")
    if np.any(x[H:] == 1):
        problems.append(f"assets beyond rank {H} selected")
    if int(x.sum()) != M:
        problems.append(f"cardinality {int(x.sum())} != {M}")
    if problems:
        raise FeasibilityError("; ".join(problems))


@dataclass(frozen=True, eq=False)
class SelectionProblem:
    params: SelectionParams
    d: np.ndarray
    row_sums: np.ndarray
    assets: tuple = ()

    @property
    def size(self):
        return self.params.n_candidates

    @property
    def forced(self):
        return range(0, self.params.n_forced)

    @property
    def free(self):
        return range(self.params.n_forced, self.params.max_rank)

    @property
    def excluded(self):
        return range(self.params.max_rank, self.params.n_candidates)


def build_problem(d, params):
    """Restrict ``d`` to its top ``n_candidates`` block and precompute row sums.

    ``d`` is a :class:`DistanceMatrix` or a square array already in MC order.
    """
    if hasattr(d, "mc_rank_order"):
        assets, mat = d.mc_rank_order, d.d
    else:
        mat = np.asarray(d, dtype=float)
        assets = tuple(str(i + 1) for i in range(mat.shape[0]))
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValidationError("distance matrix must be square")
    K = params.n_candidates
    if mat.shape[0] < K:
        raise ParameterError(
            f"distance matrix has {mat.shape[0]} assets, fewer than K={K}"
        )
    sub = np.ascontiguousarray(mat[:K, :K], dtype=float)
    sub.setflags(write=False)
    row_sums = sub.sum(axis=1)
    row_sums.setflags(write=False)
    return SelectionProblem(params, sub, row_sums, tuple(assets[:K]))


def objective(problem, sel):
    """Objective value with a correctly rounded (order-independent) summation."""
    check_feasible(problem.params, sel)
    idx = np.flatnonzero(sel.x)
    p = problem.params
    linear = math.fsum(problem.row_sums[idx])
    quad = math.fsum(problem.d[np.ix_(idx, idx)].ravel())
    return p.centrality * linear - 0.5 * p.dissimilarity * quad


def objective_delta_swap(problem, sel, out_idx, in_idx):
    """Change in objective when ``out_idx`` leaves and ``in_idx`` joins, in O(M)."""
    p = problem.params
    lo, hi = p.n_forced, p.max_rank
    for name, i in (("out_idx", out_idx), ("in_idx", in_idx)):
        if not lo <= i < hi:
            raise MoveError(f"{name}={i} outside the free range [{lo}, {hi})")
    if sel.x[out_idx] != 1 or sel.x[in_idx] != 0:
        raise MoveError("out_idx must be selected and in_idx unselected")
    idx = np.flatnonzero(sel.x)
    d = problem.d
    to_in = d[in_idx, idx].sum() - d[in_idx, out_idx]
    to_out = d[out_idx, idx].sum()
    return p.centrality * (problem.row_sums[in_idx] - problem.row_sums[out_idx]) \
        - p.dissimilarity * (to_in - to_out)


def apply_swap(sel, out_idx, in_idx):
    x = sel.x.copy()
    x[out_idx], x[in_idx] = 0, 1
    return Selection(x)


def write_instance(path, problem):
    """Plain-text instance: ``K H N M alpha beta`` then the matrix row-major."""
    p = problem.params
    lines = [" ".join([str(p.n_candidates), str(p.max_rank), str(p.n_forced),
                       str(p.n_select), repr(float(p.dissimilarity)),
                       repr(float(p.centrality))])]
    lines += [" ".join(repr(float(v)) for v in row) for row in problem.d]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_instance(path):
    with open(path, encoding="utf-8") as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    K, H, N, M = (int(v) for v in lines[0][:4])
    alpha, beta = float(lines[0][4]), float(lines[0][5])
    d = np.array([[float(v) for v in row] for row in lines[1 : K + 1]])
    if d.shape != (K, K):
        raise ValidationError(f"instance matrix shape {d.shape} != ({K}, {K})")
    return build_problem(d, SelectionParams(K, H, N, M, alpha, beta))


@dataclass(frozen=True)
class StagePlan:
    """Stage parameters solved independently, then unioned and capped at ``m_star``."""

    stages: tuple
    m_star: int

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        if not self.stages:
            raise ParameterError("a stage plan needs at least one stage")
        if self.m_star < 1:
            raise ParameterError("m_star must be at least 1")
        for s in self.stages:
            if not isinstance(s, SelectionParams):
                raise ParameterError(f"stage {s!r} is not a SelectionParams")


_SYMBOLIC = re.compile(r"^\s*([0-9.]+)\s*/\s*([MH])\s*$")


def resolve_coefficient(value, n_select, max_rank):
    """Resolve ``"c/M"`` or ``"c/H"`` (or a plain number) to a float."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if value is None or value == "--":
        return 0.0
    m = _SYMBOLIC.match(str(value))
    if m:
        denom = n_select if m.group(2) == "M" else max_rank
        return float(Fraction(m.group(1)) / denom)
    try:
        return float(value)
    except ValueError:
        raise ConfigurationError(f"cannot interpret coefficient {value!r}") from None


PRESETS = {
    "E1": {"n": 30, "stages": [{"m": 30, "alpha": None, "beta": None}]},
    "E2": {"n": 10, "stages": [{"m": 30, "alpha": "1/M", "beta": "1/H"}]},
    "E3": {"n": 5, "stages": [{"m": 30, "alpha": "1/M", "beta": "1/H"}]},
    "E4": {"n": 0, "stages": [{"m": 30, "alpha": "1/M", "beta": "1/H"}]},
    "E5": {"n": 0, "stages": [{"m": 20, "alpha": "1/M", "beta": "1/H"},
                              {"m": 20, "alpha": "2/M", "beta": "1/H"}]},
    "E6": {"n": 5, "stages": [{"m": 20, "alpha": "1/M", "beta": "1/H"},
                              {"m": 20, "alpha": "2/M", "beta": "1/H"}]},
}
PRESET_M_STAR = 30


def plan_from_blocks(stages, n_forced, max_rank, n_candidates, m_star):
    """Build a :class:`StagePlan` from ``{"m", "alpha", "beta"}`` stage blocks."""
    params = []
    for i, block in enumerate(stages, 1):
        try:
            m = int(block["m"])
        except (KeyError, TypeError, ValueError):
            raise ConfigurationError(f"stage {i}: integer 'm' required") from None
        params.append(SelectionParams(
            n_candidates=n_candidates,
            max_rank=max_rank,
            n_forced=n_forced,
            n_select=m,
            dissimilarity=resolve_coefficient(block.get("alpha"), m, max_rank),
            centrality=resolve_coefficient(block.get("beta"), m, max_rank),
        ))
    return StagePlan(params, m_star)


def preset(name, n_candidates, max_rank):
    """The E1..E6 hyper-parameter settings for a universe of size ``n_candidates``."""
    try:
        entry = PRESETS[str(name).upper()]
    except KeyError:
        raise ConfigurationError(
            f"unknown preset {name!r}; expected one of {sorted(PRESETS)}"
        ) from None
    return plan_from_blocks(entry["stages"], entry["n"], max_rank, n_candidates, PRESET_M_STAR)
