"""Simulated annealing, swap descent and exact enumeration for selection problems."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .exceptions import CapacityError, ParameterError
from .selection import Selection, apply_swap, check_feasible, objective

EXACT_LIMIT = 10**7
_EXACT_CHUNK = 50_000
# Swaps whose incremental delta is below this are re-checked with the exact objective.
_DELTA_TOL = 1e-9


@dataclass(frozen=True)
class SaConfig:
    """Annealing schedule.

    ``initial_temperature=None`` uses the mean absolute delta of 100 random
    swaps from a random start; ``moves_per_sweep=None`` uses ``4 * (H - N)``.
    Random numbers come from numpy's PCG64 generator seeded with ``rng_seed``.
    """

    initial_temperature: float | None = None
    cooling_ratio: float = 0.97
    sweeps: int = 300
    moves_per_sweep: int | None = None
    restarts: int = 8
    rng_seed: int = 0
    max_passes: int = 50

    def __post_init__(self):
        if self.initial_temperature is not None and not self.initial_temperature > 0:
            raise ParameterError("initial_temperature must be positive")
        if not 0.0 < self.cooling_ratio < 1.0:
            raise ParameterError("cooling_ratio must lie in (0, 1)")
        for name in ("sweeps", "restarts", "max_passes"):
            if int(getattr(self, name)) < 1:
                raise ParameterError(f"{name} must be at least 1")
        if self.moves_per_sweep is not None and self.moves_per_sweep < 1:
            raise ParameterError("moves_per_sweep must be at least 1")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ParameterError("rng_seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class SolveResult:
    selection: Selection
    objective: float
    stage_log: tuple = ()
    seed_used: int | None = None
    swaps: tuple = field(default=(), repr=False)

    @property
    def indices(self):
        return self.selection.indices


def _lex_better(value, indices, best_value, best_indices):
    if best_indices is None or value < best_value:
        return True
    return value == best_value and indices < best_indices


def solve_exact(problem, limit=EXACT_LIMIT):
    """Global minimizer by enumeration; exact ties go to the lexicographically
    smallest index set."""
    p = problem.params
    N, H, M = p.n_forced, p.max_rank, p.n_select
    n_comb = math.comb(H - N, M - N)
    if n_comb > limit:
        raise CapacityError(n_comb, limit)

    d = problem.d
    forced = np.arange(N)
    free = np.arange(N, H)
    lin = p.centrality * problem.row_sums[free] - p.dissimilarity * d[np.ix_(free, forced)].sum(axis=1)
    k = M - N
    pairs = list(itertools.combinations(range(k), 2))
    a_idx = np.array([a for a, _ in pairs], dtype=np.int64)
    b_idx = np.array([b for _, b in pairs], dtype=np.int64)

    best_val, best_combo = math.inf, None
    combos = itertools.combinations(range(H - N), k)
    while True:
        flat = np.fromiter(
            itertools.chain.from_iterable(itertools.islice(combos, _EXACT_CHUNK)),
            dtype=np.int64,
        )
        if k == 0:
            chunk = np.zeros((1, 0), dtype=np.int64)
        else:
            if flat.size == 0:
                break
            chunk = flat.reshape(-1, k)
        vals = lin[chunk].sum(axis=1)
        if pairs:
            vals = vals - p.dissimilarity * d[free[chunk[:, a_idx]], free[chunk[:, b_idx]]].sum(axis=1)
        j = int(np.argmin(vals))
        tol = 1e-12 * max(1.0, abs(vals[j]))
        if vals[j] < best_val - tol:
            first = int(np.flatnonzero(vals <= vals[j] + tol)[0])
            best_val, best_combo = vals[j], chunk[first]
        if k == 0:
            break

    idx = list(range(N)) + [N + int(c) for c in best_combo]
    sel = Selection.from_indices(idx, p.n_candidates)
    value = objective(problem, sel)
    return SolveResult(sel, value, (("exact", value),), None)


@njit(cache=True, error_model="numpy")
def _anneal(d, row_sums, sel_pos, unsel_pos, g, lo, hi, alpha, beta,
            temperature, ratio, sweeps, moves, out_draw, in_draw, u_draw, current):
    best = current
    best_pos = sel_pos.copy()
    n = 0
    for _ in range(sweeps):
        for _ in range(moves):
            a = out_draw[n]
            b = in_draw[n]
            u = u_draw[n]
            n += 1
            o = sel_pos[a]
            j = unsel_pos[b]
            delta = beta * (row_sums[j] - row_sums[o]) - alpha * (g[j] - d[j, o] - g[o])
            if delta <= 0.0 or (temperature > 0.0 and u < math.exp(-delta / temperature)):
                for k in range(lo, hi):
                    g[k] += d[k, j] - d[k, o]
                sel_pos[a] = j
                unsel_pos[b] = o
                current += delta
                if current < best:
                    best = current
                    best_pos[:] = sel_pos
        temperature *= ratio
    return best_pos


def _random_start(problem, rng):
    p = problem.params
    chosen = rng.choice(np.arange(p.n_forced, p.max_rank), size=p.n_free_slots, replace=False)
    return Selection.from_indices(list(range(p.n_forced)) + sorted(int(c) for c in chosen),
                                  p.n_candidates)


def auto_temperature(problem, rng, n_samples=100):
    """Mean absolute objective change of random swaps from a random start."""
    p = problem.params
    sel = _random_start(problem, rng)
    x = sel.x
    inside = np.flatnonzero(x[p.n_forced:p.max_rank]) + p.n_forced
    outside = np.flatnonzero(x[p.n_forced:p.max_rank] == 0) + p.n_forced
    idx = np.flatnonzero(x)
    g = problem.d[:, idx].sum(axis=1)
    outs = rng.integers(0, inside.size, n_samples)
    ins = rng.integers(0, outside.size, n_samples)
    o, j = inside[outs], outside[ins]
    deltas = p.centrality * (problem.row_sums[j] - problem.row_sums[o]) \
        - p.dissimilarity * (g[j] - problem.d[j, o] - g[o])
    return float(np.mean(np.abs(deltas)))


def _single_feasible(p):
    return p.n_select == p.n_forced or p.max_rank == p.n_select


def solve_sa(problem, cfg=None):
    """Best selection found by annealing over cardinality-preserving swaps.

    Every restart begins from a uniformly random feasible selection; the
    lowest objective across restarts wins, ties going to the lexicographically
    smallest index set.
    """
    cfg = cfg or SaConfig()
    p = problem.params
    seed = int(cfg.rng_seed)
    if _single_feasible(p):
        sel = Selection.from_indices(range(p.n_select), p.n_candidates)
        value = objective(problem, sel)
        return SolveResult(sel, value, (("sa", value),), seed)

    rng = np.random.Generator(np.random.PCG64(seed))
    temperature = cfg.initial_temperature
    if temperature is None:
        temperature = auto_temperature(problem, rng)
    moves = cfg.moves_per_sweep or 4 * p.n_free
    n_draws = cfg.sweeps * moves
    lo, hi = p.n_forced, p.max_rank
    d = np.ascontiguousarray(problem.d)
    row_sums = np.ascontiguousarray(problem.row_sums)

    best_val, best_sel, best_key = math.inf, None, None
    for _ in range(cfg.restarts):
        start = _random_start(problem, rng)
        x = start.x
        sel_pos = (np.flatnonzero(x[lo:hi]) + lo).astype(np.int64)
        unsel_pos = (np.flatnonzero(x[lo:hi] == 0) + lo).astype(np.int64)
        g = d[:, np.flatnonzero(x)].sum(axis=1)
        out_draw = rng.integers(0, sel_pos.size, n_draws)
        in_draw = rng.integers(0, unsel_pos.size, n_draws)
        u_draw = rng.random(n_draws)
        current = objective(problem, start)
        pos = _anneal(d, row_sums, sel_pos, unsel_pos, g, lo, hi,
                      float(p.dissimilarity), float(p.centrality), float(temperature),
                      float(cfg.cooling_ratio), int(cfg.sweeps), int(moves),
                      out_draw, in_draw, u_draw, current)
        sel = Selection.from_indices(list(range(lo)) + sorted(int(i) for i in pos),
                                     p.n_candidates)
        value = objective(problem, sel)
        if _lex_better(value, sel.indices, best_val, best_key):
            best_val, best_sel, best_key = value, sel, sel.indices
    return SolveResult(best_sel, best_val, (("sa", best_val),), seed)


def post_process_swaps(problem, start, max_passes=50):
    """Pairwise swap descent.

    Scans selected free assets ``i`` and unselected free assets ``j`` in
    ascending order and swaps them exactly when the objective strictly
    decreases.  Passes repeat until one makes no swap or ``max_passes``
    is reached.
    """
    p = problem.params
    check_feasible(p, start)
    d, rs = problem.d, problem.row_sums
    lo, hi = p.n_forced, p.max_rank
    alpha, beta = p.dissimilarity, p.centrality

    sel = start
    x = start.x.copy()
    g = d[:, np.flatnonzero(x)].sum(axis=1)
    value = objective(problem, sel)
    swaps = []
    for _ in range(max_passes):
        changed = False
        for i in range(lo, hi):
            if not x[i]:
                continue
            for j in range(lo, hi):
                if x[j]:
                    continue
                delta = beta * (rs[j] - rs[i]) - alpha * (g[j] - d[j, i] - g[i])
                if delta >= _DELTA_TOL:
                    continue
                cand = apply_swap(sel, i, j)
                cand_value = objective(problem, cand)
                if cand_value < value:
                    swaps.append((i, j, value, cand_value))
                    sel, value = cand, cand_value
                    x[i], x[j] = 0, 1
                    g += d[:, j] - d[:, i]
                    changed = True
                    break
        if not changed:
            break
    return SolveResult(sel, value, (("post_process", value),), None, tuple(swaps))


def solve(problem, cfg=None):
    """Annealing followed by swap descent."""
    cfg = cfg or SaConfig()
    sa = solve_sa(problem, cfg)
    post = post_process_swaps(problem, sa.selection, cfg.max_passes)
    return SolveResult(
        post.selection,
        post.objective,
        (("sa", sa.objective), ("post_process", post.objective)),
        sa.seed_used,
        post.swaps,
    )
