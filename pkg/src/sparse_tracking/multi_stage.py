"""Multi-stage selection: independent stage solves, union, MC-rank truncation."""

from __future__ import annotations

from dataclasses import dataclass

from .exceptions import SparseTrackingError, StageError
from .selection import StagePlan, build_problem
from .solver import SaConfig, solve, solve_exact

__all__ = ["SelectedSet", "StagePlan", "run_stages", "union_and_truncate", "select"]


@dataclass(frozen=True)
class SelectedSet:
    """Selected MC-rank indices (0-based) with the stages that picked each one."""

    indices: tuple
    provenance: dict
    objectives: tuple = ()

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("indices must be strictly increasing")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(
            self, "provenance", {int(k): tuple(v) for k, v in self.provenance.items()}
        )

    def __len__(self):
        return len(self.indices)

    def __contains__(self, i):
        return i in self.provenance

    @classmethod
    def from_indices(cls, indices, stage=1):
        idx = sorted(set(int(i) for i in indices))
        return cls(tuple(idx), {i: (stage,) for i in idx})

    def ids(self, mc_rank_order):
        return [mc_rank_order[i] for i in self.indices]


def run_stages(plan, d, cfg=None, exact=False):
    """Solve every stage of ``plan`` on ``d`` independently (no warm starts)."""
    cfg = cfg or SaConfig()
    results = []
    for number, params in enumerate(plan.stages, 1):
        try:
            problem = build_problem(d, params)
            res = solve_exact(problem) if exact else solve(problem, cfg)
        except SparseTrackingError as exc:
            raise StageError(number, exc) from exc
        idx = res.selection.indices
        results.append(SelectedSet(idx, {i: (number,) for i in idx}, (res.objective,)))
    return results


def union_and_truncate(stage_sets, m_star):
    """Union of the stage sets, keeping only the ``m_star`` smallest MC-rank indices."""
    if not stage_sets:
        raise ValueError("at least one stage set is required")
    provenance = {}
    for s in stage_sets:
        for i in s.indices:
            provenance.setdefault(i, set()).update(s.provenance.get(i, ()))
    kept = sorted(provenance)[:m_star]
    objectives = tuple(v for s in stage_sets for v in s.objectives)
    return SelectedSet(tuple(kept), {i: tuple(sorted(provenance[i])) for i in kept}, objectives)


def select(plan, d, cfg=None, exact=False):
    """Run all stages and return the truncated union."""
    return union_and_truncate(run_stages(plan, d, cfg, exact), plan.m_star)
