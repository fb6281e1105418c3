"""Restricted transportation subproblems and the exact full-problem solver.

Fixing every plan entry outside a working set and substituting
``gamma' = x + d`` turns the block subproblem into a small transportation
problem whose row/column budgets are the current plan's masses inside the
set. It is solved by a spanning-tree network simplex warm-started from the
current plan.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._netsimplex import (STATUS_INEXACT, STATUS_OPTIMAL, STATUS_PIVOT_LIMIT,
                          transport_simplex)
from .core import (CostMatrix, OTInstance, TransportPlan, initial_plan_northwest,
                   objective)
from .working_set import WorkingSet

DEFAULT_TOL = 1e-9
BUDGET_TOL = 1e-10


class SubsolverError(RuntimeError):
    """Subproblem could not be solved; ``diagnostics`` describes the failure."""

    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


@dataclass
class RestrictedSubproblem:
    """Transportation problem on the arcs of a working set.

    ``row_ids``/``col_ids`` are the plan rows/columns with positive budget;
    arcs use positions into those arrays. ``flow0`` is the incoming plan on
    the arcs, which is feasible for the budgets by construction.
    """

    row_ids: np.ndarray
    col_ids: np.ndarray
    arc_row: np.ndarray
    arc_col: np.ndarray
    arc_cost: np.ndarray
    row_budget: np.ndarray
    col_budget: np.ndarray
    flow0: np.ndarray
    keep_mask: np.ndarray

    @property
    def num_arcs(self) -> int:
        return int(self.arc_row.size)

    @property
    def arcs(self) -> list[tuple[int, int, float]]:
        return [(int(self.row_ids[i]), int(self.col_ids[j]), float(c))
                for i, j, c in zip(self.arc_row, self.arc_col, self.arc_cost)]

    def incoming_value(self) -> float:
        return float(np.dot(self.arc_cost, self.flow0))


@dataclass
class SubSolution:
    flow: np.ndarray
    value: float
    status: str
    relative_gap: Optional[float] = None
    pivots: int = 0


def build_restricted(plan: TransportPlan, cost: CostMatrix, ws: WorkingSet) -> RestrictedSubproblem:
    if len(ws) == 0:
        raise ValueError("empty working set")
    n = plan.n
    inside = ws.contains(plan.rows, plan.cols)
    pr, pc, pv = plan.rows[inside], plan.cols[inside], plan.vals[inside]
    row_ids = np.unique(pr)
    col_ids = np.unique(pc)
    rb = np.bincount(np.searchsorted(row_ids, pr), weights=pv, minlength=row_ids.size)
    cb = np.bincount(np.searchsorted(col_ids, pc), weights=pv, minlength=col_ids.size)
    if row_ids.size == 0:
        z = np.zeros(0, dtype=np.int64)
        return RestrictedSubproblem(row_ids, col_ids, z, z, np.zeros(0), rb, cb,
                                    np.zeros(0), ~inside)
    gi, gj = ws.arcs_among(row_ids, col_ids)
    lin = gi * n + gj
    flow0 = np.zeros(lin.size)
    # plan cells inside the set are arcs by definition
    flow0[np.searchsorted(lin, pr * n + pc)] = pv
    return RestrictedSubproblem(
        row_ids, col_ids,
        np.searchsorted(row_ids, gi), np.searchsorted(col_ids, gj),
        cost.take(gi, gj), rb, cb, flow0, ~inside)


def _run_simplex(sub: RestrictedSubproblem, eps: float, tol: float, max_pivots=None):
    A = sub.num_arcs
    bland_after = 10 * A
    if max_pivots is None:
        max_pivots = 100 * A + 10 * (sub.row_ids.size + sub.col_ids.size) + 1000
    return transport_simplex(sub.row_ids.size, sub.col_ids.size, sub.arc_row, sub.arc_col,
                             sub.arc_cost, sub.flow0, tol, eps, bland_after, max_pivots)


def solve_transportation(sub: RestrictedSubproblem, mode: str = "exact", eps: float = 0.0,
                         tol: float = DEFAULT_TOL, max_pivots=None) -> SubSolution:
    """Solve ``sub`` exactly, or stop early once ``c^T d <= (1 - eps) c^T d*``.

    The inexact stopping test uses a weak-duality bound on ``c^T d*``, so it
    is certified without knowing the optimum.
    """
    if mode not in ("exact", "inexact"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "inexact" and not (0.0 <= eps < 1.0):
        raise ValueError("inexact relative gap must lie in [0, 1)")
    total_r, total_c = sub.row_budget.sum(), sub.col_budget.sum()
    if abs(total_r - total_c) > BUDGET_TOL:
        raise SubsolverError("unbalanced budgets",
                             {"row_total": float(total_r), "col_total": float(total_c)})
    if sub.num_arcs == 0:
        return SubSolution(np.zeros(0), 0.0, "optimal")
    use_eps = eps if (mode == "inexact" and eps > 0.0) else -1.0
    flow, status, pivots = _run_simplex(sub, use_eps, tol, max_pivots)
    if status == STATUS_PIVOT_LIMIT:
        raise SubsolverError("pivot limit exceeded (possible cycling)", {
            "pivots": int(pivots), "arcs": sub.num_arcs,
            "rows": int(sub.row_ids.size), "cols": int(sub.col_ids.size)})
    value = float(np.dot(sub.arc_cost, flow))
    if status == STATUS_INEXACT:
        return SubSolution(flow, value, "inexact", relative_gap=eps, pivots=int(pivots))
    return SubSolution(flow, value, "optimal", pivots=int(pivots))


def reduced_costs(sub: RestrictedSubproblem, flow: np.ndarray) -> np.ndarray:
    """Reduced costs of every arc w.r.t. potentials fitted on the positive-flow arcs.

    Potentials are obtained by least squares over the support (a spanning
    forest for basic solutions), which is enough for optimality checks in tests.
    """
    nr, nc = sub.row_ids.size, sub.col_ids.size
    on = flow > 0
    m = np.zeros((int(on.sum()) + 1, nr + nc))
    k = np.arange(int(on.sum()))
    m[k, sub.arc_row[on]] = 1.0
    m[k, nr + sub.arc_col[on]] = 1.0
    m[-1, 0] = 1.0
    rhs = np.concatenate([sub.arc_cost[on], [0.0]])
    pot, *_ = np.linalg.lstsq(m, rhs, rcond=None)
    return sub.arc_cost - pot[sub.arc_row] - pot[nr + sub.arc_col]


def solve_full(instance: OTInstance, tol: float = DEFAULT_TOL) -> tuple[TransportPlan, float]:
    """Exact optimal plan and value of the full problem (dense arc set)."""
    n = instance.n
    start = initial_plan_northwest(instance)
    rows = np.flatnonzero(instance.r1 > 0)
    cols = np.flatnonzero(instance.r2 > 0)
    gi = np.repeat(rows, cols.size)
    gj = np.tile(cols, rows.size)
    lin = gi * n + gj
    flow0 = np.zeros(lin.size)
    flow0[np.searchsorted(lin, start.linear)] = start.vals
    sub = RestrictedSubproblem(rows, cols, np.repeat(np.arange(rows.size), cols.size),
                               np.tile(np.arange(cols.size), rows.size),
                               instance.cost.block(rows, cols).ravel(),
                               instance.r1[rows], instance.r2[cols], flow0,
                               np.zeros(0, dtype=bool))
    sol = solve_transportation(sub, "exact", tol=tol)
    plan = TransportPlan(n, gi, gj, sol.flow)
    return plan, objective(plan, instance.cost)
