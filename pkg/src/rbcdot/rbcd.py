"""Random block coordinate descent drivers for exact discrete OT.

Variants: ``rbcd0`` (uniform working sets), ``db`` (diagonal band), ``sdb``
(band with probability ``s``, else submatrix) and ``arbcd`` (``sdb`` plus a
momentum working set drawn every ``T`` iterations from the support of the
recent displacement). Any variant can run inexactly, stopping each
subproblem at a relative gap ``eps_k``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import zeta

from .baselines import round_to_feasible
from .core import (OTInstance, Trajectory, TransportPlan, default_initial_plan,
                   feasibility_error, objective)
from .subsolver import DEFAULT_TOL, SubsolverError, build_restricted, solve_transportation
from .working_set import (CellSupport, SelectorConfig, WorkingSet, select_band,
                          select_momentum, select_sdb, select_uniform, spawn_rngs)

log = logging.getLogger(__name__)

VARIANTS = ("rbcd0", "db", "sdb", "arbcd")


class ConfigError(ValueError):
    pass


class RunAborted(RuntimeError):
    """A subproblem failed; carries the partial trajectory and last good plan."""

    def __init__(self, msg, trajectory, plan, cause):
        super().__init__(msg)
        self.trajectory = trajectory
        self.plan = plan
        self.cause = cause


@dataclass
class InexactSchedule:
    """Per-iteration subproblem tolerance ``eps_k``.

    ``constant``: ``eps_k = eps0``; ``power``: ``eps_k = eps0 / k**alpha``
    (``k`` counted from 1). ``feas0``/``feas_alpha`` inject a synthetic
    marginal violation of size ``feas0 / k**feas_alpha`` per step, which is
    off by default because simplex steps conserve mass exactly.
    """

    eps0: float = 0.0
    kind: str = "constant"
    alpha: float = 2.0
    feas0: float = 0.0
    feas_alpha: float = 2.0

    def __post_init__(self):
        if self.kind not in ("constant", "power"):
            raise ConfigError(f"unknown schedule {self.kind!r}")
        if not (0.0 <= self.eps0 < 1.0):
            raise ConfigError("eps0 must lie in [0, 1)")
        if self.kind == "power" and self.alpha <= 1.0:
            raise ConfigError("power schedule needs alpha > 1")
        if self.feas0 < 0:
            raise ConfigError("feas0 must be nonnegative")

    def eps(self, k: int) -> float:
        if self.kind == "constant":
            return self.eps0
        return self.eps0 / float(k + 1) ** self.alpha

    def feas(self, k: int) -> float:
        if self.feas0 == 0.0:
            return 0.0
        return self.feas0 / float(k + 1) ** self.feas_alpha

    def feas_budget(self) -> float:
        """Upper bound on the summed synthetic violations."""
        if self.feas0 == 0.0:
            return 0.0
        return self.feas0 * float(zeta(self.feas_alpha))


@dataclass
class RunConfig:
    selector: SelectorConfig
    variant: str = "arbcd"
    inexact: Optional[InexactSchedule] = None
    max_iters: int = 5000
    f_star: Optional[float] = None
    target_gap: Optional[float] = None
    relative_gap: bool = True
    round_each_iter: bool = False
    seed: Optional[int] = None
    init: str = "auto"
    tol: float = DEFAULT_TOL
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.target_gap is not None and self.f_star is None:
            raise ConfigError("target_gap requires f_star")
        self.selector.validate()

    @property
    def run_seed(self) -> int:
        return self.selector.seed if self.seed is None else self.seed


@dataclass
class MomentumState:
    x_start: TransportPlan
    x_end: TransportPlan
    acc: bool = False


def step(plan: TransportPlan, cost, ws: WorkingSet, mode: str = "exact", eps: float = 0.0,
         tol: float = DEFAULT_TOL):
    """One block update: re-solve the plan on ``ws`` and return ``(plan', q)``.

    ``q = objective(plan') - objective(plan) <= 0``; marginals are unchanged.
    """
    sub = build_restricted(plan, cost, ws)
    if sub.num_arcs == 0:
        return plan, 0.0
    sol = solve_transportation(sub, mode, eps=eps, tol=tol)
    q = sol.value - sub.incoming_value()
    if q >= 0.0:
        # d = 0 is always admissible; never accept a float-noise ascent
        return plan, 0.0
    new = TransportPlan(plan.n,
                        np.concatenate([plan.rows[sub.keep_mask], sub.row_ids[sub.arc_row]]),
                        np.concatenate([plan.cols[sub.keep_mask], sub.col_ids[sub.arc_col]]),
                        np.concatenate([plan.vals[sub.keep_mask], sol.flow]))
    return new, q


def diff_support(a: TransportPlan, b: TransportPlan) -> CellSupport:
    """Cells where two plans differ."""
    la, lb = a.linear, b.linear
    lin = np.union1d(la, lb)
    va = np.zeros(lin.size)
    vb = np.zeros(lin.size)
    va[np.searchsorted(lin, la)] = a.vals
    vb[np.searchsorted(lin, lb)] = b.vals
    d = lin[va != vb]
    return CellSupport(a.n, np.column_stack([d // a.n, d % a.n]))


def _perturb(plan: TransportPlan, ws: WorkingSet, amount: float, r1, r2) -> TransportPlan:
    """Scale the plan on ``ws`` so the marginal error grows by ``amount``."""
    inside = ws.contains(plan.rows, plan.cols)
    if not inside.any() or amount <= 0:
        return plan
    rs = np.bincount(plan.rows[inside], weights=plan.vals[inside], minlength=plan.n)
    cs = np.bincount(plan.cols[inside], weights=plan.vals[inside], minlength=plan.n)
    delta = amount / (np.linalg.norm(rs) + np.linalg.norm(cs))
    vals = plan.vals.copy()
    vals[inside] *= 1.0 + delta
    return TransportPlan(plan.n, plan.rows, plan.cols, vals)


def _gap_reached(f: float, cfg: RunConfig) -> bool:
    if cfg.target_gap is None:
        return False
    gap = f - cfg.f_star
    if cfg.relative_gap:
        return gap <= cfg.target_gap * abs(cfg.f_star)
    return gap <= cfg.target_gap


def _select(cfg: RunConfig, k: int, rng, mom_rng, state: Optional[MomentumState]):
    sel = cfg.selector
    if cfg.variant == "rbcd0":
        return select_uniform(sel, rng)
    if cfg.variant == "db":
        return select_band(sel, rng)
    if cfg.variant == "sdb":
        return select_sdb(sel, rng)
    state.acc = False
    if (k + 1) % sel.T == 0:
        support = diff_support(state.x_end, state.x_start)
        if len(support) > sel.m * sel.m:
            state.acc = True
            return select_momentum(support, sel.m, mom_rng)
    return select_sdb(sel, rng)


def run(instance: OTInstance, config: RunConfig, plan0: Optional[TransportPlan] = None):
    """Run the configured variant; returns ``(final plan, Trajectory)``."""
    config.validate()
    if config.selector.n != instance.n:
        raise ConfigError("selector n does not match the instance")
    if plan0 is None:
        plan0, init_kind = default_initial_plan(instance, config.init)
        config.metadata.setdefault("init", init_kind)
    if config.selector.warnings:
        config.metadata.setdefault("warnings", list(config.selector.warnings))
        for w in config.selector.warnings:
            log.warning(w)
    rng, mom_rng = spawn_rngs(config.run_seed, 2)
    cost, r1, r2 = instance.cost, instance.r1, instance.r2
    sched = config.inexact
    mode = "inexact" if sched is not None else "exact"

    def record(k, p, f, kind):
        if config.round_each_iter:
            p = round_to_feasible(p, r1, r2)
            f = objective(p, cost)
        traj.record(k, f, feasibility_error(p, r1, r2), p.nnz, kind)

    plan = plan0
    f = objective(plan, cost)
    traj = Trajectory()
    record(0, plan, f, "init")
    state = MomentumState(plan, plan) if config.variant == "arbcd" else None
    for k in range(config.max_iters):
        if _gap_reached(f, config):
            break
        ws = _select(config, k, rng, mom_rng, state)
        eps = sched.eps(k) if sched is not None else 0.0
        try:
            new, q = step(plan, cost, ws, mode, eps=eps, tol=config.tol)
        except SubsolverError as exc:
            raise RunAborted(f"subproblem failed at iteration {k}", traj, plan, exc) from exc
        if sched is not None and sched.feas(k) > 0:
            new = _perturb(new, ws, sched.feas(k), r1, r2)
            q = objective(new, cost) - f
        plan = new
        f += q
        if state is not None:
            state.x_end = plan
            if state.acc:
                state.x_start = plan
        record(k + 1, plan, f, ws.kind)
    return plan, traj


def run_arbcd(instance: OTInstance, config: RunConfig, plan0=None):
    if config.variant != "arbcd":
        raise ConfigError("run_arbcd requires variant='arbcd'")
    return run(instance, config, plan0)


def run_with_rounding(instance: OTInstance, config: RunConfig, plan0=None):
    if not config.round_each_iter:
        raise ConfigError("run_with_rounding requires round_each_iter=True")
    return run(instance, config, plan0)


def default_selector(n: int, m: Optional[int] = None, **kw) -> SelectorConfig:
    """Selector with the experiment defaults (``m ~ sqrt(10 n)``, ``p = m^2 // n``)."""
    return SelectorConfig(n=n, m=m, **kw)
