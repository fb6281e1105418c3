"""Reference methods: log-domain Sinkhorn, feasibility rounding, 1-D closed form."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import OTInstance, Trajectory, TransportPlan, feasibility_error, northwest_corner

GAMMA_MIN = 1e-12
# deficits below this are treated as already satisfied
DEFICIT_TOL = 1e-15


@dataclass
class DualPotentials:
    f: np.ndarray
    g: np.ndarray
    epsilon: float


def round_dense(F: np.ndarray, r1, r2) -> np.ndarray:
    """Row/column down-scaling followed by a rank-one correction (dense input)."""
    F = np.asarray(F, dtype=np.float64)
    if np.any(F < 0):
        raise ValueError("rounding requires a nonnegative matrix")
    r1 = np.asarray(r1, dtype=np.float64)
    r2 = np.asarray(r2, dtype=np.float64)
    rs = F.sum(axis=1)
    x = np.where(rs > r1, r1 / np.where(rs > 0, rs, 1.0), 1.0)
    G = F * x[:, None]
    cs = G.sum(axis=0)
    y = np.where(cs > r2, r2 / np.where(cs > 0, cs, 1.0), 1.0)
    G = G * y[None, :]
    er = r1 - G.sum(axis=1)
    ec = r2 - G.sum(axis=0)
    er[er < DEFICIT_TOL] = 0.0
    ec[ec < DEFICIT_TOL] = 0.0
    tot = er.sum()
    if tot > 0:
        G = G + np.outer(er, ec) / tot
    return G


def round_to_feasible(plan: TransportPlan, r1, r2) -> TransportPlan:
    """Sparse version of :func:`round_dense`; feasible inputs come back unchanged."""
    if np.any(plan.vals < 0):
        raise ValueError("rounding requires a nonnegative plan")
    r1 = np.asarray(r1, dtype=np.float64)
    r2 = np.asarray(r2, dtype=np.float64)
    rs = plan.row_sums()
    x = np.where(rs > r1, r1 / np.where(rs > 0, rs, 1.0), 1.0)
    vals = plan.vals * x[plan.rows]
    cs = np.bincount(plan.cols, weights=vals, minlength=plan.n)
    y = np.where(cs > r2, r2 / np.where(cs > 0, cs, 1.0), 1.0)
    vals = vals * y[plan.cols]
    er = r1 - np.bincount(plan.rows, weights=vals, minlength=plan.n)
    ec = r2 - np.bincount(plan.cols, weights=vals, minlength=plan.n)
    er[er < DEFICIT_TOL] = 0.0
    ec[ec < DEFICIT_TOL] = 0.0
    tot = er.sum()
    if tot <= 0:
        return TransportPlan(plan.n, plan.rows, plan.cols, vals)
    ri = np.flatnonzero(er)
    cj = np.flatnonzero(ec)
    corr = np.outer(er[ri], ec[cj]).ravel() / tot
    return TransportPlan(plan.n,
                         np.concatenate([plan.rows, np.repeat(ri, cj.size)]),
                         np.concatenate([plan.cols, np.tile(cj, ri.size)]),
                         np.concatenate([vals, corr]))


def _half_step(K, b, log_r, out, buf):
    """out_i = log_r_i - logsumexp_j(K_ij + b_j), max-shifted, in units of gamma."""
    np.add(K, b[None, :], out=buf)
    mx = buf.max(axis=1)
    np.subtract(buf, mx[:, None], out=buf)
    # terms below e^-700 cannot change the sum; clamping avoids slow denormal exps
    np.maximum(buf, -700.0, out=buf)
    np.exp(buf, out=buf)
    np.subtract(log_r, mx + np.log(buf.sum(axis=1)), out=out)


def sinkhorn_logdomain(instance: OTInstance, epsilon_accuracy: float, max_iters: int,
                       record_every: int = 1, return_potentials: bool = False):
    """Entropic OT by log-domain Sinkhorn with regularization ``eps / (4 log n)``.

    Row potentials are updated first, then column potentials. Each recorded
    iterate is rounded to the coupling polytope for evaluation only.
    """
    r1, r2 = instance.r1, instance.r2
    if np.any(r1 <= 0) or np.any(r2 <= 0):
        raise ValueError("Sinkhorn needs strictly positive marginals; drop empty points first")
    if epsilon_accuracy <= 0:
        raise ValueError("epsilon_accuracy must be positive")
    n = instance.n
    gamma = epsilon_accuracy / (4.0 * math.log(n)) if n > 1 else epsilon_accuracy
    if gamma < GAMMA_MIN:
        raise ValueError(f"regularization {gamma:.3g} below {GAMMA_MIN}")
    C = instance.cost.dense()
    # potentials are kept in units of gamma: f = gamma * a, g = gamma * b
    K = np.ascontiguousarray(-C / gamma)
    KT = np.ascontiguousarray(K.T)
    log_r1, log_r2 = np.log(r1), np.log(r2)
    a = np.zeros(n)
    b = np.zeros(n)
    buf = np.empty_like(K)
    traj = Trajectory(metadata={"update_order": "row-first", "gamma": gamma})
    G = None
    for k in range(1, max_iters + 1):
        _half_step(K, b, log_r1, a, buf)
        _half_step(KT, a, log_r2, b, buf)
        if k % record_every == 0 or k == max_iters:
            G = round_dense(np.exp(a[:, None] + b[None, :] + K), r1, r2)
            plan = TransportPlan.from_dense(G, prune_tol=0.0)
            traj.record(k, float(np.sum(C * G)), feasibility_error(plan, r1, r2),
                        plan.nnz, "sinkhorn")
    plan = TransportPlan.from_dense(G, prune_tol=0.0)
    if return_potentials:
        return plan, traj, DualPotentials(gamma * a, gamma * b, gamma)
    return plan, traj


def closed_form_1d(x_support, x_weights, y_support, y_weights) -> tuple[TransportPlan, float]:
    """Monotone (sorted north-west) coupling for squared distance on the line."""
    xs = np.asarray(x_support, dtype=np.float64).ravel()
    ys = np.asarray(y_support, dtype=np.float64).ravel()
    xw = np.asarray(x_weights, dtype=np.float64).ravel()
    yw = np.asarray(y_weights, dtype=np.float64).ravel()
    if xs.size != xw.size or ys.size != yw.size or xs.size != ys.size:
        raise ValueError("support and weight sizes disagree")
    if np.any(xw < 0) or np.any(yw < 0):
        raise ValueError("weights must be nonnegative")
    if abs(xw.sum() - yw.sum()) > 1e-12 * max(1.0, xw.sum()):
        raise ValueError("unbalanced weights")
    rows, cols, vals = northwest_corner(xw, yw, np.argsort(xs, kind="stable"),
                                        np.argsort(ys, kind="stable"))
    plan = TransportPlan(xs.size, rows, cols, vals)
    value = float(np.dot((xs[plan.rows] - ys[plan.cols]) ** 2, plan.vals))
    return plan, value

