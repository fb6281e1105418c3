"""Problem data model: marginals, costs, sparse transport plans, metrics."""
from __future__ import annotations

from time import perf_counter
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

PRUNE_TOL = 1e-14
MASS_RTOL = 1e-12


class DimensionError(ValueError):
    """Raised when marginals, costs and plans disagree in size."""


def check_marginal(weights, total: Optional[float] = 1.0, name: str = "marginal") -> np.ndarray:
    """Validate a discrete marginal and return it as a float64 vector.

    ``total=None`` skips the mass check (only nonnegativity is enforced).
    """
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.size < 1:
        raise ValueError(f"{name} must have at least one entry")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError(f"{name} must be finite and nonnegative")
    if total is not None and abs(w.sum() - total) > MASS_RTOL * max(1.0, abs(total)):
        raise ValueError(f"{name} sums to {w.sum()!r}, expected {total!r}")
    return w


def _pairwise_power(src: np.ndarray, dst: np.ndarray, p_exp: float) -> np.ndarray:
    diff = src[:, None, :] - dst[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    if p_exp == 2:
        return sq
    return np.sqrt(sq) ** p_exp


def _as_points(pts) -> np.ndarray:
    a = np.asarray(pts, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    return a


class CostMatrix:
    """Square nonnegative cost matrix, either stored densely or evaluated lazily.

    A lazy cost keeps only the two point sets and evaluates
    ``scale * ||src_i - dst_j||**p_exp`` on demand, so large instances never
    materialize an ``n x n`` array. ``raw_max`` is the largest entry before
    normalization (the ``C_max`` used to report gaps in original units).
    """

    def __init__(self, entries=None, *, normalized: bool = False, src=None, dst=None,
                 p_exp: float = 2.0, scale: float = 1.0, raw_max: Optional[float] = None):
        if entries is None and (src is None or dst is None):
            raise ValueError("need either dense entries or both point sets")
        self.p_exp = float(p_exp)
        self.scale = float(scale)
        self.normalized = bool(normalized)
        if entries is not None:
            c = np.asarray(entries, dtype=np.float64)
            if c.ndim != 2 or c.shape[0] != c.shape[1]:
                raise DimensionError("cost matrix must be square")
            if not np.all(np.isfinite(c)) or np.any(c < 0):
                raise ValueError("cost entries must be finite and nonnegative")
            self._dense = c
            self.src = self.dst = None
            self.n = c.shape[0]
        else:
            self._dense = None
            self.src, self.dst = _as_points(src), _as_points(dst)
            if self.src.shape != self.dst.shape:
                raise DimensionError("point sets must have equal shape")
            self.n = self.src.shape[0]
        self.raw_max = float(raw_max) if raw_max is not None else None
        if self.normalized and abs(self.max() - 1.0) > 1e-12:
            raise ValueError("normalized cost must have max entry 1")

    # -- constructors -------------------------------------------------
    @classmethod
    def from_points(cls, src, dst, p_exp: float = 2.0, normalize: bool = True,
                    lazy: bool = False) -> "CostMatrix":
        """Cost ``||src_i - dst_j||**p_exp``, divided by its max entry if ``normalize``."""
        s, d = _as_points(src), _as_points(dst)
        if s.shape[0] == 0 or d.shape[0] == 0:
            raise ValueError("empty point set")
        if s.shape[1] != d.shape[1]:
            raise DimensionError("points must share dimensionality")
        if lazy:
            raw = cls(src=s, dst=d, p_exp=p_exp)
            cmax = raw._lazy_max()
            scale = 1.0 / cmax if (normalize and cmax > 0) else 1.0
            return cls(src=s, dst=d, p_exp=p_exp, scale=scale,
                       normalized=normalize and cmax > 0, raw_max=cmax)
        c = _pairwise_power(s, d, p_exp)
        cmax = float(c.max())
        if normalize and cmax > 0:
            c = c / cmax
        return cls(c, normalized=normalize and cmax > 0, raw_max=cmax)

    # -- access -------------------------------------------------------
    @property
    def is_lazy(self) -> bool:
        return self._dense is None

    def _lazy_max(self) -> float:
        s, d = self.src, self.dst
        if s.shape[1] == 1:
            far = max(s.max() - d.min(), d.max() - s.min(), 0.0)
            return float(far ** self.p_exp)
        best = 0.0
        step = max(1, 2_000_000 // max(1, d.shape[0]))
        for lo in range(0, s.shape[0], step):
            best = max(best, float(_pairwise_power(s[lo:lo + step], d, self.p_exp).max()))
        return best

    def max(self) -> float:
        if self._dense is not None:
            return float(self._dense.max())
        return self.scale * self._lazy_max()

    def take(self, rows, cols) -> np.ndarray:
        """Entries at paired index arrays ``(rows[k], cols[k])``."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if self._dense is not None:
            return self._dense[rows, cols]
        diff = self.src[rows] - self.dst[cols]
        sq = np.einsum("ij,ij->i", diff, diff)
        val = sq if self.p_exp == 2 else np.sqrt(sq) ** self.p_exp
        return self.scale * val

    def block(self, rows, cols) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if self._dense is not None:
            return self._dense[np.ix_(rows, cols)]
        return self.scale * _pairwise_power(self.src[rows], self.dst[cols], self.p_exp)

    def dense(self) -> np.ndarray:
        if self._dense is not None:
            return self._dense
        idx = np.arange(self.n)
        return self.block(idx, idx)

    def __repr__(self):
        kind = "lazy" if self.is_lazy else "dense"
        return f"CostMatrix(n={self.n}, {kind}, normalized={self.normalized})"


class TransportPlan:
    """Sparse coupling in coordinate form with strictly positive stored masses.

    Entries are kept sorted by linear index ``row * n + col``; values at or
    below ``prune_tol`` are dropped on construction.
    """

    __slots__ = ("n", "rows", "cols", "vals")

    def __init__(self, n: int, rows, cols, vals, prune_tol: float = PRUNE_TOL,
                 _canonical: bool = False):
        self.n = int(n)
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=np.float64).ravel()
        if not _canonical:
            if not (rows.shape == cols.shape == vals.shape):
                raise DimensionError("rows, cols and vals must have equal length")
            if rows.size and (rows.min() < 0 or cols.min() < 0
                              or rows.max() >= n or cols.max() >= n):
                raise IndexError("plan index out of range")
            if np.any(vals < 0):
                raise ValueError("transport plan entries must be nonnegative")
            lin = rows * self.n + cols
            order = np.argsort(lin, kind="stable")
            lin, vals = lin[order], vals[order]
            if lin.size > 1 and np.any(lin[1:] == lin[:-1]):
                uniq, inv = np.unique(lin, return_inverse=True)
                vals = np.bincount(inv, weights=vals, minlength=uniq.size)
                lin = uniq
            keep = vals > prune_tol
            lin, vals = lin[keep], vals[keep]
            rows, cols = lin // self.n, lin % self.n
        self.rows, self.cols, self.vals = rows, cols, vals

    @classmethod
    def from_dense(cls, mat, prune_tol: float = PRUNE_TOL) -> "TransportPlan":
        m = np.asarray(mat, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError("plan matrix must be square")
        r, c = np.nonzero(m > prune_tol)
        return cls(m.shape[0], r, c, m[r, c], prune_tol=prune_tol)

    @classmethod
    def from_dict(cls, n: int, entries: dict) -> "TransportPlan":
        if not entries:
            return cls.empty(n)
        keys = np.array(list(entries.keys()), dtype=np.int64).reshape(-1, 2)
        return cls(n, keys[:, 0], keys[:, 1], list(entries.values()))

    @classmethod
    def empty(cls, n: int) -> "TransportPlan":
        z = np.zeros(0, dtype=np.int64)
        return cls(n, z, z, np.zeros(0), _canonical=True)

    @property
    def nnz(self) -> int:
        return int(self.vals.size)

    @property
    def linear(self) -> np.ndarray:
        return self.rows * self.n + self.cols

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        out[self.rows, self.cols] = self.vals
        return out

    def to_dict(self) -> dict:
        return {(int(i), int(j)): float(v) for i, j, v in zip(self.rows, self.cols, self.vals)}

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.rows, weights=self.vals, minlength=self.n)

    def col_sums(self) -> np.ndarray:
        return np.bincount(self.cols, weights=self.vals, minlength=self.n)

    def total(self) -> float:
        return float(self.vals.sum())

    def scaled(self, factor: float) -> "TransportPlan":
        return TransportPlan(self.n, self.rows, self.cols, self.vals * factor)

    def __add__(self, other: "TransportPlan") -> "TransportPlan":
        if other.n != self.n:
            raise DimensionError("plans of different size")
        return TransportPlan(self.n, np.concatenate([self.rows, other.rows]),
                             np.concatenate([self.cols, other.cols]),
                             np.concatenate([self.vals, other.vals]))

    def __repr__(self):
        return f"TransportPlan(n={self.n}, nnz={self.nnz})"


@dataclass(frozen=True)
class OTInstance:
    """Balanced discrete OT problem ``min <C, X>`` s.t. ``X 1 = r1``, ``X^T 1 = r2``."""

    cost: CostMatrix
    r1: np.ndarray
    r2: np.ndarray

    def __post_init__(self):
        r1 = check_marginal(self.r1, total=None, name="r1")
        r2 = check_marginal(self.r2, total=None, name="r2")
        if not (r1.size == r2.size == self.cost.n):
            raise DimensionError(
                f"dimension mismatch: cost {self.cost.n}, r1 {r1.size}, r2 {r2.size}")
        if abs(r1.sum() - r2.sum()) > MASS_RTOL * max(1.0, r1.sum()):
            raise ValueError("unbalanced instance: marginal totals differ")
        object.__setattr__(self, "r1", r1)
        object.__setattr__(self, "r2", r2)

    @property
    def n(self) -> int:
        return self.cost.n


def initial_plan_product(instance: OTInstance) -> TransportPlan:
    """Product coupling ``r1 r2^T`` (dense support)."""
    r1, r2 = instance.r1, instance.r2
    if r1.size != r2.size:
        raise DimensionError("marginals differ in length")
    i = np.flatnonzero(r1)
    j = np.flatnonzero(r2)
    rows = np.repeat(i, j.size)
    cols = np.tile(j, i.size)
    vals = np.outer(r1[i], r2[j]).ravel()
    return TransportPlan(r1.size, rows, cols, vals, prune_tol=0.0)


def northwest_corner(a, b, row_order=None, col_order=None):
    """North-west corner walk; returns ``(rows, cols, vals)`` with at most 2n-1 cells."""
    a = np.array(a, dtype=np.float64)
    b = np.array(b, dtype=np.float64)
    ro = np.arange(a.size) if row_order is None else np.asarray(row_order)
    co = np.arange(b.size) if col_order is None else np.asarray(col_order)
    rows, cols, vals = [], [], []
    i = j = 0
    while i < ro.size and j < co.size:
        ri, cj = ro[i], co[j]
        if a[ri] <= 0:
            i += 1
            continue
        if b[cj] <= 0:
            j += 1
            continue
        t = min(a[ri], b[cj])
        rows.append(ri)
        cols.append(cj)
        vals.append(t)
        if a[ri] < b[cj]:
            b[cj] -= t
            a[ri] = 0.0
            i += 1
        elif b[cj] < a[ri]:
            a[ri] -= t
            b[cj] = 0.0
            j += 1
        else:
            a[ri] = b[cj] = 0.0
            i += 1
            j += 1
    return (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64),
            np.asarray(vals, dtype=np.float64))


def initial_plan_northwest(instance: OTInstance, row_order=None, col_order=None) -> TransportPlan:
    """North-west corner coupling over the given (default: natural) index order."""
    r1, r2 = instance.r1, instance.r2
    if r1.size != r2.size:
        raise DimensionError("marginals differ in length")
    rows, cols, vals = northwest_corner(r1, r2, row_order, col_order)
    return TransportPlan(r1.size, rows, cols, vals)


NORTHWEST_THRESHOLD = 4000


def default_initial_plan(instance: OTInstance, kind: str = "auto") -> tuple[TransportPlan, str]:
    """Pick the initializer; ``auto`` switches to north-west for large ``n``."""
    if kind == "auto":
        kind = "northwest" if instance.n >= NORTHWEST_THRESHOLD else "product"
    if kind == "product":
        return initial_plan_product(instance), kind
    if kind == "northwest":
        return initial_plan_northwest(instance), kind
    raise ValueError(f"unknown initializer {kind!r}")


def objective(plan: TransportPlan, cost: CostMatrix) -> float:
    if plan.n != cost.n:
        raise DimensionError("plan and cost differ in size")
    if plan.nnz == 0:
        return 0.0
    return float(np.dot(cost.take(plan.rows, plan.cols), plan.vals))


def feasibility_error(plan: TransportPlan, r1, r2) -> float:
    """``||X 1 - r1||_2 + ||X^T 1 - r2||_2``."""
    r1 = np.asarray(r1, dtype=np.float64)
    r2 = np.asarray(r2, dtype=np.float64)
    if not (plan.n == r1.size == r2.size):
        raise DimensionError("plan and marginals differ in size")
    return float(np.linalg.norm(plan.row_sums() - r1) + np.linalg.norm(plan.col_sums() - r2))


def estimate_vhat(gap_a: float, gap_b: float, span: int) -> float:
    """Per-iteration geometric decay ``1 - (gap_b / gap_a) ** (1 / span)``."""
    if gap_a <= 0 or gap_b <= 0:
        raise ValueError("gaps must be positive")
    if span < 1:
        raise ValueError("span must be a positive integer")
    return 1.0 - (gap_b / gap_a) ** (1.0 / span)


@dataclass
class Trajectory:
    """Per-iteration solver record (column-oriented)."""

    iteration: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    feasibility: list = field(default_factory=list)
    support: list = field(default_factory=list)
    kind: list = field(default_factory=list)
    time: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    _t0: float = field(default_factory=perf_counter, repr=False)

    def record(self, k: int, obj: float, feas: float, support: int, kind: str) -> None:
        if self.iteration and k <= self.iteration[-1]:
            raise ValueError("iteration indices must be strictly increasing")
        self.iteration.append(int(k))
        self.objective.append(float(obj))
        self.feasibility.append(float(feas))
        self.support.append(int(support))
        self.kind.append(kind)
        self.time.append(perf_counter() - self._t0)

    def __len__(self):
        return len(self.iteration)

    def gaps(self, f_star: float) -> np.ndarray:
        return np.asarray(self.objective) - f_star

    def rows(self) -> Iterable[tuple]:
        return zip(self.iteration, self.objective, self.feasibility, self.support,
                   self.kind, self.time)
