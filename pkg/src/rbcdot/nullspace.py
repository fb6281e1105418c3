"""Null-space directions of the transportation constraint matrix.

Directions ``D`` (``n x n``, zero row and column sums) decompose into signed
simple cycles of the bipartite row/column graph. The cycle walk alternates:
from a column take a positive cell to a row, from a row take a negative cell
to a column, until a row or column repeats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

NULL_TOL = 1e-10
ZERO_TOL = 1e-12


class NullSpaceError(ValueError):
    pass


@dataclass
class ElementaryMatrix:
    """``scale`` times an alternating +1/-1 pattern on a simple cycle of ``2t`` cells.

    ``cycle[0]`` carries ``+scale``; consecutive cells alternately share a
    row and a column, and the last cell shares a column with the first.
    """

    n: int
    scale: float
    cycle: list

    @property
    def t(self) -> int:
        return len(self.cycle) // 2

    def signs(self) -> np.ndarray:
        return np.where(np.arange(len(self.cycle)) % 2 == 0, 1.0, -1.0)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        for (i, j), s in zip(self.cycle, self.signs()):
            out[i, j] = s * self.scale
        return out

    def is_simple_cycle(self) -> bool:
        c = self.cycle
        k = len(c)
        if k < 4 or k % 2:
            return False
        if len(set(c)) != k:
            return False
        rows = [c[q][0] for q in range(0, k, 2)]
        cols = [c[q][1] for q in range(0, k, 2)]
        if len(set(rows)) != k // 2 or len(set(cols)) != k // 2:
            return False
        for q in range(k):
            a, b = c[q], c[(q + 1) % k]
            shared = 0 if q % 2 == 0 else 1
            if a[shared] != b[shared]:
                return False
        return True


def is_null_direction(D, tol: float = NULL_TOL) -> bool:
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        return False
    return bool(np.all(np.abs(D.sum(axis=0)) <= tol) and np.all(np.abs(D.sum(axis=1)) <= tol))


def find_elementary_conformal(D, tol: float = ZERO_TOL, return_visits: bool = False):
    """Elementary matrix conformal to the nonzero null direction ``D``.

    Each step scans one row or column for the smallest-index cell of the
    required sign, so at most ``2n`` scans of ``n`` cells are made. With
    ``return_visits`` the number of inspected cells is returned as well.
    """
    D = np.asarray(D, dtype=np.float64)
    n = D.shape[0]
    if not is_null_direction(D):
        raise NullSpaceError("input is not in the null space")
    pos = np.argwhere(D > tol)
    if pos.size == 0:
        raise NullSpaceError("zero direction has no elementary part")
    visits = 0
    i0, j0 = (int(v) for v in pos[0])
    # path of cells; vertex order: col j0, row i0, col j1, row i1, ...
    cells = [(i0, j0)]
    seen_col = {j0: 0}
    seen_row = {i0: 1}
    row = i0
    while True:
        line = D[row]
        neg = np.flatnonzero(line < -tol)
        visits += int(neg[0]) + 1 if neg.size else n
        if neg.size == 0:
            raise NullSpaceError("row without a negative cell; not a null direction")
        j = int(neg[0])
        cells.append((row, j))
        if j in seen_col:
            start = seen_col[j]
            break
        seen_col[j] = len(cells)
        col = D[:, j]
        cand = np.flatnonzero(col > tol)
        visits += int(cand[0]) + 1 if cand.size else n
        if cand.size == 0:
            raise NullSpaceError("column without a positive cell; not a null direction")
        i = int(cand[0])
        cells.append((i, j))
        if i in seen_row:
            start = seen_row[i]
            break
        seen_row[i] = len(cells)
        row = i
    cyc = cells[start:]
    if D[cyc[0]] < 0:
        # rotate so the first cell is positive
        cyc = cyc[1:] + cyc[:1]
    elem = ElementaryMatrix(n, 1.0, cyc)
    return (elem, visits) if return_visits else elem


def is_conformal(part, D, tol: float = ZERO_TOL) -> bool:
    """``supp(part) <= supp(D)`` with cellwise sign agreement."""
    P = part.to_dense() if isinstance(part, ElementaryMatrix) else np.asarray(part)
    D = np.asarray(D)
    nz = np.abs(P) > tol
    return bool(np.all(np.sign(P[nz]) == np.sign(D[nz])) and np.all(np.abs(D[nz]) > tol))


def conformal_realization(D, tol: float = ZERO_TOL, return_visits: bool = False):
    """Decompose ``D`` into conformal elementary parts that sum to it."""
    R = np.array(D, dtype=np.float64)
    if not is_null_direction(R):
        raise NullSpaceError("input is not in the null space")
    R[np.abs(R) <= tol] = 0.0
    parts = []
    visits = []
    while np.any(R != 0.0):
        e, v = find_elementary_conformal(R, tol, return_visits=True)
        visits.append(v)
        idx = tuple(np.array(e.cycle).T)
        mags = np.abs(R[idx])
        alpha = float(mags.min())
        parts.append(ElementaryMatrix(e.n, alpha, e.cycle))
        R[idx] -= alpha * e.signs()
        # the minimizing cells leave the support exactly
        R[idx[0][mags == alpha], idx[1][mags == alpha]] = 0.0
        R[np.abs(R) <= tol] = 0.0
    return (parts, visits) if return_visits else parts


def rate_bound_log(n: int, p: int, l: int, s: float) -> tuple[float, float, float]:
    """Natural logs of the lower bounds on ``v`` for uniform, band and mixed rules.

    uniform: ``1 / (C(N, l) (N - l + 1))`` with ``N = n^2``;
    band: ``n (p - 2) / ((n^2 - 3) (n!)^2)``; mixed: ``s`` times band.
    """
    if not (3 <= p <= n):
        raise ValueError("need 3 <= p <= n")
    N = n * n
    if not (2 * n <= l <= N):
        raise ValueError("need 2n <= l <= n^2")
    if not (0.0 < s <= 1.0):
        raise ValueError("need 0 < s <= 1")
    log_binom = gammaln(N + 1) - gammaln(l + 1) - gammaln(N - l + 1)
    log_uniform = -(log_binom + math.log(N - l + 1))
    log_band = math.log(n * (p - 2)) - math.log(N - 3) - 2.0 * gammaln(n + 1)
    return float(log_uniform), float(log_band), float(log_band + math.log(s))
