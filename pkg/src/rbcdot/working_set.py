"""Randomized working-set selection rules.

A :class:`WorkingSet` is kept implicit where possible (band and submatrix
sets are described by permutations / index subsets) so that membership tests
and arc enumeration never touch all ``n**2`` cells.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

KINDS = ("uniform", "band", "submatrix", "momentum")


class SelectionError(ValueError):
    pass


def make_rng(seed) -> np.random.Generator:
    """Counter-based (Philox) generator; ``seed`` may be an int or SeedSequence."""
    if isinstance(seed, np.random.Generator):
        return seed
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(ss))


def spawn_rngs(seed, count: int) -> list[np.random.Generator]:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.Philox(s)) for s in ss.spawn(count)]


class WorkingSet:
    """Set of plan cells over which one subproblem is solved."""

    def __init__(self, n: int, kind: str, *, cells=None, row_pos=None, col_pos=None,
                 width: int = 0, rows=None, cols=None):
        if kind not in KINDS:
            raise SelectionError(f"unknown working-set kind {kind!r}")
        self.n = int(n)
        self.kind = kind
        self._lin = None
        self._rowsel = self._colsel = None
        if kind == "band":
            # row_pos[i], col_pos[j]: band coordinates of row i / column j
            self.row_pos = np.asarray(row_pos, dtype=np.int64)
            self.col_pos = np.asarray(col_pos, dtype=np.int64)
            self.width = int(width)
        elif kind == "submatrix":
            self.sub_rows = np.sort(np.asarray(rows, dtype=np.int64))
            self.sub_cols = np.sort(np.asarray(cols, dtype=np.int64))
            self._rowsel = np.zeros(self.n, dtype=bool)
            self._rowsel[self.sub_rows] = True
            self._colsel = np.zeros(self.n, dtype=bool)
            self._colsel[self.sub_cols] = True
        else:
            c = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
            self._lin = np.unique(c[:, 0] * self.n + c[:, 1])

    def __len__(self) -> int:
        if self.kind == "band":
            return self.n * self.width
        if self.kind == "submatrix":
            return self.sub_rows.size * self.sub_cols.size
        return int(self._lin.size)

    def contains(self, rows, cols) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if self.kind == "band":
            return (self.row_pos[rows] - self.col_pos[cols]) % self.n < self.width
        if self.kind == "submatrix":
            return self._rowsel[rows] & self._colsel[cols]
        lin = rows * self.n + cols
        if self._lin.size == 0:
            return np.zeros(lin.shape, dtype=bool)
        k = np.searchsorted(self._lin, lin)
        k[k == self._lin.size] = 0
        return self._lin[k] == lin

    def arcs_among(self, rows, cols) -> tuple[np.ndarray, np.ndarray]:
        """Cells of the set inside ``rows x cols`` (sorted inputs), lexicographic order."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if self.kind == "submatrix":
            keep_r = rows[self._rowsel[rows]]
            keep_c = cols[self._colsel[cols]]
            return np.repeat(keep_r, keep_c.size), np.tile(keep_c, keep_r.size)
        if self.kind == "band":
            mask = (self.row_pos[rows][:, None] - self.col_pos[cols][None, :]) % self.n < self.width
            ii, jj = np.nonzero(mask)
            return rows[ii], cols[jj]
        r = self._lin // self.n
        c = self._lin % self.n
        keep = np.isin(r, rows) & np.isin(c, cols)
        return r[keep], c[keep]

    def cells(self) -> np.ndarray:
        """Materialized ``(k, 2)`` array of cells in lexicographic order."""
        idx = np.arange(self.n)
        if self.kind == "submatrix":
            r, c = self.arcs_among(self.sub_rows, self.sub_cols)
        elif self.kind == "band":
            r, c = self.arcs_among(idx, idx)
        else:
            r, c = self._lin // self.n, self._lin % self.n
        return np.column_stack([r, c])

    def cell_set(self) -> set:
        return {(int(i), int(j)) for i, j in self.cells()}

    def __repr__(self):
        return f"WorkingSet(n={self.n}, kind={self.kind}, size={len(self)})"


@dataclass
class SelectorConfig:
    """Parameters of the selection rules (0-based cells)."""

    n: int
    l: Optional[int] = None
    p: Optional[int] = None
    m: Optional[int] = None
    s: float = 0.1
    T: int = 10
    seed: int = 0
    warnings: tuple = ()

    def __post_init__(self):
        n = self.n
        if n < 1:
            raise SelectionError("n must be positive")
        warn = list(self.warnings)
        if self.m is None:
            self.m = min(n, max(2, math.ceil(math.sqrt(10 * n))))
        if self.p is None:
            p = self.m * self.m // n
            if p < 3:
                warn.append(f"band width floor(m^2/n)={p} < 3, clamped to 3")
            self.p = min(n, max(3, p))
        if self.l is None:
            self.l = min(n * n, max(2 * n, self.m * self.m))
        self.warnings = tuple(warn)
        self.validate()

    def validate(self) -> None:
        n = self.n
        if n >= 3 and not (3 <= self.p <= n):
            raise SelectionError(f"band width p={self.p} outside [3, {n}]")
        if n < 3 and self.p != n:
            raise SelectionError("band width must equal n when n < 3")
        if not (min(2, n) <= self.m <= n):
            raise SelectionError(f"submatrix side m={self.m} outside [2, {n}]")
        if not (min(2 * n, n * n) <= self.l <= n * n):
            raise SelectionError(f"uniform size l={self.l} outside [2n, n^2]")
        if not (0.0 <= self.s <= 1.0):
            raise SelectionError("s must lie in [0, 1]")
        if self.T < 2:
            raise SelectionError("acceleration interval T must be >= 2")


def select_uniform(cfg: SelectorConfig, rng) -> WorkingSet:
    """Uniform random ``l``-subset of all ``n**2`` cells."""
    n, l = cfg.n, cfg.l
    if not (1 <= l <= n * n):
        raise SelectionError(f"l={l} out of range")
    lin = rng.choice(n * n, size=l, replace=False)
    return WorkingSet(n, "uniform", cells=np.column_stack([lin // n, lin % n]))


def band_pattern(n: int, p: int) -> WorkingSet:
    """Cyclic band ``{(i, j): (i - j) mod n < p}`` of ``n*p`` cells."""
    if not (3 <= p <= n) and not (n < 3 and p == n):
        raise SelectionError(f"band width p={p} outside [3, {n}]")
    idx = np.arange(n)
    return WorkingSet(n, "band", row_pos=idx, col_pos=idx, width=p)


def select_band(cfg: SelectorConfig, rng) -> WorkingSet:
    """Band pattern with rows and columns independently permuted."""
    base = band_pattern(cfg.n, cfg.p)
    # inverse permutations map a row/column to its band coordinate
    row_pos = rng.permutation(cfg.n)
    col_pos = rng.permutation(cfg.n)
    return WorkingSet(cfg.n, "band", row_pos=row_pos, col_pos=col_pos, width=base.width)


def _subset(rng, n: int, m: int) -> np.ndarray:
    if m * 8 < n:
        return np.sort(rng.choice(n, size=m, replace=False))
    return np.sort(rng.permutation(n)[:m])


def select_submatrix(cfg: SelectorConfig, rng) -> WorkingSet:
    """Random ``m x m`` grid: independent row and column ``m``-subsets."""
    n, m = cfg.n, cfg.m
    if not (min(2, n) <= m <= n):
        raise SelectionError(f"m={m} out of range")
    return WorkingSet(n, "submatrix", rows=_subset(rng, n, m), cols=_subset(rng, n, m))


def select_sdb(cfg: SelectorConfig, rng) -> WorkingSet:
    """Band with probability ``s``, submatrix otherwise."""
    cfg.validate()
    if rng.random() < cfg.s:
        return select_band(cfg, rng)
    return select_submatrix(cfg, rng)


def select_momentum(diff_support, m: int, rng) -> WorkingSet:
    """Uniform ``m**2``-subset of the displacement support.

    ``diff_support`` is an ``(k, 2)`` array of cells (or iterable of pairs) and
    ``n`` is inferred from the optional ``n`` attribute or the max index.
    """
    n = getattr(diff_support, "n", None)
    cells = np.asarray(getattr(diff_support, "cells", diff_support), dtype=np.int64).reshape(-1, 2)
    if n is None:
        n = int(cells.max()) + 1 if cells.size else 0
    k = m * m
    if cells.shape[0] <= k:
        raise SelectionError(
            f"momentum support has {cells.shape[0]} cells, need more than m^2={k}")
    pick = rng.choice(cells.shape[0], size=k, replace=False)
    return WorkingSet(n, "momentum", cells=cells[pick])


@dataclass
class CellSupport:
    """Support of a plan difference, tagged with the plan dimension."""

    n: int
    cells: np.ndarray

    def __len__(self):
        return int(self.cells.shape[0])
