"""Enumeration of grid-aligned cube families and window sums.

A grid-aligned cube of ``k`` cells starting at index ``s`` covers the cells
``s .. s+k-1`` along every axis.  Window sums are summed directly while that
is affordable (nonnegative data then keeps full relative accuracy even in
tiny windows); very large windows fall back to extended-precision prefix
tables.
"""

from __future__ import annotations

import math
from typing import Iterator, List, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .grid import Cube, Grid, grid_cube

FAMILIES = ("all", "dyadic")


def default_family(grid: Grid) -> str:
    return "all" if grid.n == 1 else "dyadic"


def side_counts(grid: Grid, side_cap: Optional[float] = None, family: Optional[str] = None,
                strict: bool = False) -> List[int]:
    """Cell counts ``k`` of the admissible sidelengths ``k h``.

    ``side_cap=None`` admits every cube that fits in the domain.  ``strict``
    turns the cap into ``k h < side_cap``.
    """
    family = family or default_family(grid)
    if family not in FAMILIES:
        raise ValueError(f"unknown cube family {family!r}")
    kmax = grid.m
    if side_cap is not None:
        ratio = side_cap / grid.h
        if strict:
            kmax = min(kmax, int(math.ceil(ratio - 1e-9)) - 1)
        else:
            kmax = min(kmax, int(math.floor(ratio + 1e-9)))
    if family == "all":
        return list(range(1, kmax + 1))
    out, k = [], 1
    while k <= kmax:
        out.append(k)
        k *= 2
    return out


def prefix_table(values: np.ndarray) -> np.ndarray:
    """Zero-padded cumulative sums along every axis, in extended precision."""
    table = np.asarray(values, dtype=np.longdouble)
    for ax in range(table.ndim):
        table = np.cumsum(table, axis=ax)
        pad = [(0, 0)] * table.ndim
        pad[ax] = (1, 0)
        table = np.pad(table, pad)
    return table


def window_sums(table: np.ndarray, k: int) -> np.ndarray:
    """Sums of every aligned window of ``k`` cells per axis (unscaled)."""
    if table.ndim == 1:
        return table[k:] - table[:-k]
    return table[k:, k:] - table[:-k, k:] - table[k:, :-k] + table[:-k, :-k]


DIRECT_CELLS = 256  # windows up to this many cells are summed directly


def direct_window_sums(values: np.ndarray, k: int) -> np.ndarray:
    """Window sums by explicit summation; relative accuracy ~k^n eps for nonnegative data."""
    out = values
    for ax in range(values.ndim):
        out = sliding_window_view(out, k, axis=ax).sum(axis=-1)
    return out


class WindowSums:
    """Window sums of one array: direct summation while affordable, prefix table otherwise."""

    def __init__(self, values: np.ndarray):
        self.values = np.asarray(values, dtype=float)
        self._table = None

    def __call__(self, k: int) -> np.ndarray:
        if k ** self.values.ndim <= DIRECT_CELLS:
            return direct_window_sums(self.values, k)
        if self._table is None:
            self._table = prefix_table(self.values)
        return np.asarray(window_sums(self._table, k), dtype=float)


def window_min(values: np.ndarray, k: int) -> np.ndarray:
    out = values
    for ax in range(values.ndim):
        out = sliding_window_view(out, k, axis=ax).min(axis=-1)
    return out


def window_max(values: np.ndarray, k: int) -> np.ndarray:
    out = values
    for ax in range(values.ndim):
        out = sliding_window_view(out, k, axis=ax).max(axis=-1)
    return out


def windows(values: np.ndarray, k: int, row_chunk: int = 64) -> Iterator[Tuple[int, np.ndarray]]:
    """Yield ``(first_row, view)`` blocks of all ``k``-windows.

    ``view`` has shape ``(rows, [cols,] k, [k])``; for ``n = 2`` the rows are
    chunked to bound memory.
    """
    if values.ndim == 1:
        yield 0, sliding_window_view(values, k)
        return
    view = sliding_window_view(values, (k, k))
    for r0 in range(0, view.shape[0], row_chunk):
        yield r0, view[r0:r0 + row_chunk]


def cube_at(grid: Grid, flat_index: int, k: int) -> Cube:
    """Cube of ``k`` cells whose start is the ``flat_index``-th window."""
    count = grid.m - k + 1
    start = np.unravel_index(flat_index, (count,) * grid.n)
    return grid_cube(grid, [int(s) for s in start], k)


def extension_cells(extra: float) -> int:
    """Cells added beyond an aligned edge when a closed cube grows by ``extra`` cells.

    A cell centre sits half a cell past the edge, so it is included once the
    growth reaches ``i + 1/2`` cells.
    """
    return int(math.floor(extra + 0.5 + 1e-9))
