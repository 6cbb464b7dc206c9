"""Superlevel sets, dyadic Whitney covers and the smooth partition of unity.

Cubes are dyadic relative to the grid: a level-``j`` cube is made of ``2^j``
cells per axis and starts at a multiple of ``2^j``.  The complement of an open
set is represented by the centres of its cells plus a one-cell ghost ring
around the domain, so distances to the complement are exact point-to-box
distances.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage, special
from scipy.spatial import cKDTree

from . import _cubes
from .grid import Cube, Grid, SampledFunction, grid_cube

_TOL = 1e-9


class WhitneyError(RuntimeError):
    """A cover or partition violated one of its defining properties."""


class DomainTooSmall(ValueError):
    pass


@dataclass(frozen=True)
class OpenSet:
    """Union of grid cells with the distance of every centre to the complement."""

    grid: Grid
    mask: np.ndarray
    distance: np.ndarray
    height: Optional[float] = None

    @property
    def empty(self) -> bool:
        return not self.mask.any()

    @property
    def cell_count(self) -> int:
        return int(self.mask.sum())

    def touches_boundary(self, margin_cells: int = 1) -> bool:
        if margin_cells <= 0:
            return False
        inner = np.zeros_like(self.mask)
        core = tuple(slice(margin_cells, self.grid.m - margin_cells) for _ in range(self.grid.n))
        inner[core] = True
        return bool(np.any(self.mask & ~inner))


def open_set_from_mask(grid: Grid, mask: np.ndarray, height: Optional[float] = None) -> OpenSet:
    mask = np.asarray(mask, dtype=bool).reshape(grid.shape)
    padded = np.pad(mask, 1, constant_values=False)
    dist = ndimage.distance_transform_edt(padded, sampling=grid.h)
    dist = dist[tuple(slice(1, -1) for _ in range(grid.n))]
    mask = mask.copy()
    mask.setflags(write=False)
    dist.setflags(write=False)
    return OpenSet(grid, mask, dist, height)


def superlevel_set(Mf: SampledFunction, lam: float, margin_cells: int = 1) -> OpenSet:
    """``{x : Mf(x) > lam}`` as a cell union.

    The height must exceed ``inf Mf``; with ``margin_cells > 0`` the set may
    not reach the outermost ``margin_cells`` rings of the domain.
    """
    vals = np.abs(Mf.values)
    if not lam > vals.min():
        raise ValueError(f"height {lam:g} must exceed inf Mf = {vals.min():g}")
    out = open_set_from_mask(Mf.grid, vals > lam, lam)
    if out.touches_boundary(margin_cells):
        raise DomainTooSmall(f"domain too small for this height ({lam:g})")
    return out


@dataclass(frozen=True)
class WhitneyParams:
    """Window ``c_lo diam(Q) <= dist(Q, complement) <= c_hi diam(Q)`` and dilation factors.

    ``continuum(n)`` gives the large constants of the continuous construction; on
    desk grids they leave every cell near the boundary unresolved, so the
    default ``desk(n)`` uses the smallest window that resolves every cell.
    """

    c_lo: float
    c_hi: float
    a: float
    b: float
    name: str = "desk"

    def __post_init__(self):
        if not (0 < self.c_lo < self.c_hi):
            raise ValueError("need 0 < c_lo < c_hi")
        if not (1 < self.a < self.b):
            raise ValueError("need 1 < a < b")

    @classmethod
    def desk(cls, n: int) -> "WhitneyParams":
        c_lo = 1.0 / (2.0 * math.sqrt(n))
        return cls(c_lo, 2 * c_lo + 1, 1.25, 1.5, "desk")

    @classmethod
    def continuum(cls, n: int) -> "WhitneyParams":
        return cls(2.0 ** (6 + n), 2.0 ** (8 + n), 1 + 2.0 ** -(11 + n), 1 + 2.0 ** -(10 + n), "continuum")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class WhitneyCover:
    grid: Grid
    omega: OpenSet
    cubes: List[Cube]
    dist: np.ndarray
    params: WhitneyParams
    unresolved: np.ndarray
    overlap: int = 0

    def __len__(self):
        return len(self.cubes)

    def closure(self, k: int) -> Cube:
        """``Q-bar_k = a Q_k``."""
        return self.cubes[k].dilate(self.params.a)

    def star(self, k: int) -> Cube:
        """``Q*_k = b Q_k``."""
        return self.cubes[k].dilate(self.params.b)

    def sides(self) -> np.ndarray:
        return np.array([q.side for q in self.cubes])

    def cell_counts(self, dilation: float = 1.0) -> np.ndarray:
        """Number of (dilated) cubes containing each cell centre."""
        count = np.zeros(self.grid.shape, dtype=int)
        for q in self.cubes:
            count[q.dilate(dilation).index_box(self.grid)] += 1
        return count

    def check(self) -> None:
        """Hard check of the window and of the tiling; raises WhitneyError."""
        tol = _TOL * self.grid.h
        for q, d in zip(self.cubes, self.dist):
            if not (self.params.c_lo * q.diam - tol <= d <= self.params.c_hi * q.diam + tol):
                raise WhitneyError(f"cube {q} at distance {d:g} violates the window")
        count = self.cell_counts()
        resolved = self.omega.mask & ~self.unresolved
        if np.any(count[resolved] != 1) or np.any(count[~self.omega.mask] != 0):
            raise WhitneyError("cubes do not tile the open set")

    def to_json_dict(self) -> dict:
        return {"grid": self.grid.to_dict(), "params": self.params.to_dict(),
                "height": self.omega.height, "overlap": self.overlap,
                "unresolved_cells": int(self.unresolved.sum()),
                "cubes": [{"level": q.level, "index": list(q.index), "center": list(q.center),
                           "side": q.side, "dist_to_complement": float(d)}
                          for q, d in zip(self.cubes, self.dist)]}

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), sort_keys=True, indent=1))


def _complement_tree(omega: OpenSet) -> cKDTree:
    grid = omega.grid
    padded = np.pad(omega.mask, 1, constant_values=False)
    idx = np.argwhere(~padded)
    pts = -grid.L + (idx - 1 + 0.5) * grid.h
    return cKDTree(pts)


def box_distance(tree: cKDTree, cube: Cube) -> float:
    """Exact distance from the closed cube to the nearest point of the tree."""
    center = np.asarray(cube.center)
    d_center, _ = tree.query(center)
    cand = tree.query_ball_point(center, d_center + cube.diam / 2 + 1e-12)
    pts = tree.data[cand]
    gap = np.maximum(np.abs(pts - center) - cube.side / 2, 0.0)
    return float(np.sqrt((gap * gap).sum(axis=1)).min())


def whitney_decompose(omega: OpenSet, params: Optional[WhitneyParams] = None) -> WhitneyCover:
    """Maximal dyadic cubes inside ``omega`` with ``dist >= c_lo diam``.

    Maximality gives the upper bound ``dist < (2 c_lo + 1) diam`` because the
    parent fails the lower bound; the window is re-checked on every cube.
    """
    grid = omega.grid
    params = params or WhitneyParams.desk(grid.n)
    unresolved = np.zeros(grid.shape, dtype=bool)
    if omega.empty:
        cover = WhitneyCover(grid, omega, [], np.zeros(0), params, unresolved)
        return cover
    tree = _complement_tree(omega)
    counts = _cubes.prefix_table(omega.mask.astype(np.int64))
    tol = _TOL * grid.h
    top = 1 << max(0, math.ceil(math.log2(grid.m)))
    stack = [((0,) * grid.n, top)]
    cubes, dists = [], []
    while stack:
        start, k = stack.pop()
        stop = [s + k for s in start]
        if any(s >= grid.m for s in start):
            continue
        inside = all(e <= grid.m for e in stop)
        if inside:
            box = tuple(slice(s, s + k + 1) for s in start)
            corners = counts[box]
            total = _box_sum(corners, k)
            if total == 0:
                continue
            if total == k ** grid.n:
                q = grid_cube(grid, start, k)
                d = box_distance(tree, q)
                if d >= params.c_lo * q.diam - tol:
                    level = k.bit_length() - 1
                    cubes.append(Cube(q.center, q.side, level, tuple(s // k for s in start)))
                    dists.append(d)
                    continue
            if k == 1:
                unresolved[tuple(start)] = True
                continue
        half = k // 2
        for off in np.ndindex(*([2] * grid.n)):
            stack.append((tuple(s + o * half for s, o in zip(start, off)), half))
    order = sorted(range(len(cubes)), key=lambda i: (cubes[i].center, cubes[i].side))
    cubes = [cubes[i] for i in order]
    dists = np.array([dists[i] for i in order])
    cover = WhitneyCover(grid, omega, cubes, dists, params, unresolved)
    cover.check()
    cover.overlap = int(cover.cell_counts(params.b).max())
    return cover


def _box_sum(corners: np.ndarray, k: int) -> int:
    if corners.ndim == 1:
        return int(corners[k] - corners[0])
    return int(corners[k, k] - corners[0, k] - corners[k, 0] + corners[0, 0])


# ---------------------------------------------------------------------------
# partition of unity


def smoothstep(t, order: int):
    """``C^order`` step from 0 (t <= 0) to 1 (t >= 1): regularised incomplete beta."""
    t = np.clip(t, 0.0, 1.0)
    return special.betainc(order + 1, order + 1, t)


def xi_profile(u: Sequence[np.ndarray], a: float, order: int) -> np.ndarray:
    """1 on the unit cube ``|u|_inf <= 1/2``, 0 outside the ``a``-cube, product of smoothsteps."""
    width = (a - 1) / 2
    out = 1.0
    for ud in u:
        out = out * smoothstep((a / 2 - np.abs(ud)) / width, order)
    return np.asarray(out)


class PartitionOfUnity:
    """``xi_k(x) = xi((x - x_k)/l_k)`` and ``eta_k = xi_k / sum_j xi_j`` stored on patches."""

    def __init__(self, cover: WhitneyCover, order: int = 4):
        self.cover = cover
        self.order = order
        grid = cover.grid
        self.grid = grid
        coords = grid.coords()
        self.boxes: List[Tuple[slice, ...]] = []
        xis: List[np.ndarray] = []
        xi_sum = np.zeros(grid.shape)
        for k, q in enumerate(cover.cubes):
            box = cover.closure(k).index_box(grid)
            u = [(c[box] - x0) / q.side for c, x0 in zip(coords, q.center)]
            xi = xi_profile(u, cover.params.a, order)
            xi_sum[box] += xi
            self.boxes.append(box)
            xis.append(xi)
        mask = cover.omega.mask & ~cover.unresolved
        if np.any(xi_sum[~cover.omega.mask] != 0):
            raise WhitneyError("a bump leaks outside the open set")
        if mask.any() and xi_sum[mask].min() < 1 - 1e-12:
            raise WhitneyError("sum of bumps drops below 1 inside the open set")
        self.xi_sum = xi_sum
        self.xi = xis
        self.eta_patches = [xi / xi_sum[box] if xi.size else xi
                            for xi, box in zip(xis, self.boxes)]
        for e in self.eta_patches:
            np.nan_to_num(e, copy=False)

    def __len__(self):
        return len(self.boxes)

    def eta(self, k: int) -> SampledFunction:
        out = np.zeros(self.grid.shape)
        out[self.boxes[k]] = self.eta_patches[k]
        return SampledFunction(self.grid, out)

    def eta_sum(self) -> np.ndarray:
        out = np.zeros(self.grid.shape)
        for box, e in zip(self.boxes, self.eta_patches):
            out[box] += e
        return out

    def eta_at(self, k: int, points: Sequence[np.ndarray]) -> np.ndarray:
        """Closed-form ``eta_k`` at arbitrary points (arrays of equal shape per axis)."""
        a = self.cover.params.a
        total = np.zeros(np.shape(points[0]))
        mine = None
        for j, q in enumerate(self.cover.cubes):
            u = [(p - x0) / q.side for p, x0 in zip(points, q.center)]
            xi = xi_profile(u, a, self.order)
            total = total + xi
            if j == k:
                mine = xi
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(total > 0, mine / np.where(total > 0, total, 1), 0.0)

    def scaled_derivative_norm(self, k: int, order: int, samples: int = 256) -> float:
        """``max_{|alpha| <= order} sup |D^alpha [eta_k(x_k + l_k y)]|`` by finite differences."""
        q = self.cover.cubes[k]
        a = self.cover.params.a
        n = self.grid.n
        axis = np.linspace(-a / 2 - 0.05, a / 2 + 0.05, samples * (n == 1) + (samples // 4) * (n == 2) + 1)
        step = axis[1] - axis[0]
        ys = np.meshgrid(*([axis] * n), indexing="ij")
        vals = self.eta_at(k, [x0 + q.side * y for x0, y in zip(q.center, ys)])
        best = float(np.abs(vals).max())
        layer = [vals]
        for _ in range(order):
            nxt = []
            for v in layer:
                for ax in range(n):
                    nxt.append(np.gradient(v, step, axis=ax))
            layer = nxt
            best = max(best, max(float(np.abs(v).max()) for v in layer))
        return best


def partition_of_unity(cover: WhitneyCover, order: int = 4) -> PartitionOfUnity:
    return PartitionOfUnity(cover, order)
