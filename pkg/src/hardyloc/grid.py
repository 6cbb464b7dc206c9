"""Uniform cell-centred grids on ``[-L, L]^n``, sampled functions and cubes.

Every integral in the package goes through :func:`integrate`, a midpoint rule
on cell centres.  Functions are stored as ``n``-dimensional arrays of shape
``(m,) * n``; serialisation flattens them in C order.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

# Relative slack (in units of h) used when testing whether a cell centre lies
# on the boundary of a closed cube.
_EDGE_TOL = 1e-9


class GridError(ValueError):
    pass


class EmptyRegionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Grid:
    """Cell-centred uniform grid on ``[-L, L]^n``."""

    n: int
    L: float
    m: int

    def __post_init__(self):
        if self.n not in (1, 2):
            raise GridError(f"dimension must be 1 or 2, got {self.n}")
        if self.m < 8:
            raise GridError(f"need at least 8 points per axis, got {self.m}")
        if not self.L > 0:
            raise GridError(f"half width must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.m

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.m,) * self.n

    @property
    def size(self) -> int:
        return self.m ** self.n

    @property
    def cell_volume(self) -> float:
        return self.h ** self.n

    @property
    def axis(self) -> np.ndarray:
        return -self.L + (np.arange(self.m) + 0.5) * self.h

    def coords(self) -> Tuple[np.ndarray, ...]:
        """Coordinate arrays, one per axis, each of shape ``self.shape``."""
        return tuple(np.meshgrid(*([self.axis] * self.n), indexing="ij"))

    def radius(self) -> np.ndarray:
        """Euclidean norm ``|x|`` at every sample."""
        return np.sqrt(sum(c * c for c in self.coords()))

    def index_of(self, x: float) -> int:
        """Index of the cell containing coordinate ``x`` along one axis."""
        return int(math.floor((x + self.L) / self.h))

    def refine(self, factor: int = 2) -> "Grid":
        return Grid(self.n, self.L, self.m * factor)

    def to_dict(self) -> dict:
        return {"n": self.n, "L": self.L, "m": self.m}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        return cls(int(d["n"]), float(d["L"]), int(d["m"]))


def make_grid(n: int, L: float, m: int) -> Grid:
    return Grid(int(n), float(L), int(m))


@dataclass(frozen=True)
class Cube:
    """Closed axis-parallel cube ``Q(center, side)``.

    ``level``/``index`` carry the dyadic address when the cube comes from a
    dyadic hierarchy anchored on a grid (level = log2 of the side in cells).
    """

    center: Tuple[float, ...]
    side: float
    level: Optional[int] = None
    index: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if not self.side > 0:
            raise GridError(f"cube side must be positive, got {self.side}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def n(self) -> int:
        return len(self.center)

    @property
    def volume(self) -> float:
        return self.side ** self.n

    @property
    def diam(self) -> float:
        return self.side * math.sqrt(self.n)

    def dilate(self, factor: float) -> "Cube":
        return Cube(self.center, self.side * factor)

    def lower(self) -> np.ndarray:
        return np.asarray(self.center) - self.side / 2

    def upper(self) -> np.ndarray:
        return np.asarray(self.center) + self.side / 2

    def intersects(self, other: "Cube") -> bool:
        gap = np.abs(np.asarray(self.center) - np.asarray(other.center))
        return bool(np.all(gap <= (self.side + other.side) / 2))

    def contains_cube(self, other: "Cube", tol: float = 1e-12) -> bool:
        return bool(np.all(self.lower() <= other.lower() + tol)
                    and np.all(other.upper() <= self.upper() + tol))

    def index_box(self, grid: Grid) -> Tuple[slice, ...]:
        """Slices covering the cell centres inside the (closed) cube."""
        tol = _EDGE_TOL * grid.h
        out = []
        for c in self.center:
            lo = math.ceil((c - self.side / 2 - tol + grid.L) / grid.h - 0.5)
            hi = math.floor((c + self.side / 2 + tol + grid.L) / grid.h - 0.5)
            lo, hi = max(lo, 0), min(hi, grid.m - 1)
            out.append(slice(lo, max(hi + 1, lo)))
        return tuple(out)

    def mask(self, grid: Grid) -> np.ndarray:
        out = np.zeros(grid.shape, dtype=bool)
        out[self.index_box(grid)] = True
        return out

    def to_dict(self) -> dict:
        d = {"center": list(self.center), "side": self.side}
        if self.level is not None:
            d["level"] = self.level
            d["index"] = list(self.index)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Cube":
        idx = d.get("index")
        return cls(tuple(d["center"]), float(d["side"]), d.get("level"),
                   tuple(idx) if idx is not None else None)


def grid_cube(grid: Grid, start: Sequence[int], cells: int) -> Cube:
    """The grid-aligned cube made of ``cells`` cells per axis from ``start``."""
    center = tuple(-grid.L + (s + cells / 2) * grid.h for s in start)
    return Cube(center, cells * grid.h)


class SampledFunction:
    """Values of a function at the cell centres of a grid."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values, real: Optional[bool] = None):
        arr = np.asarray(values)
        if arr.size != grid.size:
            raise GridError(f"expected {grid.size} samples, got {arr.size}")
        arr = arr.reshape(grid.shape)
        if real is None:
            real = not np.iscomplexobj(arr) or not np.any(arr.imag)
        arr = arr.real.astype(float) if real else arr.astype(complex)
        if not np.all(np.isfinite(arr)):
            raise GridError("sampled values must be finite")
        arr.setflags(write=False)
        self.grid = grid
        self.values = arr

    @classmethod
    def from_callable(cls, grid: Grid, fn) -> "SampledFunction":
        return cls(grid, fn(*grid.coords()))

    @classmethod
    def zeros(cls, grid: Grid) -> "SampledFunction":
        return cls(grid, np.zeros(grid.shape))

    @property
    def real(self) -> bool:
        return not np.iscomplexobj(self.values)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def _coerce(self, other):
        if isinstance(other, SampledFunction):
            if other.grid != self.grid:
                raise GridError("functions live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return SampledFunction(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return SampledFunction(self.grid, self.values - self._coerce(other))

    def __rsub__(self, other):
        return SampledFunction(self.grid, self._coerce(other) - self.values)

    def __mul__(self, other):
        return SampledFunction(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __neg__(self):
        return SampledFunction(self.grid, -self.values)

    def __abs__(self):
        return SampledFunction(self.grid, np.abs(self.values))

    def __repr__(self):
        kind = "real" if self.real else "complex"
        return f"SampledFunction({kind}, n={self.grid.n}, m={self.grid.m}, L={self.grid.L})"

    # -- serialisation -------------------------------------------------
    def to_json_dict(self) -> dict:
        flat = self.values.ravel()
        if self.real:
            vals = [float(v) for v in flat]
        else:
            vals = [[float(v.real), float(v.imag)] for v in flat]
        return {"grid": self.grid.to_dict(), "real": self.real, "values": vals}

    @classmethod
    def from_json_dict(cls, d: dict) -> "SampledFunction":
        grid = Grid.from_dict(d["grid"])
        vals = np.asarray(d["values"], dtype=float)
        if vals.ndim == 2:
            vals = vals[:, 0] + 1j * vals[:, 1]
        return cls(grid, vals, real=bool(d.get("real", vals.ndim == 1)))

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict()))

    @classmethod
    def load_json(cls, path) -> "SampledFunction":
        return cls.from_json_dict(json.loads(Path(path).read_text()))

    def save_csv(self, path) -> None:
        coords = [c.ravel() for c in self.grid.coords()]
        vals = self.values.ravel().astype(complex)
        names = ["x", "y"][: self.grid.n]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names + ["re", "im"])
            for row in zip(*coords, vals.real, vals.imag):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def load_csv(cls, path, L: Optional[float] = None) -> "SampledFunction":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], np.asarray(rows[1:], dtype=float)
        n = len(header) - 2
        count = body.shape[0]
        m = int(round(count ** (1.0 / n)))
        if L is None:
            x0 = body[:, 0].min()
            # cell centres start half a cell inside the box
            L = -x0 * m / (m - 1) if m > 1 else abs(x0)
        grid = Grid(n, float(L), m)
        vals = body[:, n] + 1j * body[:, n + 1]
        return cls(grid, vals)


def _region_values(f: SampledFunction, region: Optional[Cube]) -> np.ndarray:
    if region is None:
        return f.values
    box = region.index_box(f.grid)
    return f.values[box]


def integrate(f: SampledFunction, region: Optional[Cube] = None):
    """Midpoint rule over the cell centres lying in ``region`` (closed).

    Returns a float for real ``f`` and a complex number otherwise.  A region
    with no cell centre inside the domain integrates to 0 and emits an
    :class:`EmptyRegionWarning`.
    """
    vals = _region_values(f, region)
    if vals.size == 0:
        warnings.warn("integration region misses every cell centre", EmptyRegionWarning)
        return 0.0 if f.real else 0j
    total = np.sum(vals) * f.grid.cell_volume
    return float(total) if f.real else complex(total)


def weight_values(weight, grid: Grid) -> np.ndarray:
    """Accept a Weight, SampledFunction, array or scalar and return samples."""
    if weight is None:
        return np.ones(grid.shape)
    base = getattr(weight, "base", weight)
    if isinstance(base, SampledFunction):
        return base.values
    arr = np.asarray(base, dtype=float)
    return np.broadcast_to(arr, grid.shape)


def weighted_lp_norm(f: SampledFunction, weight=None, p: float = 2.0) -> float:
    """``(sum |f|^p w h^n)^(1/p)``; ``p = inf`` gives ``max |f|``."""
    if not p > 0:
        raise GridError(f"exponent must be positive, got {p}")
    absf = np.abs(f.values)
    if math.isinf(p):
        return float(absf.max())
    w = weight_values(weight, f.grid)
    total = float(np.sum(absf ** p * w) * f.grid.cell_volume)
    return total ** (1.0 / p)


def weighted_measure(weight, grid: Grid, mask: Optional[np.ndarray] = None) -> float:
    """``w(E)`` for ``E`` given as a boolean mask of cells (whole domain if None)."""
    w = weight_values(weight, grid)
    if mask is not None:
        w = w[mask]
    return float(np.sum(w) * grid.cell_volume)


def cube_measure(weight, grid: Grid, cube: Cube) -> float:
    w = weight_values(weight, grid)
    return float(np.sum(w[cube.index_box(grid)]) * grid.cell_volume)
