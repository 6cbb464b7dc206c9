"""Local Muckenhoupt weights, BMO^loc and the A_p(phi) class.

All suprema are exact maxima over a finite family of grid-aligned cubes:
every cell-aligned position and every sidelength ``k h`` (``family="all"``)
or every dyadic ``k`` (``family="dyadic"``, the default in two dimensions).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import _cubes
from .grid import Cube, Grid, SampledFunction, grid_cube, make_grid


class WeightError(ValueError):
    pass


class Weight:
    """A strictly positive sampled function used as a measure ``w(x) dx``."""

    def __init__(self, base: SampledFunction, name: str = "custom", descriptor: Optional[dict] = None):
        if not base.real:
            raise WeightError("a weight must be real valued")
        if not np.all(base.values > 0):
            raise WeightError("a weight must be strictly positive at every sample")
        self.base = base
        self.name = name
        self.descriptor = descriptor or {}

    @property
    def grid(self) -> Grid:
        return self.base.grid

    @property
    def values(self) -> np.ndarray:
        return self.base.values

    def measure(self, cube: Optional[Cube] = None) -> float:
        if cube is None:
            return float(np.sum(self.values) * self.grid.cell_volume)
        return float(np.sum(self.values[cube.index_box(self.grid)]) * self.grid.cell_volume)

    def power(self, exponent: float, name: Optional[str] = None) -> "Weight":
        return Weight(SampledFunction(self.grid, self.values ** exponent),
                      name or f"({self.name})^{exponent:g}")

    def __repr__(self):
        return f"Weight({self.name!r}, m={self.grid.m})"


def _parse_numbers(text: str) -> List[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def weight_values_from_descriptor(desc: str, grid: Grid) -> np.ndarray:
    kind, _, arg = desc.partition(":")
    kind = kind.strip().lower()
    r = grid.radius()
    if kind == "const":
        c = float(arg or 1.0)
        return np.full(grid.shape, c)
    if kind == "exp":
        c = float(arg or 1.0)
        return np.exp(c * r)
    if kind == "powlog":
        alpha, beta = _parse_numbers(arg)
        return (1.0 + r * np.log(2.0 + r) ** alpha) ** beta
    if kind == "abspow":
        # cell centres never sit on the origin, so |x|^gamma is finite on the grid
        return r ** float(arg)
    if kind == "decay":
        gamma = float(arg)
        return (1.0 + r * np.log1p(r)) ** (-(grid.n + gamma))
    if kind == "file":
        path = Path(arg)
        f = (SampledFunction.load_json(path) if path.suffix == ".json"
             else SampledFunction.load_csv(path, L=grid.L))
        if f.grid != grid:
            raise WeightError(f"weight file grid {f.grid} does not match {grid}")
        return np.real(f.values)
    raise WeightError(f"unknown weight descriptor {desc!r}")


def parse_weight(desc: str, grid: Grid) -> Weight:
    """Build a weight from ``const:c``, ``exp:c``, ``powlog:a,b``, ``abspow:g``,
    ``decay:g`` or ``file:<path>``."""
    vals = weight_values_from_descriptor(desc, grid)
    kind, _, arg = desc.partition(":")
    return Weight(SampledFunction(grid, vals), name=desc, descriptor={"kind": kind, "arg": arg})


# ---------------------------------------------------------------------------
# Hardy-space parameters


@dataclass(frozen=True)
class HardyParams:
    """The parameters ``(p, q, s, N)`` together with ``q_w`` and the dimension."""

    p: float
    q: float
    s: int
    N: int
    q_w: float = 1.0
    n: int = 1

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise WeightError(f"p must lie in (0, 1], got {self.p}")
        if self.q_w < 1:
            raise WeightError(f"critical index must be >= 1, got {self.q_w}")
        if not self.q > self.q_w:
            raise WeightError(f"q={self.q} must exceed the critical index {self.q_w}")
        if self.s < self.min_s(self.p, self.q_w, self.n):
            raise WeightError(f"s={self.s} below the admissible minimum "
                              f"{self.min_s(self.p, self.q_w, self.n)}")
        if self.N < self.min_N(self.p, self.q_w, self.n):
            raise WeightError(f"N={self.N} below N_(p,w)={self.min_N(self.p, self.q_w, self.n)}")

    @staticmethod
    def min_s(p: float, q_w: float, n: int) -> int:
        return max(0, math.floor(n * (q_w / p - 1) + 1e-12))

    @staticmethod
    def min_N(p: float, q_w: float, n: int) -> int:
        return max(0, math.floor(n * (q_w / p - 1) + 1e-12)) + 2

    @classmethod
    def default(cls, p: float, q: float = math.inf, q_w: float = 1.0, n: int = 1,
                s: Optional[int] = None, N: Optional[int] = None) -> "HardyParams":
        s = cls.min_s(p, q_w, n) if s is None else s
        N = max(cls.min_N(p, q_w, n), s + 1) if N is None else N
        return cls(p, q, s, N, q_w, n)

    @property
    def cz_ready(self) -> bool:
        """Whether ``N > s`` (needed by the Calderon-Zygmund machinery)."""
        return self.N > self.s

    def to_dict(self) -> dict:
        return {"p": self.p, "q": "inf" if math.isinf(self.q) else self.q, "s": self.s,
                "N": self.N, "q_w": self.q_w, "n": self.n}


# ---------------------------------------------------------------------------
# A_p^loc constants


@dataclass
class ApLocReport:
    p: float
    constant: float
    cube: Cube
    side_cap: Optional[float]
    family: str
    m: int
    alpha: Optional[float] = None

    def to_dict(self) -> dict:
        d = {"p": self.p, "constant": self.constant, "cube": self.cube.to_dict(),
             "side_cap": self.side_cap, "family": self.family, "m": self.m,
             "sampling": "cell centres"}
        if self.alpha is not None:
            d["alpha"] = self.alpha
        return d


def _as_weight(weight) -> Weight:
    if isinstance(weight, Weight):
        return weight
    if isinstance(weight, SampledFunction):
        return Weight(weight)
    raise WeightError(f"expected a Weight, got {type(weight).__name__}")


def _cube_quantities(w: np.ndarray, p: float, k: int, tables) -> np.ndarray:
    """A_p quantity of every aligned k-cube, in extended precision."""
    count = k ** w.ndim
    avg_w = tables[0](k) / count
    if p == 1:
        return avg_w / _cubes.window_min(w, k)
    avg_dual = tables[1](k) / count
    return avg_w * avg_dual ** (p - 1)


def _sweep(weight: Weight, p: float, sides: Sequence[int], damping=None):
    w = weight.values
    tables = [_cubes.WindowSums(w)]
    if p > 1:
        tables.append(_cubes.WindowSums(w ** (-1.0 / (p - 1))))
    best, best_cube = -np.inf, None
    grid = weight.grid
    for k in sides:
        q = _cube_quantities(w, p, k, tables)
        if damping is not None:
            q = q / damping((k * grid.h) ** grid.n)
        idx = int(np.argmax(q))
        val = q.flat[idx]
        if val > best:
            best, best_cube = val, _cubes.cube_at(grid, idx, k)
    return float(best), best_cube


def ap_loc_constant(weight, p: float, side_cap: float = 1.0, family: Optional[str] = None) -> ApLocReport:
    """Largest A_p quantity over grid-aligned cubes with sidelength <= ``side_cap``.

    For ``p = 1`` the quantity is ``avg_Q w / min_Q w``; for ``p > 1`` it is
    ``avg_Q w * (avg_Q w^{-1/(p-1)})^{p-1}``.
    """
    if p < 1:
        raise WeightError(f"p must be >= 1, got {p}")
    weight = _as_weight(weight)
    family = family or _cubes.default_family(weight.grid)
    sides = _cubes.side_counts(weight.grid, side_cap, family)
    if not sides:
        raise WeightError("side cap admits no grid-aligned cube")
    const, cube = _sweep(weight, p, sides)
    return ApLocReport(p, const, cube, side_cap, family, weight.grid.m)


def ap_phi_constant(weight, p: float, alpha: float, family: Optional[str] = None) -> ApLocReport:
    """A_p(phi) constant with ``phi(t) = (1 + t)^alpha`` over all aligned cubes."""
    if not p > 1:
        raise WeightError(f"p must be > 1, got {p}")
    if alpha < 0:
        raise WeightError(f"alpha must be nonnegative, got {alpha}")
    weight = _as_weight(weight)
    family = family or _cubes.default_family(weight.grid)
    sides = _cubes.side_counts(weight.grid, None, family)
    const, cube = _sweep(weight, p, sides, damping=lambda vol: (1.0 + vol) ** (alpha * p))
    return ApLocReport(p, const, cube, None, family, weight.grid.m, alpha=alpha)


@dataclass
class WeightPropertiesReport:
    p: float
    p_sweep: List[float]
    sweep_constants: List[float]
    monotone: bool
    duality_lhs: float
    duality_rhs: float
    duality_rel_err: float
    doubling_small: float
    doubling_large: float
    stable_p_floor: Optional[float] = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _doubling_small(weight: Weight, side_cap: float) -> float:
    grid = weight.grid
    sums = _cubes.WindowSums(weight.values)
    best = 0.0
    for k in _cubes.side_counts(grid, side_cap, _cubes.default_family(grid), strict=True):
        ext = _cubes.extension_cells(k / 2)
        big = k + 2 * ext
        if big > grid.m:
            break
        inner = sums(k)
        outer = sums(big)
        sl = (slice(ext, ext + outer.shape[0]),) * grid.n
        ratio = outer / inner[sl]
        best = max(best, float(ratio.max()))
    return best


def _doubling_large(weight: Weight, max_side: Optional[float] = None) -> float:
    """sup w(Q(x0, r+1)) / w(Q(x0, r)) over aligned cubes with side r >= 1."""
    grid = weight.grid
    sums = _cubes.WindowSums(weight.values)
    ext = _cubes.extension_cells(0.5 / grid.h)
    kmin = int(math.ceil(1.0 / grid.h - 1e-9))
    kmax = grid.m - 2 * ext
    if max_side is not None:
        kmax = min(kmax, int(math.floor(max_side / grid.h + 1e-9)))
    family = _cubes.default_family(grid)
    best = 0.0
    for k in _cubes.side_counts(grid, None, family):
        if k < kmin or k > kmax:
            continue
        inner = sums(k)
        outer = sums(k + 2 * ext)
        sl = (slice(ext, ext + outer.shape[0]),) * grid.n
        best = max(best, float((outer / inner[sl]).max()))
    return best


def check_weight_properties(weight, p: float, p_sweep: Optional[Sequence[float]] = None,
                            side_cap: float = 1.0, family: Optional[str] = None) -> WeightPropertiesReport:
    """Monotonicity in p, the duality identity and measured doubling constants."""
    if not p > 1:
        raise WeightError(f"p must be > 1, got {p}")
    weight = _as_weight(weight)
    if p_sweep is None:
        p_sweep = [1.0, 1.25, 1.5, 2.0, 3.0, 4.0, 8.0]
    p_sweep = sorted(p_sweep)
    consts = [ap_loc_constant(weight, q, side_cap, family).constant for q in p_sweep]
    monotone = all(b <= a * (1 + 1e-12) for a, b in zip(consts, consts[1:]))
    pd = p / (p - 1)
    dual = weight.power(-1.0 / (p - 1), name=f"dual({weight.name})")
    lhs = ap_loc_constant(dual, pd, side_cap, family).constant
    rhs = ap_loc_constant(weight, p, side_cap, family).constant ** (pd - 1)
    rel = abs(lhs - rhs) / abs(rhs)
    return WeightPropertiesReport(
        p=p, p_sweep=list(p_sweep), sweep_constants=consts, monotone=monotone,
        duality_lhs=lhs, duality_rhs=rhs, duality_rel_err=rel,
        doubling_small=_doubling_small(weight, side_cap),
        doubling_large=_doubling_large(weight),
    )


@dataclass
class CriticalIndexTable:
    rows: List[dict]
    flags: Dict[float, str]
    stable_floor: Optional[float]

    def to_dict(self) -> dict:
        return {"rows": self.rows, "flags": {str(k): v for k, v in self.flags.items()},
                "stable_floor": self.stable_floor}


def critical_index_diagnostic(descriptor: str, n: int, L: float, p_sweep: Sequence[float],
                              ms: Sequence[int], side_cap: float = 1.0, tol: float = 0.2,
                              family: Optional[str] = None) -> CriticalIndexTable:
    """Table of A_p^loc constants per (p, m) with a stable/diverging flag per p.

    The critical index itself is not decidable on a finite grid; the table is
    there to inform the user's choice of ``q_w``.  ``stable_floor`` is the
    smallest swept p from which every larger p is stable.
    """
    if list(p_sweep) != sorted(p_sweep):
        raise WeightError("p_sweep must be sorted ascending")
    rows, flags = [], {}
    for p in p_sweep:
        vals = []
        for m in ms:
            w = parse_weight(descriptor, make_grid(n, L, m))
            c = ap_loc_constant(w, p, side_cap, family).constant
            vals.append(c)
            rows.append({"p": p, "m": m, "constant": c})
        spread = (max(vals) - min(vals)) / min(vals)
        flags[p] = "stable" if spread <= tol else "diverging"
    floor = None
    for p in reversed(list(p_sweep)):
        if flags[p] != "stable":
            break
        floor = p
    return CriticalIndexTable(rows, flags, floor)


# ---------------------------------------------------------------------------
# BMO^loc


def _as_real_values(b) -> np.ndarray:
    if isinstance(b, SampledFunction):
        if not b.real:
            raise WeightError("BMO norms need a real-valued function")
        return b.values
    return np.asarray(b, dtype=float)


def bmo_loc_sweep(b: SampledFunction, side_cap: float = 1.0, family: Optional[str] = None):
    """Return ``(norm, cube)``: the largest mean oscillation and where it occurs."""
    vals = _as_real_values(b)
    grid = b.grid
    family = family or _cubes.default_family(grid)
    best, best_cube = 0.0, None
    axes = tuple(range(-grid.n, 0))
    for k in _cubes.side_counts(grid, side_cap, family):
        for r0, view in _cubes.windows(vals, k):
            mean = view.mean(axis=axes, keepdims=True)
            osc = np.abs(view - mean).mean(axis=axes)
            idx = int(np.argmax(osc))
            if osc.flat[idx] > best:
                best = float(osc.flat[idx])
                loc = np.unravel_index(idx, osc.shape)
                start = [int(loc[0]) + r0] + [int(v) for v in loc[1:]]
                best_cube = grid_cube(grid, start, k)
    return best, best_cube


def bmo_loc_norm(b: SampledFunction, side_cap: float = 1.0, family: Optional[str] = None) -> float:
    """``sup_{|Q| small} |Q|^{-1} int_Q |b - b_Q|`` over aligned cubes."""
    return bmo_loc_sweep(b, side_cap, family)[0]


def weighted_oscillation_ratio(b: SampledFunction, weight, p: float = 2.0,
                               side_cap: float = 1.0, family: Optional[str] = None) -> float:
    """``sup_Q (w(Q)^{-1} int_Q |b - b_Q|^p w)^{1/p} / ||b||_BMO^loc``."""
    weight = _as_weight(weight)
    vals = _as_real_values(b)
    w = weight.values
    grid = b.grid
    norm = bmo_loc_norm(b, side_cap, family)
    if norm == 0:
        return 0.0
    family = family or _cubes.default_family(grid)
    axes = tuple(range(-grid.n, 0))
    best = 0.0
    for k in _cubes.side_counts(grid, side_cap, family):
        for (_, vb), (_, vw) in zip(_cubes.windows(vals, k), _cubes.windows(w, k)):
            mean = vb.mean(axis=axes, keepdims=True)
            num = (np.abs(vb - mean) ** p * vw).sum(axis=axes)
            den = vw.sum(axis=axes)
            best = max(best, float((num / den).max()))
    return best ** (1.0 / p) / norm


@dataclass
class DecayReport:
    levels: List[float]
    ratios: List[float]
    bmo: float
    c3: float
    c4: float

    @property
    def exponential(self) -> bool:
        return self.c4 > 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def oscillation_decay(b: SampledFunction, weight, levels: Sequence[float], side_cap: float = 1.0,
                      family: Optional[str] = None) -> DecayReport:
    """``sup_Q w({x in Q: |b - b_Q| > t}) / w(Q)`` for each level ``t``.

    A least-squares fit of ``log ratio = log c3 - c4 t / ||b||`` over the
    levels with a nonzero ratio gives the measured decay constants.
    """
    weight = _as_weight(weight)
    vals = _as_real_values(b)
    w = weight.values
    grid = b.grid
    family = family or _cubes.default_family(grid)
    axes = tuple(range(-grid.n, 0))
    levels = list(levels)
    ratios = np.zeros(len(levels))
    for k in _cubes.side_counts(grid, side_cap, family):
        for (_, vb), (_, vw) in zip(_cubes.windows(vals, k), _cubes.windows(w, k)):
            dev = np.abs(vb - vb.mean(axis=axes, keepdims=True))
            den = vw.sum(axis=axes)
            for j, t in enumerate(levels):
                num = np.where(dev > t, vw, 0.0).sum(axis=axes)
                ratios[j] = max(ratios[j], float((num / den).max()))
    norm = bmo_loc_norm(b, side_cap, family)
    pos = ratios > 0
    c3, c4 = float("nan"), float("nan")
    if pos.sum() >= 2 and norm > 0:
        x = np.asarray(levels)[pos] / norm
        slope, icept = np.polyfit(x, np.log(ratios[pos]), 1)
        c3, c4 = float(np.exp(icept)), float(-slope)
    return DecayReport(levels, [float(r) for r in ratios], norm, c3, c4)
