"""Local Hardy-Littlewood maximal operator and grand maximal functions.

The grand maximal functions take a supremum over a finite dictionary of
normalised bumps and dyadic scales ``t < 1``.  Two dictionary variants exist:

* ``"D0"``: bumps supported in the unit ball (the family behind ``M^0_N``);
* ``"DN"``: the ``D0`` bumps plus copies dilated to a large support radius
  (behind ``M-bar^0_N`` and the non-tangential ``M_N``).

Because the ``DN`` members contain the ``D0`` members, the three maximal
functions are pointwise ordered exactly as in the continuous setting.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy as sp
from scipy import ndimage, signal

from . import _cubes
from .grid import Grid, SampledFunction, weighted_lp_norm

VARIANTS = ("D0", "DN")
CENTERED, NONTANGENTIAL = "centered", "nontangential"
_SAMPLES_PER_AXIS = {1: 20001, 2: 401}
# normalisation keeps the sampled derivative sup strictly below 1
_NORM_MARGIN = 1.0 + 1e-3
# kernels whose support radius spans fewer cells than this are cell-averaged
_MIN_SPAN = 16


class DictionaryError(ValueError):
    pass


def _symbols(n: int):
    return sp.symbols("x0:%d" % n, real=True)


def _bump_expr(n: int, center=None, width: float = 1.0):
    xs = _symbols(n)
    center = center or (0,) * n
    r2 = sum(((x - c) / sp.Rational(width).limit_denominator(1000)) ** 2 for x, c in zip(xs, center))
    return sp.exp(-1 / (1 - r2)), r2


@dataclass(frozen=True)
class _RawProfile:
    """Closed-form profile ``amp(x) * exp(-1/(1-r2(x)))`` restricted to ``r2 < 1``."""

    name: str
    n: int
    amp: Tuple[float, ...]          # affine modulation 1 + sum amp_d x_d
    center: Tuple[float, ...]
    width: float                     # support radius before dilation

    def expr(self, dilation: float = 1.0):
        xs = _symbols(self.n)
        y = [x / sp.nsimplify(dilation) for x in xs]
        r2 = sum(((yi - sp.nsimplify(c)) / sp.nsimplify(self.width)) ** 2 for yi, c in zip(y, self.center))
        mod = 1 + sum(sp.nsimplify(a) * yi for a, yi in zip(self.amp, y))
        return mod * sp.exp(-1 / (1 - r2)), r2


@functools.lru_cache(maxsize=None)
def _compiled(profile: _RawProfile, dilation: float, N: int):
    """Numeric value function and sampled derivative sup norms up to order N+1."""
    expr, r2 = profile.expr(dilation)
    xs = _symbols(profile.n)
    value = sp.lambdify(xs, expr, "numpy")
    inside = sp.lambdify(xs, r2, "numpy")
    radius = dilation * (math.sqrt(sum(c * c for c in profile.center)) + profile.width)
    npts = _SAMPLES_PER_AXIS[profile.n]
    axis = np.linspace(-radius, radius, npts)
    pts = np.meshgrid(*([axis] * profile.n), indexing="ij")
    mask = inside(*pts) < 1
    norms = []
    for order in range(N + 2):
        best = 0.0
        for alpha in _multi_indices(profile.n, order):
            d = expr
            for var, cnt in zip(xs, alpha):
                if cnt:
                    d = sp.diff(d, var, cnt)
            fn = sp.lambdify(xs, d, "numpy")
            with np.errstate(all="ignore"):
                vals = np.where(mask, fn(*pts), 0.0)
            vals = np.nan_to_num(vals, nan=0.0, posinf=0.0, neginf=0.0)
            best = max(best, float(np.max(np.abs(vals))))
        norms.append(best)
    return value, inside, radius, tuple(norms)


def _multi_indices(n: int, order: int):
    if n == 1:
        return [(order,)]
    return [(a, order - a) for a in range(order + 1)]


class TestFunction:
    """A normalised bump ``c * profile(x / dilation)`` with sup-norm control.

    ``derivative_norms[j]`` is the sampled ``max_{|alpha|=j} ||D^alpha phi||_inf``
    after normalisation, for ``j = 0..N+1``; all of them are <= 1.
    """

    __test__ = False  # not a pytest class

    def __init__(self, profile: _RawProfile, N: int, dilation: float = 1.0):
        value, inside, radius, raw_norms = _compiled(profile, float(dilation), int(N))
        self.profile = profile
        self.N = N
        self.dilation = float(dilation)
        self.support_radius = radius
        self.raw_derivative_norms = raw_norms
        self.scale = 1.0 / (max(raw_norms) * _NORM_MARGIN)
        self.derivative_norms = tuple(v * self.scale for v in raw_norms)
        self._value = value
        self._inside = inside
        self.integral = self._integral()
        if abs(self.integral) < 1e-12:
            raise DictionaryError(f"member {self.name} has vanishing integral")

    @property
    def name(self) -> str:
        return self.profile.name if self.dilation == 1 else f"{self.profile.name}@R{self.dilation:g}"

    def __call__(self, *coords) -> np.ndarray:
        with np.errstate(all="ignore"):
            inside = self._inside(*coords) < 1
            vals = np.where(inside, self._value(*coords), 0.0)
        return self.scale * np.nan_to_num(vals, nan=0.0, posinf=0.0, neginf=0.0)

    def _integral(self) -> float:
        n = self.profile.n
        npts = 4001 if n == 1 else 801
        r = self.support_radius
        axis = np.linspace(-r, r, npts)
        step = axis[1] - axis[0]
        vals = self(*np.meshgrid(*([axis] * n), indexing="ij"))
        return float(vals.sum() * step ** n)

    def kernel(self, t: float, h: float) -> np.ndarray:
        """Samples of ``phi_t(x) = t^{-n} phi(x / t)`` at the offsets ``j h``."""
        n = self.profile.n
        span = self.support_radius * t / h
        if span >= _MIN_SPAN:
            reach = int(math.floor(span))
            offs = np.arange(-reach, reach + 1) * h
            pts = np.meshgrid(*([offs / t] * n), indexing="ij")
            return self(*pts) / t ** n
        # under-resolved: average phi_t over each cell so the discrete mass stays right
        sub = int(math.ceil(4 * _MIN_SPAN / span))
        reach = int(math.ceil(span + 0.5))
        offs = np.arange(-reach, reach + 1) * h
        inner = (np.arange(sub) + 0.5) / sub * h - h / 2
        fine = (offs[:, None] + inner[None, :]).ravel()
        pts = np.meshgrid(*([fine / t] * n), indexing="ij")
        vals = self(*pts) / t ** n
        for ax in range(n):
            shape = vals.shape[:ax] + (len(offs), sub) + vals.shape[ax + 1:]
            vals = vals.reshape(shape).mean(axis=ax + 1)
        return vals

    def __repr__(self):
        return f"TestFunction({self.name}, R={self.support_radius:g})"


def _base_profiles(n: int, members: int, n_translates: int) -> List[_RawProfile]:
    zero = (0.0,) * n
    unit = [tuple(1.0 if d == k else 0.0 for d in range(n)) for k in range(n)]
    out = [_RawProfile("bump", n, zero, zero, 1.0)]
    mods = [("tilt+0", tuple(0.5 * u for u in unit[0]))]
    mods.append(("tilt-0", tuple(-0.5 * u for u in unit[0])) if n == 1
                else ("tilt+1", tuple(0.5 * u for u in unit[1])))
    for name, amp in mods:
        out.append(_RawProfile(name, n, amp, zero, 1.0))
    out.append(_RawProfile("narrow", n, zero, zero, 0.5))
    out = out[:max(1, members)]
    shifts = [tuple(s * 0.25 * u for u in unit[k]) for k in range(n) for s in (1, -1)]
    for j in range(n_translates):
        c = shifts[j % len(shifts)]
        c = tuple(v * (1 + j // len(shifts)) for v in c)
        if math.sqrt(sum(v * v for v in c)) + 0.5 > 1:
            raise DictionaryError("too many translates for the unit ball")
        out.append(_RawProfile(f"shift{j}", n, zero, c, 0.5))
    return out


class Dictionary:
    """Finite family of test functions and scales standing in for D^0_N / D_N."""

    def __init__(self, N: int, members: Sequence[TestFunction], scales: Sequence[float],
                 variant: str = "D0"):
        if N < 2:
            raise DictionaryError(f"N must be >= 2, got {N}")
        if variant not in VARIANTS:
            raise DictionaryError(f"unknown variant {variant!r}")
        if not members:
            raise DictionaryError("dictionary needs at least one member")
        scales = tuple(float(t) for t in scales)
        if not scales or any(not 0 < t < 1 for t in scales):
            raise DictionaryError("all scales must lie in (0, 1)")
        for phi in members:
            if max(phi.derivative_norms[: N + 2]) > 1:
                raise DictionaryError(f"member {phi.name} violates the derivative bound")
        self.N = N
        self.members = list(members)
        self.scales = scales
        self.variant = variant
        self._kernels: Dict[Tuple[int, float, float], np.ndarray] = {}

    @property
    def n(self) -> int:
        return self.members[0].profile.n

    @property
    def max_reach(self) -> float:
        """Largest distance at which some ``phi_t`` is nonzero."""
        return max(phi.support_radius for phi in self.members) * max(self.scales)

    def kernel(self, j: int, t: float, h: float) -> np.ndarray:
        key = (j, t, h)
        if key not in self._kernels:
            self._kernels[key] = self.members[j].kernel(t, h)
        return self._kernels[key]

    def extended(self, members: Sequence[TestFunction] = (), scales: Sequence[float] = ()) -> "Dictionary":
        return Dictionary(self.N, self.members + list(members),
                          sorted(set(self.scales) | set(scales), reverse=True), self.variant)

    def describe(self) -> dict:
        return {"N": self.N, "variant": self.variant, "scales": list(self.scales),
                "members": [{"name": p.name, "support_radius": p.support_radius,
                             "integral": p.integral} for p in self.members]}


def make_dictionary(N: int, n: int = 1, n_scales: int = 6, n_translates: int = 0,
                    variant: str = "D0", members: int = 4, t_max: float = 0.5,
                    support_radius: Optional[float] = None) -> Dictionary:
    """Default dictionary: ``members`` bump variants times ``n_scales`` dyadic scales.

    For ``variant="DN"`` each member also appears dilated to
    ``support_radius`` (the caller truncates the huge ``2^{3(10+n)}`` radius
    to the domain, e.g. ``L/2``).
    """
    if N < 2:
        raise DictionaryError(f"N must be >= 2, got {N}")
    if not 0 < t_max < 1:
        raise DictionaryError("t_max must lie in (0, 1)")
    profiles = _base_profiles(n, members, n_translates)
    funcs = [TestFunction(p, N) for p in profiles]
    if variant == "DN":
        R = min(2.0 ** (3 * (10 + n)), support_radius if support_radius is not None else 4.0)
        if R > 1:
            funcs += [TestFunction(p, N, dilation=R) for p in profiles]
    elif variant != "D0":
        raise DictionaryError(f"unknown variant {variant!r}")
    scales = [t_max * 2.0 ** (-j) for j in range(n_scales)]
    return Dictionary(N, funcs, scales, variant)


# ---------------------------------------------------------------------------
# maximal operators


def convolve(f_values: np.ndarray, kernel: np.ndarray, h: float) -> np.ndarray:
    """``sum_y k(x - y) f(y) h^n`` by direct summation (zero outside the box)."""
    return signal.convolve(f_values, kernel, mode="same", method="direct") * h ** f_values.ndim


def _ball_footprint(radius_cells: float, n: int) -> np.ndarray:
    r = int(math.ceil(radius_cells))
    offs = np.arange(-r, r + 1)
    pts = np.meshgrid(*([offs] * n), indexing="ij")
    dist = np.sqrt(sum(p * p for p in pts))
    return dist < radius_cells


def grand_maximal(f: SampledFunction, dictionary: Dictionary, mode: str = CENTERED,
                  region: Optional[Tuple[slice, ...]] = None) -> SampledFunction:
    """``sup |phi_t * f|`` over the dictionary; ``nontangential`` also takes the
    sup over sample points ``z`` with ``|z - x| < t``.

    ``region`` (index slices) promises that ``f`` vanishes outside it; the
    work is then restricted to the region grown by the dictionary reach.
    """
    if mode not in (CENTERED, NONTANGENTIAL):
        raise ValueError(f"unknown mode {mode!r}")
    grid = f.grid
    values = f.values
    window = tuple(slice(0, grid.m) for _ in range(grid.n))
    if region is not None:
        pad = int(math.ceil((dictionary.max_reach + max(dictionary.scales)) / grid.h)) + 1
        window = tuple(slice(max(0, s.start - pad), min(grid.m, s.stop + pad)) for s in region)
        values = values[window]
    out = np.zeros(values.shape)
    for j in range(len(dictionary.members)):
        for t in dictionary.scales:
            conv = np.abs(convolve(values, dictionary.kernel(j, t, grid.h), grid.h))
            if mode == NONTANGENTIAL:
                foot = _ball_footprint(t / grid.h, grid.n)
                conv = ndimage.maximum_filter(conv, footprint=foot, mode="constant", cval=0.0)
            np.maximum(out, conv, out=out)
    if region is None:
        return SampledFunction(grid, out)
    full = np.zeros(grid.shape)
    full[window] = out
    return SampledFunction(grid, full)


def local_hl_maximal(f: SampledFunction, grid: Optional[Grid] = None, family: str = "all") -> SampledFunction:
    """``M^loc f(x)``: largest average of ``|f|`` over aligned cubes ``Q`` containing
    ``x`` with ``|Q| < 1``."""
    grid = grid or f.grid
    absf = np.abs(f.values)
    sums = _cubes.WindowSums(absf)
    out = np.zeros(grid.shape)
    for k in _cubes.side_counts(grid, 1.0, family, strict=True):
        avg = sums(k) / k ** grid.n
        # window starting at s covers x iff s <= x <= s + k - 1
        padded = np.pad(avg, [(k - 1, k - 1)] * grid.n, constant_values=-np.inf)
        np.maximum(out, _cubes.window_max(padded, k), out=out)
    return SampledFunction(grid, out)


def hardy_quasi_norm(f: SampledFunction, weight, params, dictionary: Dictionary) -> float:
    """``|| M^0_N f ||_{L^p_w}`` with the dictionary standing in for ``D^0_N``."""
    return weighted_lp_norm(grand_maximal(f, dictionary, CENTERED), weight, params.p)
