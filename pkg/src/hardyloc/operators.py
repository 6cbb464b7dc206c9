"""Strongly singular convolutions, commutators, pseudodifferential operators and
the boundedness experiment harness.

The strongly singular kernel ``k(x) = e^{i|x|^-theta} |x|^-n v(x)`` is applied
through cell-integrated weights: on ``|y| <= 1`` the radial integral has the
closed form

    int_a^b e^{i r^-theta} dr / r = (E(a^-theta) - E(b^-theta)) / theta,
    E(u) = Ci(u) + i Si(u),

and on ``1 <= |y| <= 2`` (where the cutoff ``v`` varies) Gauss-Legendre is
used.  In two dimensions the cell is swept in polar coordinates with
Gauss-Legendre over the angle.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy as sp
from scipy import signal, special

from .grid import Grid, SampledFunction, weight_values, weighted_lp_norm
from .whitney import smoothstep

_GL_RADIAL = np.polynomial.legendre.leggauss(16)
_GL_ANGLE = np.polynomial.legendre.leggauss(12)
CUTOFF_ORDER = 3


class SupportError(ValueError):
    pass


def cutoff(r) -> np.ndarray:
    """Radial cutoff ``v``: 1 on ``r <= 1``, 0 on ``r >= 2``."""
    return smoothstep(2.0 - np.asarray(r, dtype=float), CUTOFF_ORDER)


def _E(u):
    si, ci = special.sici(u)
    return ci + 1j * si


def _gauss(a, b, fn, rule=_GL_RADIAL):
    nodes, weights = rule
    a, b = np.asarray(a, float), np.asarray(b, float)
    mid, half = (a + b) / 2, (b - a) / 2
    x = mid[..., None] + half[..., None] * nodes
    return (fn(x) * weights).sum(axis=-1) * half


@dataclass(frozen=True)
class StronglySingularKernel:
    """``k(x) = e^{i|x|^-theta} |x|^-n v(x)``; ``exclude`` cells (sup-norm radius) are dropped."""

    theta: float
    n: int = 1
    exclude: int = 1

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if self.exclude < 1:
            raise ValueError("at least the diagonal cell must be excluded")

    def __call__(self, *coords) -> np.ndarray:
        r = np.sqrt(sum(np.asarray(c, float) ** 2 for c in coords))
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.exp(1j * r ** -self.theta) / r ** self.n * cutoff(r)
        return np.where((r > 0) & (r < 2), out, 0)

    def radial_integral(self, a, b) -> np.ndarray:
        """``int_a^b e^{i r^-theta} v(r) dr / r`` for ``0 < a <= b``."""
        a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
        th = self.theta
        inner_b = np.minimum(b, 1.0)
        with np.errstate(over="ignore"):  # a = 1e-300 placeholder for the excluded cell
            out = np.where(a < inner_b, (_E(a ** -th) - _E(np.where(a < inner_b, inner_b, a) ** -th)) / th, 0)
        lo = np.maximum(a, 1.0)
        hi = np.minimum(b, 2.0)
        outer = _gauss(lo, np.maximum(hi, lo),
                       lambda r: np.exp(1j * r ** -th) * cutoff(r) / r)
        return out + np.where(hi > lo, outer, 0)

    def weights(self, h: float) -> np.ndarray:
        """Cell integrals of ``k`` on the offset lattice ``j h``, ``|j h| <= 2``.

        Cells whose centre lies beyond radius 2 get weight 0 so the discrete
        kernel vanishes there cell-exactly.
        """
        reach = int(math.floor(2.0 / h + 1e-9))
        offs = np.arange(-reach, reach + 1)
        if self.n == 1:
            j = np.abs(offs).astype(float)
            w = self.radial_integral(np.maximum(j - 0.5, 1e-300) * h, (j + 0.5) * h)
        else:
            J = np.meshgrid(offs, offs, indexing="ij")
            w = self._cell_integrals_2d(J[0].astype(float), J[1].astype(float), h)
        centre = np.sqrt(sum(o ** 2 for o in np.meshgrid(*([offs] * self.n), indexing="ij"))) * h
        w = np.where(centre <= 2.0 + 1e-12, w, 0)
        excl = np.max(np.abs(np.array(np.meshgrid(*([offs] * self.n), indexing="ij"))), axis=0) < self.exclude
        return np.where(excl, 0, w)

    def _cell_integrals_2d(self, j1, j2, h):
        out = np.zeros(j1.shape, dtype=complex)
        for idx in np.ndindex(*j1.shape):
            a, b = j1[idx], j2[idx]
            if max(abs(a), abs(b)) < self.exclude:
                continue
            out[idx] = self._polar_cell(((a - 0.5) * h, (a + 0.5) * h), ((b - 0.5) * h, (b + 0.5) * h))
        return out

    def _polar_cell(self, xr, yr):
        corners = [(x, y) for x in xr for y in yr]
        angles = np.array([math.atan2(y, x) for x, y in corners])
        # unwrap around the cell direction so the angular range is contiguous
        ref = math.atan2((yr[0] + yr[1]) / 2, (xr[0] + xr[1]) / 2)
        angles = ref + (angles - ref + math.pi) % (2 * math.pi) - math.pi
        cuts = np.sort(angles)
        total = 0j
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            if hi - lo < 1e-15:
                continue
            nodes, wts = _GL_ANGLE
            phi = (lo + hi) / 2 + (hi - lo) / 2 * nodes
            c, s = np.cos(phi), np.sin(phi)
            r_in, r_out = _ray_box(c, s, xr, yr)
            vals = self.radial_integral(r_in, np.maximum(r_out, r_in))
            total += (vals * wts).sum() * (hi - lo) / 2
        return total


def _ray_box(c, s, xr, yr):
    """Entry and exit radii of rays ``t (c, s)`` through the box (slab method)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        tx = np.sort(np.stack([xr[0] / c, xr[1] / c]), axis=0)
        ty = np.sort(np.stack([yr[0] / s, yr[1] / s]), axis=0)
    tx = np.where(np.isfinite(tx), tx, np.where(np.arange(2)[:, None] == 0, -np.inf, np.inf))
    ty = np.where(np.isfinite(ty), ty, np.where(np.arange(2)[:, None] == 0, -np.inf, np.inf))
    r_in = np.maximum(np.maximum(tx[0], ty[0]), 1e-300)
    r_out = np.minimum(tx[1], ty[1])
    return r_in, r_out


def _check_support(f: SampledFunction, reach: float = 2.0) -> None:
    vals = np.abs(f.values) > 0
    if not vals.any():
        return
    grid = f.grid
    for c in grid.coords():
        if np.abs(c[vals]).max() + reach > grid.L:
            raise SupportError("supp f + B(0, 2) leaves the domain")


def strongly_singular_apply(f: SampledFunction, kernel: StronglySingularKernel,
                            check: bool = True) -> SampledFunction:
    """Discrete principal value ``sum_j w_j f(x - j h)`` with the diagonal excluded."""
    if check:
        _check_support(f)
    w = kernel.weights(f.grid.h)
    out = signal.convolve(f.values.astype(complex), w, mode="same", method="direct")
    return SampledFunction(f.grid, out, real=False)


def commutator_apply(b: SampledFunction, f: SampledFunction, kernel: StronglySingularKernel,
                     form: str = "product") -> SampledFunction:
    """``[b, T] f = b T f - T(b f)``; ``form="integrand"`` sums ``(b(x) - b(y)) k(x-y) f(y)`` directly."""
    if not b.real:
        raise ValueError("b must be real-valued")
    _check_support(f)
    if form == "product":
        return b * strongly_singular_apply(f, kernel, False) - strongly_singular_apply(b * f, kernel, False)
    if form != "integrand":
        raise ValueError(f"unknown form {form!r}")
    w = kernel.weights(f.grid.h)
    reach = w.shape[0] // 2
    grid = f.grid
    bp = np.pad(b.values, reach)
    fp = np.pad(f.values.astype(complex), reach)
    out = np.zeros(grid.shape, dtype=complex)
    core = tuple(slice(reach, reach + grid.m) for _ in range(grid.n))
    for off in zip(*np.nonzero(w)):
        shift = tuple(o - reach for o in off)
        src = tuple(slice(reach - s, reach - s + grid.m) for s in shift)
        out += (bp[core] - bp[src]) * w[off] * fp[src]
    return SampledFunction(grid, out, real=False)


# ---------------------------------------------------------------------------
# pseudodifferential operators


@dataclass
class Symbol:
    """Closed-form symbol ``sigma(x, xi)`` in sympy with its derivative-bound table."""

    name: str
    n: int
    expr: sp.Expr
    order: float = 0.0
    delta: float = 0.0
    bounds: Optional[np.ndarray] = None

    def __post_init__(self):
        xs, xis = symbol_variables(self.n)
        fn = sp.lambdify(xs + xis, self.expr, "numpy")
        self._fn = fn

    def __call__(self, x: Sequence[np.ndarray], xi: Sequence[np.ndarray]) -> np.ndarray:
        shape = np.broadcast_shapes(*[np.shape(v) for v in list(x) + list(xi)])
        return np.broadcast_to(np.asarray(self._fn(*x, *xi), dtype=complex), shape)

    def derivative_table(self, max_order: int = 3, x_range: float = 4.0, xi_range: float = 64.0,
                         samples: int = 129) -> np.ndarray:
        """``C[a, b] = max |D_x^a D_xi^b sigma| / (1+|xi|)^(m - b + delta a)`` along the first axes."""
        xs, xis = symbol_variables(self.n)
        X = np.linspace(-x_range, x_range, samples)
        XI = np.linspace(-xi_range, xi_range, samples)
        gx, gxi = np.meshgrid(X, XI, indexing="ij")
        args = [gx] + [np.zeros_like(gx)] * (self.n - 1) + [gxi] + [np.zeros_like(gx)] * (self.n - 1)
        table = np.zeros((max_order + 1, max_order + 1))
        for a in range(max_order + 1):
            for b in range(max_order + 1):
                d = sp.diff(self.expr, xs[0], a, xis[0], b)
                vals = np.abs(np.broadcast_to(sp.lambdify(xs + xis, d, "numpy")(*args), gx.shape))
                table[a, b] = float((vals / (1 + np.abs(gxi)) ** (self.order - b + self.delta * a)).max())
        self.bounds = table
        return table


def symbol_variables(n: int):
    return list(sp.symbols("x0:%d" % n, real=True)), list(sp.symbols("xi0:%d" % n, real=True))


def make_symbol(name: str, n: int = 1, t: float = 1.0) -> Symbol:
    """Named order-zero symbols: ``identity``, ``bessel`` ((1+|xi|^2)^{-it}), ``coefficient``
    (``1 + cos(x_1)/2``) and ``mixed`` (their product)."""
    xs, xis = symbol_variables(n)
    xi2 = sum(v ** 2 for v in xis)
    bessel = sp.exp(-sp.I * sp.nsimplify(t) * sp.log(1 + xi2))
    coeff = 1 + sp.cos(xs[0]) / 2
    table = {"identity": sp.Integer(1), "bessel": bessel, "coefficient": coeff,
             "mixed": coeff * bessel}
    if name not in table:
        raise ValueError(f"unknown symbol {name!r}")
    return Symbol(name, n, table[name])


def frequencies(grid: Grid) -> np.ndarray:
    """Lattice ``xi_k = k / (2L)`` for ``k = -m/2 .. m/2 - 1``."""
    return (np.arange(grid.m) - grid.m // 2) / (2 * grid.L)


def _dft_matrix(grid: Grid, sign: int) -> np.ndarray:
    return np.exp(sign * 2j * np.pi * np.outer(frequencies(grid), grid.axis))


def fourier_transform(f: SampledFunction) -> np.ndarray:
    """``f-hat(xi_k) = sum_j f(x_j) e^{-2 pi i x_j xi_k} h^n`` via per-axis matrices."""
    grid = f.grid
    F = _dft_matrix(grid, -1)
    out = f.values.astype(complex)
    for ax in range(grid.n):
        out = np.moveaxis(np.tensordot(F, out, axes=([1], [ax])), 0, ax)
    return out * grid.h ** grid.n


def psdo_apply(f: SampledFunction, sigma: Symbol, chunk: int = 4096) -> SampledFunction:
    """``Tf(x) = sum_k sigma(x, xi_k) e^{2 pi i x xi_k} f-hat(xi_k) (1/2L)^n``."""
    grid = f.grid
    fhat = fourier_transform(f).ravel()
    xi = np.meshgrid(*([frequencies(grid)] * grid.n), indexing="ij")
    xi = [v.ravel() for v in xi]
    xs = [c.ravel() for c in grid.coords()]
    out = np.empty(grid.size, dtype=complex)
    dxi = (1 / (2 * grid.L)) ** grid.n
    for s in range(0, grid.size, chunk):
        xc = [v[s:s + chunk, None] for v in xs]
        phase = np.exp(2j * np.pi * sum(a * b[None, :] for a, b in zip(xc, xi)))
        sym = sigma(xc, [v[None, :] for v in xi])
        out[s:s + chunk] = (sym * phase) @ fhat * dxi
    return SampledFunction(grid, out.reshape(grid.shape), real=False)


# ---------------------------------------------------------------------------
# experiments

Operator = Callable[[SampledFunction], SampledFunction]
STRONG, WEAK, HARDY_L1, HARDY_HARDY, ATOM_L1 = "strong", "weak", "hardy-to-L1", "hardy-to-hardy", "atom-L1"
MODES = (STRONG, WEAK, HARDY_L1, HARDY_HARDY, ATOM_L1)


def make_operator(spec: str, n: int = 1) -> Operator:
    """Operators by id: ``identity``, ``T:theta``, ``commutator:theta`` (with ``b = log(1+|x|)``),
    ``psdo:<symbol name>``."""
    name, _, arg = spec.partition(":")
    if name == "identity":
        return lambda f: f
    if name == "T":
        kern = StronglySingularKernel(float(arg or 1.0), n)
        return lambda f: strongly_singular_apply(f, kern)
    if name == "commutator":
        kern = StronglySingularKernel(float(arg or 1.0), n)

        def apply(f):
            b = SampledFunction(f.grid, np.log1p(f.grid.radius()))
            return commutator_apply(b, f, kern)
        return apply
    if name == "psdo":
        sym = make_symbol(arg or "identity", n)
        return lambda f: psdo_apply(f, sym)
    raise ValueError(f"unknown operator {spec!r}")


@dataclass
class BoundednessReport:
    operator: str
    weight: str
    p: float
    mode: str
    grids: List[int]
    names: List[str]
    ratios: List[List[float]]
    sup_ratio: float
    drift: float
    stable: bool
    probes: List[Tuple[int, str, float, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("probes")
        return d

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["m", "input", "lambda", "quotient"])
            for row in self.probes:
                w.writerow(row)


def weak_quotients(Tf: SampledFunction, weight, levels: int = 24) -> List[Tuple[float, float]]:
    """``(lam, lam * w({|Tf| > lam}))`` on a geometric grid of heights."""
    absT = np.abs(Tf.values)
    top = float(absT.max())
    if top == 0:
        return []
    w = weight_values(weight, Tf.grid)
    out = []
    for lam in np.geomspace(top * 1e-3, top, levels, endpoint=False):
        out.append((float(lam), float(lam * w[absT > lam].sum() * Tf.grid.cell_volume)))
    return out


def boundedness_experiment(op: Union[str, Operator], weight: Union[str, Callable], p: float,
                           corpus: Callable, mode: str, grids: Sequence[Grid],
                           tolerance: float = 0.25, hardy=None) -> BoundednessReport:
    """Measure operator ratios over a corpus at several grids.

    ``corpus(grid)`` returns ``(name, function)`` pairs; ``weight`` is a
    descriptor or a callable ``grid -> Weight``.  ``hardy(f, w)`` supplies the
    quasi-norm for the Hardy modes.
    """
    from .weights import parse_weight

    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    op_id = op if isinstance(op, str) else getattr(op, "__name__", "operator")
    weight_id = weight if isinstance(weight, str) else getattr(weight, "__name__", "weight")
    sups, all_ratios, names, probes = [], [], [], []
    for grid in grids:
        apply = make_operator(op, grid.n) if isinstance(op, str) else op
        w = parse_weight(weight, grid) if isinstance(weight, str) else weight(grid)
        ratios = []
        names = []
        for name, f in corpus(grid):
            Tf = apply(f)
            if mode == STRONG:
                r = weighted_lp_norm(Tf, w, p) / weighted_lp_norm(f, w, p)
            elif mode == WEAK:
                qs = weak_quotients(Tf, w)
                denom = weighted_lp_norm(f, w, 1.0)
                probes += [(grid.m, name, lam, v / denom) for lam, v in qs]
                r = max((v for _, v in qs), default=0.0) / denom
            elif mode == HARDY_L1:
                r = weighted_lp_norm(Tf, w, 1.0) / hardy(f, w)
            elif mode == HARDY_HARDY:
                r = hardy(Tf, w) / hardy(f, w)
            else:
                r = weighted_lp_norm(Tf, w, 1.0)
            ratios.append(float(r))
            names.append(name)
        all_ratios.append(ratios)
        sups.append(max(ratios))
    drift = abs(sups[-1] - sups[0]) / sups[0] if len(sups) > 1 and sups[0] > 0 else 0.0
    return BoundednessReport(op_id, weight_id, p, mode, [g.m for g in grids], names, all_ratios,
                             sups[-1], drift, drift <= tolerance, probes)
