"""Calderon-Zygmund decomposition of degree ``s`` at a single height.

Given ``f`` and ``lam``, the open set ``{Mf > lam}`` is covered by Whitney
cubes with partition of unity ``eta_i``.  Cubes of side ``< 1`` carry the
projected bad part ``b_i = (f - P_i) eta_i``, where ``P_i`` is the degree-``s``
polynomial with ``<f - P_i, q eta_i> = 0`` for every ``q`` of degree ``<= s``;
larger cubes carry ``b_i = f eta_i``.  The good part is ``g = f - sum b_i``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .grid import Grid, SampledFunction, weight_values, weighted_lp_norm
from .maximal import CENTERED, NONTANGENTIAL, Dictionary, grand_maximal
from .weights import HardyParams
from .whitney import (OpenSet, PartitionOfUnity, WhitneyCover, WhitneyParams,
                      partition_of_unity, superlevel_set, whitney_decompose)

PROJECTED, PLAIN = "projected", "plain"
ORTHOGONALITY_TOL = 1e-8


class DegenerateMomentSystem(ArithmeticError):
    pass


def multi_indices(n: int, s: int) -> List[Tuple[int, ...]]:
    """Exponents of all monomials of degree ``<= s`` in ``n`` variables, graded."""
    if n == 1:
        return [(k,) for k in range(s + 1)]
    return [(a, d - a) for d in range(s + 1) for a in range(d, -1, -1)]


def monomials(u: Sequence[np.ndarray], exponents) -> np.ndarray:
    """Stack of ``u^alpha`` with the exponent index first."""
    out = []
    for alpha in exponents:
        term = np.ones(np.shape(u[0]))
        for ud, e in zip(u, alpha):
            if e:
                term = term * ud ** e
        out.append(term)
    return np.array(out)


@dataclass
class PolyProjection:
    """``P(x) = sum_alpha c_alpha ((x - center)/scale)^alpha``."""

    index: int
    center: Tuple[float, ...]
    scale: float
    degree: int
    coefficients: np.ndarray
    condition: float
    rank: int
    residual: float

    @property
    def exponents(self):
        return multi_indices(len(self.center), self.degree)

    def __call__(self, *coords) -> np.ndarray:
        u = [(c - x0) / self.scale for c, x0 in zip(coords, self.center)]
        return np.tensordot(self.coefficients, monomials(u, self.exponents), axes=1)

    def to_dict(self) -> dict:
        c = self.coefficients
        coeffs = [float(v) for v in c.real] if not np.iscomplexobj(c) else [[float(v.real), float(v.imag)] for v in c]
        return {"index": self.index, "center": list(self.center), "scale": self.scale,
                "degree": self.degree, "coefficients": coeffs,
                "condition": self.condition if math.isfinite(self.condition) else None,
                "rank": self.rank, "residual": self.residual}


def project_patch(values: np.ndarray, eta: np.ndarray, coords: Sequence[np.ndarray],
                  center, scale: float, s: int, index: int = -1) -> PolyProjection:
    """Solve the weighted normal equations on one patch of cells.

    The Gram matrix is singular when ``eta`` lives on fewer samples than
    there are monomials; the minimum-norm solution is then used, which still
    makes ``(f - P) eta`` unique.  Only a failed orthogonality check raises.
    """
    n = len(coords)
    exps = multi_indices(n, s)
    u = [(c - x0) / scale for c, x0 in zip(coords, center)]
    basis = monomials(u, exps).reshape(len(exps), -1)
    w = eta.ravel()
    mass = w.sum()
    if not mass > 0:
        raise DegenerateMomentSystem("bump has no mass on the grid")
    gram = (basis * w) @ basis.T / mass
    rhs = (basis * w) @ values.ravel() / mass
    coef, _, rank, sv = scipy.linalg.lstsq(gram, rhs, cond=1e-13, lapack_driver="gelsd")
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    resid_vec = (basis * w) @ (values.ravel() - coef @ basis)
    fmax = float(np.abs(values.ravel()[w > 0]).max()) if np.any(w > 0) else 0.0
    residual = float(np.abs(resid_vec).max() / (mass * fmax)) if fmax > 0 else 0.0
    if residual > ORTHOGONALITY_TOL:
        raise DegenerateMomentSystem(f"orthogonality residual {residual:.2e} on cube {index}")
    return PolyProjection(index, tuple(float(c) for c in center), float(scale), s,
                          np.asarray(coef), cond, int(rank), residual)


def poly_project(f: SampledFunction, eta: SampledFunction, s: int, center=None,
                 scale: Optional[float] = None) -> PolyProjection:
    """Projection of ``f`` onto degree-``s`` polynomials in ``L^2(eta dx)``."""
    if s < 0:
        raise ValueError("degree must be >= 0")
    coords = f.grid.coords()
    w = eta.values
    if center is None:
        center = tuple(float((c * w).sum() / w.sum()) for c in coords)
    if scale is None:
        support = w > 0
        scale = max(float(c[support].max() - c[support].min()) for c in coords) + f.grid.h
    return project_patch(f.values, w, coords, center, scale, s)


@dataclass
class CZDecomposition:
    f: SampledFunction
    lam: float
    params: HardyParams
    Mf: SampledFunction
    omega: OpenSet
    cover: WhitneyCover
    partition: PartitionOfUnity
    branches: List[str]
    projections: List[Optional[PolyProjection]]
    bad_patches: List[np.ndarray]
    g: SampledFunction
    diagnostics: Dict[str, float] = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return self.f.grid

    def __len__(self):
        return len(self.bad_patches)

    def box(self, i: int):
        return self.partition.boxes[i]

    def bad(self, i: int) -> SampledFunction:
        out = np.zeros(self.grid.shape, dtype=self.bad_patches[i].dtype)
        out[self.box(i)] = self.bad_patches[i]
        return SampledFunction(self.grid, out, real=self.f.real)

    def bad_sum(self) -> np.ndarray:
        out = np.zeros(self.grid.shape, dtype=self.f.values.dtype)
        for box, b in zip(self.partition.boxes, self.bad_patches):
            out[box] += b
        return out

    def poly_eta(self, i: int) -> np.ndarray:
        """``P_i eta_i`` on the patch of cube ``i`` (zeros on the plain branch)."""
        if self.projections[i] is None:
            return np.zeros_like(self.bad_patches[i])
        box = self.box(i)
        coords = [c[box] for c in self.grid.coords()]
        return self.projections[i](*coords) * self.partition.eta_patches[i]

    def reconstruction_error(self) -> float:
        return float(np.abs(self.f.values - self.g.values - self.bad_sum()).max())

    def to_json_dict(self) -> dict:
        cubes = []
        for i, q in enumerate(self.cover.cubes):
            proj = self.projections[i]
            cubes.append({"cube": q.to_dict(), "branch": self.branches[i],
                          "dist_to_complement": float(self.cover.dist[i]),
                          "projection": proj.to_dict() if proj is not None else None})
        return {"height": self.lam, "params": self.params.to_dict(),
                "whitney": self.cover.params.to_dict(), "overlap": self.cover.overlap,
                "cubes": cubes, "diagnostics": self.diagnostics}

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), sort_keys=True, indent=1))

    def save_csv(self, directory) -> None:
        """``g.csv`` plus one ``b_XXXX.csv`` per bad part."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.g.save_csv(directory / "g.csv")
        for i in range(len(self)):
            self.bad(i).save_csv(directory / f"b_{i:04d}.csv")


def cz_decompose(f: SampledFunction, lam: float, params: HardyParams, dictionary: Dictionary,
                 Mf: Optional[SampledFunction] = None, whitney: Optional[WhitneyParams] = None,
                 margin_cells: int = 1, order: Optional[int] = None) -> CZDecomposition:
    """Decompose ``f = g + sum_i b_i`` at height ``lam``.

    ``Mf`` defaults to the non-tangential grand maximal function over
    ``dictionary``; pass it in when decomposing at many heights.
    """
    if Mf is None:
        Mf = grand_maximal(f, dictionary, NONTANGENTIAL)
    omega = superlevel_set(Mf, lam, margin_cells)
    cover = whitney_decompose(omega, whitney)
    pou = partition_of_unity(cover, order if order is not None else params.N + 2)
    coords = f.grid.coords()
    branches, projections, bads = [], [], []
    total = np.zeros(f.grid.shape, dtype=f.values.dtype)
    for i, q in enumerate(cover.cubes):
        box = pou.boxes[i]
        eta = pou.eta_patches[i]
        fv = f.values[box]
        if q.side < 1 - 1e-12:
            local = [c[box] for c in coords]
            proj = project_patch(fv, eta, local, q.center, q.side, params.s, i)
            b = (fv - proj(*local)) * eta
            branches.append(PROJECTED)
        else:
            proj = None
            b = fv * eta
            branches.append(PLAIN)
        if f.real:
            b = b.real
        projections.append(proj)
        bads.append(b)
        total[box] += b
    g = SampledFunction(f.grid, f.values - total, real=f.real)
    return CZDecomposition(f, lam, params, Mf, omega, cover, pou, branches, projections, bads, g)


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class CZReport:
    height: float
    cubes: int
    reconstruction_error: float
    orthogonality_residual: float
    moment_residual: float
    projection_bound: float
    bad_maximal_ratio: float
    good_sup_ratio: float
    decay_slopes: List[float]
    decay_slope: Optional[float]
    good_maximal_ratio: float
    bad_sum_ratio: float
    vanishing_side: Optional[float]

    def to_dict(self) -> dict:
        return asdict(self)


def _cell_distance(grid: Grid, center) -> np.ndarray:
    return np.sqrt(sum((c - x0) ** 2 for c, x0 in zip(grid.coords(), center)))


def decay_slope(Mb: np.ndarray, grid: Grid, cube, star_factor: float, r_max: float,
                r_min: float = 0.0, bins: int = 12) -> Optional[float]:
    """Log-log slope of the binned maxima of ``Mb`` against the distance to the centre.

    Only points outside the star cube with ``r_min <= r <= r_max`` are used;
    ``None`` when fewer than three nonzero bins (one octave) are available.
    """
    r = _cell_distance(grid, cube.center)
    lo = max(r_min, star_factor * cube.diam / 2)
    if not r_max > 2 * lo:
        return None
    edges = np.geomspace(lo, r_max, bins + 1)
    xs, ys = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        sel = (r >= a) & (r < b)
        if sel.any():
            peak = float(Mb[sel].max())
            if peak > 0:
                xs.append(math.log(math.sqrt(a * b)))
                ys.append(math.log(peak))
    if len(xs) < 3:
        return None
    return float(np.polyfit(xs, ys, 1)[0])


def verify_czd(dec: CZDecomposition, f: SampledFunction, weight, dictionary: Dictionary,
               fit_cubes: int = 8) -> CZReport:
    """Measured constants of the bounded-projection, local maximal and decay estimates.

    ``dictionary`` should be the unit-support family used for ``M^0``.
    """
    grid = f.grid
    lam = dec.lam
    p = dec.params.p
    coords = grid.coords()
    proj, bad = 0.0, 0.0
    ortho, moment = 0.0, 0.0
    slopes = []
    reach = max(dictionary.scales) * max(m.support_radius for m in dictionary.members)
    t_min = min(dictionary.scales)
    fitted = 0
    vanishing = None
    exps = multi_indices(grid.n, dec.params.s)
    for i, q in enumerate(dec.cover.cubes):
        b = dec.bad_patches[i]
        box = dec.box(i)
        significant = float(np.abs(b).max(initial=0.0)) > 1e-9 * lam
        if dec.branches[i] == PROJECTED:
            ortho = max(ortho, dec.projections[i].residual)
            proj = max(proj, float(np.abs(dec.poly_eta(i)).max()) / lam)
            u = [(c[box] - x0) / q.side for c, x0 in zip(coords, q.center)]
            mom = np.abs(monomials(u, exps).reshape(len(exps), -1) @ b.ravel())
            scale = float(np.abs(f.values[box] * dec.partition.eta_patches[i]).sum()) or 1.0
            moment = max(moment, float(mom.max()) / scale)
        if not significant:
            continue
        Mb = grand_maximal(dec.bad(i), dictionary, CENTERED, region=box).values
        star_mask = dec.cover.star(i).mask(grid)
        ref = dec.Mf.values[star_mask]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(ref > 0, Mb[star_mask] / ref, 0.0)
        bad = max(bad, float(ratio.max()))
        outside = Mb[~star_mask]
        if not np.any(outside > 0):
            vanishing = q.side if vanishing is None else min(vanishing, q.side)
        if dec.branches[i] == PROJECTED and fitted < fit_cubes:
            slope = decay_slope(Mb, grid, q, dec.cover.params.b, 0.8 * reach, r_min=2 * t_min)
            if slope is not None:
                slopes.append(slope)
                fitted += 1
    w = weight_values(weight, grid)
    M0g = grand_maximal(dec.g, dictionary, CENTERED).values
    num = float(np.sum(M0g * w))
    den = lam ** (1 - p) * float(np.sum(dec.Mf.values ** p * w))
    good_maximal = num / den if den > 0 else 0.0
    q_exp = dec.params.q if math.isfinite(dec.params.q) else 2.0
    absb = np.zeros(grid.shape)
    for box, b in zip(dec.partition.boxes, dec.bad_patches):
        absb[box] += np.abs(b)
    fnorm = weighted_lp_norm(f, weight, q_exp)
    bad_sum = weighted_lp_norm(SampledFunction(grid, absb), weight, q_exp) / fnorm if fnorm > 0 else 0.0
    fmax = f.sup_norm() or 1.0
    report = CZReport(
        height=lam, cubes=len(dec), reconstruction_error=dec.reconstruction_error() / fmax,
        orthogonality_residual=ortho, moment_residual=moment, projection_bound=proj, bad_maximal_ratio=bad,
        good_sup_ratio=dec.g.sup_norm() / lam, decay_slopes=slopes,
        decay_slope=float(np.median(slopes)) if slopes else None,
        good_maximal_ratio=good_maximal, bad_sum_ratio=bad_sum, vanishing_side=vanishing)
    dec.diagnostics = report.to_dict()
    return report
