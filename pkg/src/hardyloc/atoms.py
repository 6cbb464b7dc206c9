"""Atoms, the multi-height atomic decomposition and finite decompositions.

For heights ``2^k`` the decomposition uses Calderon-Zygmund decompositions
``f = g^k + sum_i b_i^k`` and splits ``g^{k+1} - g^k = sum_i h_i^k`` with

    h_i^k = b_i^k - sum_j b_j^{k+1} eta_i^k + sum_{j projected} P_ij eta_j^{k+1},

where ``P_ij`` projects ``(f - P_j^{k+1}) eta_i^k`` against ``eta_j^{k+1}``.
Summing over ``i`` the cross terms cancel because the projection is linear
and ``sum_i eta_i^k = 1`` on the support of ``eta_j^{k+1}``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .czd import (PROJECTED, CZDecomposition, cz_decompose, monomials,
                  multi_indices, project_patch)
from .grid import Cube, Grid, SampledFunction, cube_measure, weight_values, weighted_measure
from .maximal import NONTANGENTIAL, Dictionary, grand_maximal, hardy_quasi_norm, make_dictionary
from .weights import HardyParams
from .whitney import DomainTooSmall, WhitneyParams

STANDARD, SINGLE = "standard", "single"
SCHEMA_VERSION = 1
Box = Tuple[slice, ...]


class DecompositionError(RuntimeError):
    pass


@dataclass
class Atom:
    """An atom stored as a patch of values on an index box of the grid."""

    grid: Grid
    box: Box
    patch: np.ndarray
    cube: Optional[Cube]
    kind: str = STANDARD
    p: float = 1.0
    q: float = math.inf
    s: int = 0
    height: Optional[int] = None
    index: Optional[int] = None
    case: str = ""

    @property
    def values(self) -> SampledFunction:
        out = np.zeros(self.grid.shape, dtype=self.patch.dtype)
        out[self.box] = self.patch
        return SampledFunction(self.grid, out)

    def to_dict(self) -> dict:
        vals = self.patch.ravel()
        if np.iscomplexobj(vals):
            vals = [[float(v.real), float(v.imag)] for v in vals]
        else:
            vals = [float(v) for v in vals]
        return {"kind": self.kind, "case": self.case, "height": self.height, "index": self.index,
                "p": self.p, "q": "inf" if math.isinf(self.q) else self.q, "s": self.s,
                "cube": self.cube.to_dict() if self.cube is not None else None,
                "box": [[b.start, b.stop] for b in self.box],
                "shape": list(self.patch.shape), "values": vals}

    @classmethod
    def from_dict(cls, grid: Grid, d: dict) -> "Atom":
        box = tuple(slice(a, b) for a, b in d["box"])
        vals = np.asarray(d["values"], dtype=float)
        if vals.ndim == 2:
            vals = vals[:, 0] + 1j * vals[:, 1]
        patch = vals.reshape(d["shape"])
        cube = Cube.from_dict(d["cube"]) if d.get("cube") else None
        q = math.inf if d["q"] == "inf" else float(d["q"])
        return cls(grid, box, patch, cube, d["kind"], float(d["p"]), q, int(d["s"]),
                   d.get("height"), d.get("index"), d.get("case", ""))


@dataclass
class AtomReport:
    passed: bool
    support_ok: bool
    norm_ok: bool
    moments_ok: bool
    moments_required: bool
    norm_ratio: float
    moment_residual: float

    def to_dict(self) -> dict:
        return asdict(self)


def moment_residual(atom: Atom, weight=None) -> float:
    """``max_alpha |int a (x - c_Q)^alpha| / (||a||_{L^q_w} |Q|^{1 + |alpha|/n})``."""
    q = atom.cube
    grid = atom.grid
    coords = [c[atom.box] for c in grid.coords()]
    exps = multi_indices(grid.n, atom.s)
    u = [c - x0 for c, x0 in zip(coords, q.center)]
    mom = np.abs(monomials(u, exps).reshape(len(exps), -1) @ atom.patch.ravel()) * grid.cell_volume
    norm = _lq_norm(atom, weight)
    if norm == 0:
        return 0.0
    scale = np.array([q.side ** (grid.n + sum(a)) for a in exps])
    return float((mom / (norm * scale)).max())


def _lq_norm(atom: Atom, weight) -> float:
    absa = np.abs(atom.patch)
    if math.isinf(atom.q):
        return float(absa.max(initial=0.0))
    w = weight_values(weight, atom.grid)[atom.box]
    return float((absa ** atom.q * w).sum() * atom.grid.cell_volume) ** (1 / atom.q)


def validate_atom(atom: Atom, weight=None, tau: float = 1e-8, tau_m: float = 1e-6) -> AtomReport:
    """Support, size and (for ``|Q| < 1``) vanishing-moment checks."""
    grid = atom.grid
    norm = _lq_norm(atom, weight)
    if atom.kind == SINGLE:
        wq = weighted_measure(weight, grid)
        bound = wq ** (1 / atom.q - 1 / atom.p) if not math.isinf(atom.q) else wq ** (-1 / atom.p)
        ratio = norm / bound
        ok = ratio <= 1 + tau
        return AtomReport(ok, True, ok, True, False, ratio, 0.0)
    cube = atom.cube
    inside = np.zeros(grid.shape, dtype=bool)
    inside[cube.index_box(grid)] = True
    full = np.zeros(grid.shape, dtype=bool)
    full[atom.box] = atom.patch != 0
    support_ok = not np.any(full & ~inside)
    wq = cube_measure(weight, grid, cube)
    expo = (1 / atom.q if not math.isinf(atom.q) else 0.0) - 1 / atom.p
    ratio = norm / wq ** expo if wq > 0 else math.inf
    norm_ok = ratio <= 1 + tau
    required = cube.volume < 1 - 1e-12
    resid = moment_residual(atom, weight) if required else 0.0
    moments_ok = resid <= tau_m
    return AtomReport(support_ok and norm_ok and moments_ok, support_ok, norm_ok, moments_ok,
                      required, ratio, resid)


def oscillation_atom(grid: Grid, weight, cube: Cube, p: float = 1.0, q: float = math.inf,
                     s: int = 0) -> Atom:
    """Haar-type atom on ``cube``: ``sign(x_1 - c_1)`` with polynomials of degree
    ``<= s`` projected out, scaled so ``||a||_{L^q_w} = w(Q)^(1/q - 1/p)``."""
    box = cube.index_box(grid)
    coords = [c[box] for c in grid.coords()]
    raw = np.where(coords[0] >= cube.center[0], 1.0, -1.0)
    if s > 0:
        u = [(c - x0) / cube.side for c, x0 in zip(coords, cube.center)]
        A = monomials(u, multi_indices(grid.n, s)).reshape(-1, raw.size).T
        coef, *_ = np.linalg.lstsq(A, raw.ravel(), rcond=None)
        raw = raw - (A @ coef).reshape(raw.shape)
    wq = cube_measure(weight, grid, cube)
    if math.isinf(q):
        scale = wq ** (-1 / p) / np.abs(raw).max()
    else:
        w = weight_values(weight, grid)[box]
        lq = float((np.abs(raw) ** q * w).sum() * grid.cell_volume) ** (1 / q)
        scale = wq ** (1 / q - 1 / p) / lq
    return Atom(grid, box, raw * scale, cube, STANDARD, p, q, s, None, None, "oscillation")


def haar_atoms(grid: Grid, weight, p: float = 1.0, q: float = math.inf, s: int = 0,
               sides: Sequence[float] = (2.0, 1.0, 0.5, 0.25),
               centers: Sequence[float] = (-1.0, -0.5, 0.0, 0.5, 1.0)) -> List[Atom]:
    """The sides x centers family of oscillation atoms (centres on the first axis)."""
    return [oscillation_atom(grid, weight, Cube((c,) + (0.0,) * (grid.n - 1), l), p, q, s)
            for l in sides for c in centers]


# ---------------------------------------------------------------------------
# helpers on index boxes


def _union_box(boxes: Sequence[Box]) -> Box:
    return tuple(slice(min(b[d].start for b in boxes), max(b[d].stop for b in boxes))
                 for d in range(len(boxes[0])))


def _intersect(a: Box, b: Box) -> Optional[Box]:
    out = tuple(slice(max(x.start, y.start), min(x.stop, y.stop)) for x, y in zip(a, b))
    return out if all(s.start < s.stop for s in out) else None


def _rel(inner: Box, outer: Box) -> Box:
    return tuple(slice(i.start - o.start, i.stop - o.start) for i, o in zip(inner, outer))


def _embed(patch: np.ndarray, box: Box, target: Box) -> np.ndarray:
    """Values of a patch living on ``box`` restricted to ``target`` (zero-extended)."""
    out = np.zeros(tuple(s.stop - s.start for s in target), dtype=patch.dtype)
    common = _intersect(box, target)
    if common is not None:
        out[_rel(common, target)] = patch[_rel(common, box)]
    return out


def bounding_cube(cubes: Sequence[Cube]) -> Cube:
    """Smallest cube containing the given cubes (centred on their bounding box)."""
    lo = np.min([c.lower() for c in cubes], axis=0)
    hi = np.max([c.upper() for c in cubes], axis=0)
    return Cube(tuple((lo + hi) / 2), float((hi - lo).max()))


def unit_split(cube: Cube) -> List[Cube]:
    """Tile a cube (grown to side 1 if smaller) by ``ceil(side/2)^n`` cubes of side in [1, 2]."""
    side = max(cube.side, 1.0)
    per_axis = max(1, math.ceil(side / 2 - 1e-12))
    sub = side / per_axis
    lo = np.asarray(cube.center) - side / 2
    out = []
    for idx in np.ndindex(*([per_axis] * cube.n)):
        out.append(Cube(tuple(lo + (np.asarray(idx) + 0.5) * sub), sub))
    return out


def _split_patch(grid: Grid, box: Box, patch: np.ndarray, cube: Cube):
    """Assign each cell of the patch to one subcube of ``unit_split(cube)``."""
    pieces = unit_split(cube)
    per_axis = round(len(pieces) ** (1 / grid.n))
    sub = pieces[0].side
    lo = np.asarray(cube.center) - max(cube.side, 1.0) / 2
    coords = [c[box] for c in grid.coords()]
    labels = [np.clip(np.floor((c - l) / sub).astype(int), 0, per_axis - 1) for c, l in zip(coords, lo)]
    flat = np.ravel_multi_index(labels, (per_axis,) * grid.n)
    for j, q in enumerate(pieces):
        part = np.where(flat == j, patch, 0)
        if np.any(part):
            yield q, part


# ---------------------------------------------------------------------------
# decomposition


@dataclass
class AtomicDecomposition:
    grid: Grid
    params: HardyParams
    atoms: List[Atom]
    coefficients: List[float]
    single: Optional[Atom] = None
    lambda0: float = 0.0
    k0: Optional[int] = None
    heights: Tuple[int, int] = (0, 0)
    base_good: Optional[SampledFunction] = None
    diagnostics: Dict[str, object] = field(default_factory=dict)

    def __len__(self):
        return len(self.atoms)

    def to_manifest(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "grid": self.grid.to_dict(),
                "params": self.params.to_dict(), "k0": self.k0, "heights": list(self.heights),
                "lambda0": self.lambda0,
                "single": self.single.to_dict() if self.single is not None else None,
                "atoms": [dict(a.to_dict(), coefficient=c) for a, c in zip(self.atoms, self.coefficients)],
                "diagnostics": self.diagnostics}

    @classmethod
    def from_manifest(cls, d: dict) -> "AtomicDecomposition":
        grid = Grid.from_dict(d["grid"])
        pd = dict(d["params"])
        pd["q"] = math.inf if pd["q"] == "inf" else float(pd["q"])
        params = HardyParams(**pd)
        atoms = [Atom.from_dict(grid, a) for a in d["atoms"]]
        coeffs = [float(a["coefficient"]) for a in d["atoms"]]
        single = Atom.from_dict(grid, d["single"]) if d.get("single") else None
        return cls(grid, params, atoms, coeffs, single, float(d.get("lambda0", 0.0)), d.get("k0"),
                   tuple(d.get("heights", (0, 0))), None, d.get("diagnostics", {}))

    def save(self, path, atom_csv_dir=None) -> None:
        Path(path).write_text(json.dumps(self.to_manifest(), sort_keys=True))
        if atom_csv_dir is not None:
            directory = Path(atom_csv_dir)
            directory.mkdir(parents=True, exist_ok=True)
            for j, a in enumerate(self.atoms):
                a.values.save_csv(directory / f"atom_{j:05d}.csv")

    @classmethod
    def load(cls, path) -> "AtomicDecomposition":
        return cls.from_manifest(json.loads(Path(path).read_text()))


def atomic_norm_upper(dec: AtomicDecomposition, p: Optional[float] = None) -> float:
    """``(sum |lambda|^p + |lambda_0|^p)^(1/p)`` of this particular decomposition."""
    p = dec.params.p if p is None else p
    total = sum(abs(c) ** p for c in dec.coefficients) + abs(dec.lambda0) ** p
    return total ** (1 / p)


def reconstruct(dec: AtomicDecomposition, include_single: bool = True) -> SampledFunction:
    dtype = complex if any(np.iscomplexobj(a.patch) for a in dec.atoms) else float
    out = np.zeros(dec.grid.shape, dtype=dtype)
    for a, c in zip(dec.atoms, dec.coefficients):
        out[a.box] += c * a.patch
    if include_single and dec.single is not None:
        out = out + dec.lambda0 * dec.single.patch
    return SampledFunction(dec.grid, out)


def _normalised_atoms(grid, weight, params, box, patch, cube, height, index, case):
    """Normalise ``patch`` on ``cube`` (splitting cubes of side > 2) into atoms."""
    if cube.side > 2 + 1e-12:
        parts = list(_split_patch(grid, box, patch, cube))
        case = "split"
    else:
        parts = [(cube, patch)]
    out = []
    for q, part in parts:
        peak = float(np.abs(part).max(initial=0.0))
        if peak == 0:
            continue
        lam = peak * cube_measure(weight, grid, q) ** (1 / params.p)
        out.append((lam, Atom(grid, box, part / lam, q, STANDARD, params.p, params.q, params.s,
                              height, index, case)))
    return out


def _clean_moments(grid: Grid, box: Box, h: np.ndarray, cube: Cube, s: int):
    """Remove the rounding-level moments of ``h`` up to degree ``s`` about ``cube``.

    The correction is a polynomial times ``|h|``, so the support is kept; its
    size is returned so callers can confirm it is at rounding level.
    """
    coords = [c[box] for c in grid.coords()]
    exps = multi_indices(grid.n, s)
    u = monomials([(c - x0) / cube.side for c, x0 in zip(coords, cube.center)], exps)
    u = u.reshape(len(exps), -1)
    w = np.abs(h).ravel()
    if not w.any():
        return h, 0.0
    w = w / w.max()
    gram = (u * w) @ u.T
    mom = u @ h.ravel()
    coef = np.linalg.lstsq(gram, mom, rcond=1e-13)[0]
    corr = (coef @ u * w).reshape(h.shape)
    return h - corr, float(np.abs(corr).max())


def _tail_atoms(grid, weight, params, values: np.ndarray, height):
    support = np.argwhere(values != 0)
    if support.size == 0:
        return []
    lo, hi = support.min(axis=0), support.max(axis=0) + 1
    box = tuple(slice(int(a), int(b)) for a, b in zip(lo, hi))
    lower = -grid.L + lo * grid.h
    upper = -grid.L + hi * grid.h
    side = max(float((upper - lower).max()), 1.0)
    cube = Cube(tuple((lower + upper) / 2), side)
    parts = list(_split_patch(grid, box, values[box], cube))
    out = []
    for q, part in parts:
        lam = float(np.abs(part).max()) * cube_measure(weight, grid, q) ** (1 / params.p)
        out.append((lam, Atom(grid, box, part / lam, q, STANDARD, params.p, params.q, params.s,
                              height, None, "tail")))
    return out


def _height_atoms(f: SampledFunction, lo: CZDecomposition, hi: CZDecomposition, s: int):
    """``(box, h_i^k, cube, has_moments)`` for every cube of the lower decomposition."""
    grid = f.grid
    coords = grid.coords()
    pou_lo, pou_hi = lo.partition, hi.partition
    out = []
    for i, qi in enumerate(lo.cover.cubes):
        box_i = pou_lo.boxes[i]
        eta_i = pou_lo.eta_patches[i]
        partners = [j for j in range(len(hi)) if _intersect(box_i, pou_hi.boxes[j]) is not None]
        box = _union_box([box_i] + [pou_hi.boxes[j] for j in partners])
        h = _embed(lo.bad_patches[i], box_i, box).astype(f.values.dtype)
        moments = lo.branches[i] == PROJECTED
        for j in partners:
            box_j = pou_hi.boxes[j]
            eta_i_on_j = _embed(eta_i, box_i, box_j)
            rel = _rel(box_j, box)
            h[rel] -= hi.bad_patches[j] * eta_i_on_j
            if hi.branches[j] == PROJECTED:
                local = [c[box_j] for c in coords]
                resid = (f.values[box_j] - hi.projections[j](*local)) * eta_i_on_j
                qj = hi.cover.cubes[j]
                pij = project_patch(resid, pou_hi.eta_patches[j], local, qj.center, qj.side, s)
                h[rel] += pij(*local) * pou_hi.eta_patches[j]
            else:
                moments = False
        if f.real:
            h = h.real
        cubes = [lo.cover.closure(i)] + [hi.cover.closure(j) for j in partners]
        out.append((box, h, bounding_cube(cubes), moments))
    return out


def atomic_decompose(f: SampledFunction, weight, params: HardyParams, dictionary: Dictionary,
                     k_range: Optional[Tuple[int, int]] = None, max_depth: int = 60,
                     whitney: Optional[WhitneyParams] = None, tol: float = 1e-13,
                     Mf: Optional[SampledFunction] = None) -> AtomicDecomposition:
    """Atomic decomposition of ``f`` over the heights ``2^k``.

    ``dictionary`` defines the non-tangential maximal function whose
    superlevel sets drive the construction.  When ``inf Mf > 0`` the lowest
    height is ``k0`` with ``2^(k0-1) <= inf Mf < 2^k0`` and ``g^k0`` becomes the
    single atom.  Otherwise heights descend until the good part vanishes (to
    ``tol``); whatever is left is cut into unit-scale tail atoms.
    """
    grid = f.grid
    if Mf is None:
        Mf = grand_maximal(f, dictionary, NONTANGENTIAL)
    fmax = f.sup_norm()
    if fmax == 0:
        return AtomicDecomposition(grid, params, [], [], heights=(0, 0))
    sup, inf = float(Mf.values.max()), float(Mf.values.min())
    top = math.ceil(math.log2(sup))
    if 2.0 ** top == sup:
        top += 1
    if k_range is not None and k_range[1] + 1 < top:
        raise DecompositionError(f"k_range too small: heights up to 2^{k_range[1] + 1} "
                                 f"leave a nonempty open set; use k_max >= {top - 1}")
    k0 = math.floor(math.log2(inf)) + 1 if inf > 0 else None
    margin = 0 if k0 is not None else 1
    cache: Dict[int, CZDecomposition] = {}

    def cz(k):
        if k not in cache:
            cache[k] = cz_decompose(f, 2.0 ** k, params, dictionary, Mf=Mf, whitney=whitney,
                                    margin_cells=margin)
        return cache[k]

    # choose the lowest height
    if k0 is not None:
        k_lo = max(k0, k_range[0]) if k_range is not None else k0
    else:
        k_lo = top
        floor_k = k_range[0] if k_range is not None else top - max_depth
        while k_lo > floor_k:
            try:
                dec = cz(k_lo - 1)
            except DomainTooSmall:
                break
            k_lo -= 1
            if dec.g.sup_norm() <= tol * fmax:
                break
    cz(top)
    atoms: List[Atom] = []
    coeffs: List[float] = []
    telescope = {}
    cleaned, dropped = 0.0, 0.0
    noise = 64 * np.finfo(float).eps * fmax
    cases: Dict[str, int] = {}
    for k in range(top - 1, k_lo - 1, -1):
        lo, hi = cz(k), cz(k + 1)
        pieces = _height_atoms(f, lo, hi, params.s)
        total = np.zeros(grid.shape, dtype=f.values.dtype)
        for i, (box, h, cube, moments) in enumerate(pieces):
            total[box] += h
            peak = float(np.abs(h).max(initial=0.0))
            if peak <= noise:
                # rounding debris of exact cancellations, e.g. f polynomial on a cube
                dropped = max(dropped, peak / fmax)
                continue
            case = "moment" if cube.side < 1 else "large"
            if moments and cube.volume < 1:
                h, corr = _clean_moments(grid, box, h, cube, params.s)
                cleaned = max(cleaned, corr / fmax)
            if not moments and cube.volume < 1:
                cube = Cube(cube.center, 1.0)
                case = "enlarged"
            for lam, atom in _normalised_atoms(grid, weight, params, box, h, cube, k, i, case):
                atoms.append(atom)
                coeffs.append(lam)
                cases[atom.case] = cases.get(atom.case, 0) + 1
        expected = hi.g.values - lo.g.values
        telescope[k] = float(np.abs(total - expected).max()) / fmax
    base = cz(k_lo).g
    single, lambda0 = None, 0.0
    if k0 is not None and k_lo == k0:
        peak = base.sup_norm()
        if peak > 0:
            lambda0 = peak * weighted_measure(weight, grid) ** (1 / params.p)
            single = Atom(grid, tuple(slice(0, grid.m) for _ in range(grid.n)),
                          base.values / lambda0, None, SINGLE, params.p, params.q, params.s,
                          k0, None, "single")
    else:
        for lam, atom in _tail_atoms(grid, weight, params, base.values, k_lo):
            atoms.append(atom)
            coeffs.append(lam)
            cases["tail"] = cases.get("tail", 0) + 1
    diag = {"telescoping_error": max(telescope.values(), default=0.0),
            "heights": len(telescope), "moment_cleanup": cleaned,
            "dropped_noise": dropped, "cases": dict(sorted(cases.items())),
            "base_good_sup": base.sup_norm() / fmax, "Mf_sup": sup, "Mf_inf": inf}
    return AtomicDecomposition(grid, params, atoms, coeffs, single, lambda0, k0, (k_lo, top),
                               base, diag)


# ---------------------------------------------------------------------------
# finite decompositions


@dataclass
class FiniteDecomposition:
    decomposition: AtomicDecomposition
    K: int
    N0: int
    atoms: List[Atom]
    coefficients: List[float]
    norm: float
    hardy_norm: float
    ratio: float
    sweep: List[Tuple[int, float]]

    def reconstruct(self) -> SampledFunction:
        out = np.zeros(self.decomposition.grid.shape,
                       dtype=complex if any(np.iscomplexobj(a.patch) for a in self.atoms) else float)
        for a, c in zip(self.atoms, self.coefficients):
            out[a.box] += c * a.patch
        d = self.decomposition
        if d.single is not None:
            out = out + d.lambda0 * d.single.patch
        return SampledFunction(d.grid, out)


def combine_atoms(atoms: Sequence[Atom], coefficients: Sequence[float]) -> SampledFunction:
    grid = atoms[0].grid
    out = np.zeros(grid.shape, dtype=complex if any(np.iscomplexobj(a.patch) for a in atoms) else float)
    for a, c in zip(atoms, coefficients):
        out[a.box] += c * a.patch
    return SampledFunction(grid, out)


def finite_decompose(atoms: Sequence[Atom], coefficients: Sequence[float], weight, params: HardyParams,
                     dictionary: Dictionary, norm_dictionary: Optional[Dictionary] = None,
                     K_max: int = 200) -> FiniteDecomposition:
    """Finite decomposition of a finite atom combination.

    Atoms with ``index + |height| <= K`` are kept; the remainder is cut into
    the ``N0`` unit-scale cubes tiling the support cube and each piece is
    normalised as an atom.  The smallest ``K`` whose pieces all carry
    coefficients ``<= N0^(-1/p) ||f||`` is used.
    """
    if math.isinf(params.q):
        raise DecompositionError("finite decompositions need q < infinity")
    f = combine_atoms(atoms, coefficients)
    grid = f.grid
    norm_dictionary = norm_dictionary or make_dictionary(params.N, grid.n)
    hnorm = hardy_quasi_norm(f, weight, params, norm_dictionary)
    dec = atomic_decompose(f, weight, params, dictionary)
    support = bounding_cube([a.cube for a in atoms if a.cube is not None] or
                            [Cube((0.0,) * grid.n, 2 * grid.L)])
    support = bounding_cube([support] + [a.cube for a in dec.atoms])
    N0 = len(unit_split(support))
    p = params.p
    fixed = [(c, a) for c, a in zip(dec.coefficients, dec.atoms) if a.index is None]
    ranked = [(c, a) for c, a in zip(dec.coefficients, dec.atoms) if a.index is not None]
    base = f.values - (dec.lambda0 * dec.single.patch if dec.single is not None else 0)
    threshold = N0 ** (-1 / p) * hnorm
    sweep = []
    for K in range(K_max + 1):
        kept = fixed + [(c, a) for c, a in ranked if a.index + abs(a.height) <= K]
        rest = np.array(base, dtype=f.values.dtype)
        for c, a in kept:
            rest[a.box] -= c * a.patch
        if np.abs(rest).max() <= 1e-14 * f.sup_norm():
            rest = np.zeros_like(rest)
        box = tuple(slice(0, grid.m) for _ in range(grid.n))
        pieces = []
        for q, part in _split_patch(grid, box, rest, support):
            peak = float(np.abs(part).max())
            lam = peak * cube_measure(weight, grid, q) ** (1 / p)
            pieces.append((lam, Atom(grid, box, part / lam, q, STANDARD, p, params.q, params.s,
                                     None, None, "remainder")))
        total = sum(c ** p for c, _ in kept) + sum(c ** p for c, _ in pieces) + dec.lambda0 ** p
        norm = total ** (1 / p)
        sweep.append((K, norm / hnorm if hnorm > 0 else math.inf))
        if all(c <= threshold for c, _ in pieces):
            coeffs = [c for c, _ in kept] + [c for c, _ in pieces]
            return FiniteDecomposition(dec, K, N0, [a for _, a in kept] + [a for _, a in pieces],
                                       coeffs, norm, hnorm, norm / hnorm, sweep)
        if len(kept) == len(fixed) + len(ranked):
            break
    raise DecompositionError("remainder too large: increase K")
