"""Deterministic test-function corpus.

Every member is compactly supported in ``|x| <= 2`` so that maximal
functions and kernels of reach about 3 stay inside a domain with ``L >= 8``.
"""

from __future__ import annotations

from typing import Callable, Dict, List, Tuple

import numpy as np

from .grid import Grid, SampledFunction

RANDOM_DEGREE = 4


class CorpusError(ValueError):
    pass


def bump(r2: np.ndarray) -> np.ndarray:
    """``e * exp(-1/(1 - r^2))`` on ``r < 1`` (peak value 1)."""
    inside = r2 < 1
    out = np.zeros(np.shape(r2))
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
    return out


def _r2(coords, center=None, radius=1.0):
    center = center or (0.0,) * len(coords)
    return sum(((c - x0) / radius) ** 2 for c, x0 in zip(coords, center))


def tent(grid: Grid) -> SampledFunction:
    return SampledFunction(grid, np.maximum(0.0, 1.0 - np.sqrt(_r2(grid.coords()))))


def smooth_bump(grid: Grid) -> SampledFunction:
    return SampledFunction(grid, bump(_r2(grid.coords())))


def haar_osc(grid: Grid) -> SampledFunction:
    """Haar-type oscillation: ``sign(x_1)`` on the unit cube ``[-1, 1)^n``."""
    coords = grid.coords()
    box = np.ones(grid.shape, dtype=bool)
    for c in coords:
        box &= (c >= -1) & (c < 1)
    return SampledFunction(grid, np.where(box, np.where(coords[0] >= 0, 1.0, -1.0), 0.0))


def multi_bump(grid: Grid) -> SampledFunction:
    coords = grid.coords()
    out = np.zeros(grid.shape)
    for x0, r, a in ((-1.0, 0.5, 1.0), (0.3, 0.4, -0.7), (1.2, 0.5, 0.5)):
        center = (x0,) + (0.0,) * (grid.n - 1)
        out += a * bump(_r2(coords, center, r))
    return SampledFunction(grid, out)


def random_smooth(grid: Grid, seed: int, radius: float = 1.5) -> SampledFunction:
    """Trigonometric polynomial with Gaussian coefficients times a smooth cutoff.

    Redraws (deterministically) until the mean is not negligible, so the
    member pairs nontrivially with a positive bump.
    """
    coords = grid.coords()
    cutoff = bump(_r2(coords, radius=radius))
    rng = np.random.default_rng(seed)
    for _ in range(100):
        vals = np.zeros(grid.shape)
        for k in np.ndindex(*([RANDOM_DEGREE + 1] * grid.n)):
            a, b = rng.standard_normal(2)
            phase = np.pi * sum(ki * c for ki, c in zip(k, coords)) / radius
            vals += a * np.cos(phase) + b * np.sin(phase)
        vals *= cutoff
        peak = np.abs(vals).max()
        if abs(vals.sum()) * grid.cell_volume > 1e-3 * peak:
            return SampledFunction(grid, vals / peak)
    raise CorpusError(f"seed {seed} produced no member with nonzero mean")


NAMED: Dict[str, Callable[[Grid], SampledFunction]] = {
    "tent": tent, "bump": smooth_bump, "haar-osc": haar_osc, "multi-bump": multi_bump}


def corpus_generate(spec: str, grid: Grid, seed: int = 0) -> List[Tuple[str, SampledFunction]]:
    """Build ``(name, function)`` pairs from a spec such as ``"tent,bump,random:6"``."""
    out = []
    for item in (s.strip() for s in spec.split(",") if s.strip()):
        name, _, count = item.partition(":")
        if name == "random":
            k = int(count) if count else 1
            out += [(f"random{j}", random_smooth(grid, seed + j)) for j in range(k)]
        elif name in NAMED and not count:
            out.append((name, NAMED[name](grid)))
        else:
            raise CorpusError(f"unknown corpus member {item!r}")
    return out


STANDARD_SPEC = "tent,bump,haar-osc,multi-bump,random:6"


def standard_corpus(grid: Grid, seed: int = 0) -> List[Tuple[str, SampledFunction]]:
    """The ten-member corpus used by the experiments."""
    return corpus_generate(STANDARD_SPEC, grid, seed)
