"""Command-line experiment runner.

Exit codes: 0 success, 1 regression against a stored baseline, 2 usage or
config error, 3 compute error, 4 NaN found in an output artifact.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import atoms as atoms_mod
from .baseline import Baseline, fingerprint
from .corpus import STANDARD_SPEC, CorpusError, corpus_generate
from .czd import cz_decompose, verify_czd
from .grid import Grid, make_grid, weighted_lp_norm
from .maximal import (NONTANGENTIAL, grand_maximal, hardy_quasi_norm, local_hl_maximal,
                      make_dictionary)
from .operators import MODES, ATOM_L1, boundedness_experiment
from .weights import (HardyParams, WeightError, ap_loc_constant, check_weight_properties,
                      parse_weight)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_REGRESSION, EXIT_USAGE, EXIT_COMPUTE, EXIT_NAN = 0, 1, 2, 3, 4
EXPERIMENTS = ("weights", "maximal", "czd", "atoms", "norm-equiv", "op-bound", "finite")
NOT_FINGERPRINTED = ("out", "baseline", "rtol")


class UsageError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str = "weights"
    m: int = 1024
    L: float = 8.0
    n: int = 1
    weight: str = "const:1"
    p: float = 1.0
    q: float = math.inf
    s: Optional[int] = None
    N: Optional[int] = None
    q_w: float = 1.0
    variant: str = "DN"
    scales: int = 6
    translates: int = 0
    t_max: float = 0.5
    support_radius: Optional[float] = None
    corpus: str = STANDARD_SPEC
    seed: int = 0
    heights: str = "0.5,0.25"
    ap_p: str = "1.5,2,4"
    operator: str = "T:1"
    mode: str = "strong"
    op_p: float = 2.0
    finite_atoms: int = 5
    out: str = "out"
    baseline: Optional[str] = None
    rtol: float = 0.25

    def grid(self, refine: int = 1) -> Grid:
        return make_grid(self.n, self.L, self.m * refine)

    def params(self) -> HardyParams:
        return HardyParams.default(self.p, self.q, self.q_w, self.n, self.s, self.N)

    def fingerprint_fields(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in NOT_FINGERPRINTED}
        return _jsonable(d)


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(name: str, raw):
    kind = _TYPES[name]
    if raw is None or (isinstance(raw, str) and raw.lower() in ("none", "")):
        if "Optional" in str(kind):
            return None
        raise UsageError(f"{name} needs a value")
    try:
        if "int" in str(kind):
            return int(raw)
        if "float" in str(kind):
            return float(raw)
    except ValueError as exc:
        raise UsageError(f"bad value for {name}: {raw!r}") from exc
    return str(raw)


def load_config(path: Optional[str], overrides: Dict[str, object]) -> ExperimentConfig:
    """Defaults, then the INI file (all sections merged), then the flags."""
    values: Dict[str, object] = {}
    if path is not None:
        if not Path(path).exists():
            raise UsageError(f"config file {path} does not exist")
        parser = configparser.ConfigParser()
        parser.optionxform = str  # keep "L" and "N" distinct from "l" and "n"
        parser.read(path)
        for section in parser.sections():
            for key, val in parser[section].items():
                key = key.replace("-", "_")
                if key not in _TYPES:
                    raise UsageError(f"unknown config key {key!r}")
                values[key] = val
    values.update({k: v for k, v in overrides.items() if v is not None})
    cfg = ExperimentConfig(**{k: _coerce(k, v) for k, v in values.items()})
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    if cfg.experiment not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {cfg.experiment!r}")
    if cfg.mode not in MODES:
        raise UsageError(f"unknown mode {cfg.mode!r}")
    try:
        grid = cfg.grid()
        cfg.params()
        parse_weight(cfg.weight, grid)
        if cfg.corpus != "haar-atoms":
            corpus_generate(cfg.corpus, make_grid(cfg.n, cfg.L, 16), cfg.seed)
    except (WeightError, CorpusError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    if cfg.experiment == "finite" and math.isinf(cfg.q):
        raise UsageError("finite decompositions need q < inf (set --q)")
    if cfg.L < 4:
        raise UsageError("L must be at least 4 so supports plus kernel reach fit the domain")


# ---------------------------------------------------------------------------
# experiments; each returns (summary, constants, csv header, csv rows)

Result = Tuple[dict, Dict[str, float], List[str], List[list]]


def _fractions(text: str) -> List[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _dictionaries(cfg: ExperimentConfig, params: HardyParams):
    decomp = make_dictionary(params.N, cfg.n, cfg.scales, cfg.translates, cfg.variant,
                             t_max=cfg.t_max,
                             support_radius=cfg.support_radius if cfg.support_radius else cfg.L / 2)
    norm = make_dictionary(params.N, cfg.n, cfg.scales, 0, "D0", t_max=cfg.t_max)
    return decomp, norm


def run_weights(cfg: ExperimentConfig) -> Result:
    grid = cfg.grid()
    w = parse_weight(cfg.weight, grid)
    rows, constants, reports = [], {}, []
    for p in _fractions(cfg.ap_p):
        rep = check_weight_properties(w, p, p_sweep=_fractions(cfg.ap_p))
        reports.append(rep.to_dict())
        constants[f"ap_loc[{p:g}]"] = ap_loc_constant(w, p).constant
        rows.append([p, constants[f"ap_loc[{p:g}]"], rep.duality_lhs, rep.duality_rhs,
                     rep.duality_rel_err, rep.monotone])
    summary = {"reports": reports, "constants": constants}
    return summary, constants, ["p", "ap_loc", "dual_lhs", "dual_rhs", "dual_rel_err", "monotone"], rows


def run_maximal(cfg: ExperimentConfig) -> Result:
    grid = cfg.grid()
    params = cfg.params()
    w = parse_weight(cfg.weight, grid)
    _, norm_dict = _dictionaries(cfg, params)
    corpus = corpus_generate(cfg.corpus, grid, cfg.seed)
    rows, ratios, norms = [], [], {}
    for name, f in corpus:
        M0 = grand_maximal(f, norm_dict)
        Mloc = local_hl_maximal(f)
        pos = Mloc.values > 0
        ratio = float((M0.values[pos] / Mloc.values[pos]).max()) if pos.any() else 0.0
        norms[name] = weighted_lp_norm(M0, w, params.p)
        ratios.append(ratio)
        rows.append([name, ratio, norms[name]])
    K = 0.0
    for (a, f), (b, g) in zip(corpus, corpus[1:]):
        both = hardy_quasi_norm(f + g, w, params, norm_dict)
        K = max(K, both / (norms[a] + norms[b]))
    constants = {"upper_ratio_max": max(ratios), "quasi_triangle_K": K}
    return {"hardy_norms": norms, "constants": constants}, constants, \
        ["input", "M0_over_Mloc", "hardy_norm"], rows


def run_czd(cfg: ExperimentConfig) -> Result:
    grid = cfg.grid()
    params = cfg.params()
    w = parse_weight(cfg.weight, grid)
    decomp_dict, norm_dict = _dictionaries(cfg, params)
    rows, reports = [], []
    proj = bad = 0.0
    worst_slope = -math.inf
    for name, f in corpus_generate(cfg.corpus, grid, cfg.seed):
        Mf = grand_maximal(f, decomp_dict, NONTANGENTIAL)
        for frac in _fractions(cfg.heights):
            lam = frac * float(Mf.values.max())
            dec = cz_decompose(f, lam, params, decomp_dict, Mf=Mf)
            rep = verify_czd(dec, f, w, norm_dict)
            proj, bad = max(proj, rep.projection_bound), max(bad, rep.bad_maximal_ratio)
            if rep.decay_slope is not None:
                worst_slope = max(worst_slope, rep.decay_slope)
            reports.append(dict(rep.to_dict(), input=name, fraction=frac))
            rows.append([name, frac, lam, rep.cubes, rep.reconstruction_error,
                         rep.projection_bound, rep.bad_maximal_ratio,
                         rep.decay_slope])
    constants = {"projection_bound": proj, "bad_maximal_ratio": bad}
    summary = {"reports": reports, "constants": constants, "worst_decay_slope": worst_slope,
               "slope_bound": -(cfg.n + params.s + 1) + 0.5}
    return summary, constants, ["input", "fraction", "lambda", "cubes", "reconstruction_error",
                                "projection_bound", "bad_maximal_ratio", "decay_slope"], rows


def _atoms_on_grid(cfg: ExperimentConfig, grid: Grid, out_dir: Optional[Path]):
    params = cfg.params()
    w = parse_weight(cfg.weight, grid)
    decomp_dict, norm_dict = _dictionaries(cfg, params)
    rows = []
    for name, f in corpus_generate(cfg.corpus, grid, cfg.seed):
        dec = atoms_mod.atomic_decompose(f, w, params, decomp_dict)
        reps = [atoms_mod.validate_atom(a, w) for a in dec.atoms]
        if dec.single is not None:
            reps.append(atoms_mod.validate_atom(dec.single, w))
        err = float(np.abs(atoms_mod.reconstruct(dec).values - f.values).max()) / f.sup_norm()
        ratio = atoms_mod.atomic_norm_upper(dec) / hardy_quasi_norm(f, w, params, norm_dict)
        failing = sum(not r.passed for r in reps)
        worst = max((r.moment_residual for r in reps), default=0.0)
        rows.append([grid.m, name, len(dec.atoms), failing, worst, err, ratio])
        if out_dir is not None:
            dec.save(out_dir / f"atoms_{name}_m{grid.m}.json")
    return rows


def run_atoms(cfg: ExperimentConfig) -> Result:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = _atoms_on_grid(cfg, cfg.grid(), out)
    ratios = [r[6] for r in rows]
    constants = {"ratio_min": min(ratios), "ratio_max": max(ratios),
                 "failing_atoms": float(sum(r[3] for r in rows))}
    summary = {"constants": constants, "max_reconstruction_error": max(r[5] for r in rows),
               "max_moment_residual": max(r[4] for r in rows), "atoms": sum(r[2] for r in rows)}
    return summary, constants, ["m", "input", "atoms", "failing", "moment_residual",
                                "reconstruction_error", "ratio"], rows


def run_norm_equiv(cfg: ExperimentConfig) -> Result:
    rows = _atoms_on_grid(cfg, cfg.grid(), None) + _atoms_on_grid(cfg, cfg.grid(2), None)
    per_grid = {}
    for r in rows:
        per_grid.setdefault(r[0], []).append(r[6])
    (m1, r1), (m2, r2) = sorted(per_grid.items())
    lo_drift = abs(min(r2) - min(r1)) / min(r1)
    hi_drift = abs(max(r2) - max(r1)) / max(r1)
    constants = {"ratio_min": min(r2), "ratio_max": max(r2), "spread": max(r2) / min(r2)}
    summary = {"constants": constants, "coarse": {"m": m1, "min": min(r1), "max": max(r1)},
               "fine": {"m": m2, "min": min(r2), "max": max(r2)},
               "endpoint_drift": [lo_drift, hi_drift],
               "equivalent": max(r2) / min(r2) <= 100 and max(lo_drift, hi_drift) <= 0.25}
    return summary, constants, ["m", "input", "atoms", "failing", "moment_residual",
                                "reconstruction_error", "ratio"], rows


def run_op_bound(cfg: ExperimentConfig) -> Result:
    params = cfg.params() if cfg.mode.startswith("hardy") else None

    def corpus(grid):
        if cfg.corpus == "haar-atoms":
            w = parse_weight(cfg.weight, grid)
            atoms = atoms_mod.haar_atoms(grid, w, p=cfg.p if cfg.mode == ATOM_L1 else 1.0)
            return [(f"atom{j}", a.values) for j, a in enumerate(atoms)]
        return corpus_generate(cfg.corpus, grid, cfg.seed)

    hardy = None
    if params is not None:
        norm_dict = make_dictionary(params.N, cfg.n, cfg.scales, 0, "D0", t_max=cfg.t_max)
        hardy = lambda f, w: hardy_quasi_norm(f, w, params, norm_dict)  # noqa: E731
    p = cfg.op_p if cfg.mode == "strong" else 1.0
    rep = boundedness_experiment(cfg.operator, cfg.weight, p, corpus, cfg.mode,
                                 [cfg.grid(), cfg.grid(2)], tolerance=cfg.rtol, hardy=hardy)
    rows = [[m, name, r] for m, rs in zip(rep.grids, rep.ratios) for name, r in zip(rep.names, rs)]
    rows += [[m, name, lam, v] for m, name, lam, v in rep.probes]
    constants = {"sup_ratio": rep.sup_ratio}
    return rep.to_dict(), constants, ["m", "input", "ratio_or_lambda", "quotient"], rows


def run_finite(cfg: ExperimentConfig) -> Result:
    grid = cfg.grid()
    params = cfg.params()
    w = parse_weight(cfg.weight, grid)
    decomp_dict, norm_dict = _dictionaries(cfg, params)
    atoms = atoms_mod.haar_atoms(grid, w, params.p, params.q, params.s)[: cfg.finite_atoms]
    coeffs = list(np.random.default_rng(cfg.seed).uniform(0.5, 1.5, len(atoms)))
    fin = atoms_mod.finite_decompose(atoms, coeffs, w, params, decomp_dict, norm_dict)
    err = float(np.abs(fin.reconstruct().values - atoms_mod.combine_atoms(atoms, coeffs).values).max())
    constants = {"finite_ratio": fin.ratio}
    summary = {"constants": constants, "K": fin.K, "N0": fin.N0, "atoms": len(fin.atoms),
               "norm": fin.norm, "hardy_norm": fin.hardy_norm, "reconstruction_error": err}
    return summary, constants, ["K", "ratio"], [list(r) for r in fin.sweep]


RUNNERS = {"weights": run_weights, "maximal": run_maximal, "czd": run_czd, "atoms": run_atoms,
           "norm-equiv": run_norm_equiv, "op-bound": run_op_bound, "finite": run_finite}


# ---------------------------------------------------------------------------
# output


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def has_nan(obj) -> bool:
    if isinstance(obj, dict):
        return any(has_nan(v) for v in obj.values())
    if isinstance(obj, (list, tuple)):
        return any(has_nan(v) for v in obj)
    return isinstance(obj, float) and math.isnan(obj)


def run(cfg: ExperimentConfig, update_baseline: bool = False, stream=sys.stdout) -> int:
    out = Path(cfg.out)
    try:
        summary, constants, header, rows = RUNNERS[cfg.experiment](cfg)
    except Exception as exc:  # surfaced module error
        print(f"compute error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    key = fingerprint(cfg.fingerprint_fields())
    doc = _jsonable({"schema_version": SCHEMA_VERSION, "experiment": cfg.experiment,
                     "config": cfg.fingerprint_fields(), "fingerprint": key,
                     "results": summary, "constants": constants})
    rows = _jsonable(rows)
    if has_nan(doc) or has_nan(rows):
        print("NaN in output artifact", file=sys.stderr)
        return EXIT_NAN
    out.mkdir(parents=True, exist_ok=True)
    stem = cfg.experiment.replace("-", "_")
    (out / f"{stem}.json").write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    with open(out / f"{stem}.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    print(json.dumps(doc["constants"], sort_keys=True), file=stream)
    if cfg.baseline is None:
        return EXIT_OK
    base = Baseline(cfg.baseline)
    if update_baseline or not base.has(key):
        base.record(key, cfg.experiment, constants, cfg.rtol)
        base.save()
        print(f"baseline recorded for {key[:12]}", file=stream)
        return EXIT_OK
    diffs = base.compare(key, constants)
    if diffs:
        print("regression:", file=sys.stderr)
        for d in diffs:
            print(f"  {d}", file=sys.stderr)
        return EXIT_REGRESSION
    print(f"baseline matched for {key[:12]}", file=stream)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hardyloc", description="Weighted local Hardy space experiments")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="INI file; flags override it")
        sp.add_argument("--grid", help="m,L,n")
        sp.add_argument("--weight", help="weight descriptor, e.g. exp:1")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--baseline", help="baseline JSON path")
        sp.add_argument("--update-baseline", action="store_true")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--p", type=float)
        sp.add_argument("--q", type=float)
        sp.add_argument("--s", type=int)
        sp.add_argument("--N", type=int)
        sp.add_argument("--corpus")
        sp.add_argument("--heights", help="comma-separated fractions of sup Mf")
        sp.add_argument("--operator", help="identity, T:theta, commutator:theta, psdo:<symbol>")
        sp.add_argument("--mode", choices=MODES)
        sp.add_argument("--op-p", type=float)
        sp.add_argument("--variant", choices=("D0", "DN"))
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: getattr(args, k) for k in ("weight", "out", "baseline", "seed", "p", "q", "s", "N",
                                               "corpus", "heights", "operator", "mode", "op_p",
                                               "variant")}
    overrides["experiment"] = args.experiment
    try:
        if args.grid:
            parts = args.grid.split(",")
            if len(parts) != 3:
                raise UsageError("--grid expects m,L,n")
            overrides.update(m=parts[0], L=parts[1], n=parts[2])
        cfg = load_config(args.config, overrides)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return run(cfg, args.update_baseline)


if __name__ == "__main__":
    sys.exit(main())
