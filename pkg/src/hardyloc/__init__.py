"""Weighted local Hardy space machinery on uniform grids."""

from .atoms import (Atom, AtomicDecomposition, atomic_decompose, atomic_norm_upper,
                    finite_decompose, haar_atoms, oscillation_atom, reconstruct, validate_atom)
from .corpus import corpus_generate, standard_corpus
from .czd import CZDecomposition, cz_decompose, poly_project, verify_czd
from .grid import (Cube, Grid, SampledFunction, integrate, make_grid, weighted_lp_norm,
                   weighted_measure)
from .maximal import (Dictionary, grand_maximal, hardy_quasi_norm, local_hl_maximal,
                      make_dictionary)
from .operators import (StronglySingularKernel, Symbol, boundedness_experiment, commutator_apply,
                        make_symbol, psdo_apply, strongly_singular_apply)
from .weights import (HardyParams, Weight, ap_loc_constant, ap_phi_constant, bmo_loc_norm,
                      check_weight_properties, parse_weight)
from .whitney import (OpenSet, PartitionOfUnity, WhitneyCover, partition_of_unity,
                      superlevel_set, whitney_decompose)

__all__ = [
    "Atom",
    "AtomicDecomposition",
    "CZDecomposition",
    "Cube",
    "Dictionary",
    "Grid",
    "HardyParams",
    "OpenSet",
    "PartitionOfUnity",
    "SampledFunction",
    "StronglySingularKernel",
    "Symbol",
    "Weight",
    "WhitneyCover",
    "ap_loc_constant",
    "ap_phi_constant",
    "atomic_decompose",
    "atomic_norm_upper",
    "bmo_loc_norm",
    "boundedness_experiment",
    "check_weight_properties",
    "commutator_apply",
    "corpus_generate",
    "cz_decompose",
    "finite_decompose",
    "grand_maximal",
    "haar_atoms",
    "hardy_quasi_norm",
    "integrate",
    "local_hl_maximal",
    "make_dictionary",
    "make_grid",
    "make_symbol",
    "oscillation_atom",
    "parse_weight",
    "partition_of_unity",
    "poly_project",
    "psdo_apply",
    "reconstruct",
    "standard_corpus",
    "strongly_singular_apply",
    "superlevel_set",
    "validate_atom",
    "verify_czd",
    "weighted_lp_norm",
    "weighted_measure",
    "whitney_decompose",
]

__version__ = "0.1.0"
