"""Hybridized polygonal discretisation of the Poisson problem with a
negative-norm flux stabilisation realised through an auxiliary virtual
element space."""

from .assembly import DofLayout, SaddleSystem, apply_dirichlet, assemble, condense
from .auxspace import AuxSpaceK, build_aux_space, infsup_constant, residual_vector
from .basis import EdgeBasis, ScaledMonomialBasis, gauss_legendre, gauss_lobatto
from .dualnorms import (DualNormOracle, EdgeNormWeights, h12_seminorm, minus_half_norm,
                        minus_half_seminorm, minus_one_norm, minus_one_seminorm)
from .mesh import MeshFamilySpec, PolyMesh, generate, read_mesh, write_mesh
from .solve_post import (MANUFACTURED, ConvergenceRecord, SolutionFields, compute_errors,
                         convergence_rates, diagnostic_norms, solve)
from .stabilizer import (Stabilizer, check_assumption_coercivity,
                         check_assumption_continuity, s_apply)

__version__ = "0.1.0"

__all__ = [
    "AuxSpaceK", "ConvergenceRecord", "DofLayout", "DualNormOracle", "EdgeBasis",
    "EdgeNormWeights", "MANUFACTURED", "MeshFamilySpec", "PolyMesh", "SaddleSystem",
    "ScaledMonomialBasis", "SolutionFields", "Stabilizer", "apply_dirichlet", "assemble",
    "build_aux_space", "check_assumption_coercivity", "check_assumption_continuity",
    "compute_errors", "condense", "convergence_rates", "diagnostic_norms",
    "gauss_legendre", "gauss_lobatto", "generate", "h12_seminorm", "infsup_constant",
    "minus_half_norm", "minus_half_seminorm", "minus_one_norm", "minus_one_seminorm",
    "read_mesh", "residual_vector", "s_apply", "solve", "write_mesh",
]
