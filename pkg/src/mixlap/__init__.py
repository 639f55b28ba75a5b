"""Solver and auditor for the mixed local-nonlocal Dirichlet problem.

    -Δu + (-Δ)^s u = g(x, u) in Ω,   u = 0 in ℝⁿ \\ Ω

on uniform lattices in one and two dimensions.
"""

from mixlap.domain import Domain, Grid, GridFunction, build_grid, boundary_distance
from mixlap.operators import (
    FractionalParams,
    OperatorAssembly,
    assemble,
    assemble_fractional,
    assemble_laplacian,
    apply_mixed,
    bilinear_form,
    gagliardo_seminorm_sq,
)

__version__ = "0.1.0"

__all__ = [
    "Domain",
    "Grid",
    "GridFunction",
    "build_grid",
    "boundary_distance",
    "FractionalParams",
    "OperatorAssembly",
    "assemble",
    "assemble_fractional",
    "assemble_laplacian",
    "apply_mixed",
    "bilinear_form",
    "gagliardo_seminorm_sq",
]
