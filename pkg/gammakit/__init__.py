"""
Spectral solvers for linear field equations in periodic media, built on
Fourier-space projection operators.
"""

from .fields import Field, Grid, LocalOperator, SupertensorLayout
from .homogenize import EffectiveResponse, effective_source, effective_tensor, homogenize
from .physics import CATALOG, Problem
from .solver import SolveOptions, SolveReport, solve_cell, solve_infinite

__all__ = [
    "CATALOG",
    "EffectiveResponse",
    "Field",
    "Grid",
    "LocalOperator",
    "Problem",
    "SolveOptions",
    "SolveReport",
    "SupertensorLayout",
    "effective_source",
    "effective_tensor",
    "homogenize",
    "solve_cell",
    "solve_infinite",
]
