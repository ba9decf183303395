"""Convex subproblem assembly and interior-point solution."""

from .barrier import SolveDiagnostics, SubproblemError, interior_shift, solve
from .layout import PrimalPoint, SolverOptions, VarLayout
from .program import ConvexProgram, KKTReport, assemble_subproblem, check_kkt

__all__ = [
    "ConvexProgram",
    "KKTReport",
    "PrimalPoint",
    "SolveDiagnostics",
    "SolverOptions",
    "SubproblemError",
    "VarLayout",
    "assemble_subproblem",
    "check_kkt",
    "interior_shift",
    "solve",
]
