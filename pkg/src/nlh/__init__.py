"""Adaptive P1 and CIP finite elements for the Kerr nonlinear Helmholtz equation.

The main entry points::

    from nlh import corner_soliton_problem, notched_mesh, build_space, newton_solve

    problem, exact = corner_soliton_problem(k=5.0, q=1.0)
    space = build_space(notched_mesh())
    solution, report = newton_solve(space, problem)
"""
__version__ = "0.1.0"

from .adaptive import AdaptConfig, AdaptError, AdaptTrace, adapt_loop, uniform_loop
from .assembly import assemble_blocks, assemble_system, build_space, interpolate
from .estimator import dorfler_mark, estimate
from .mesh import (Mesh, MeshError, build_mesh, hexagon_mesh, notched_mesh, refine,
                   refine_uniform, write_vtk)
from .problem import (PENALTY, Problem, bistability_problem, corner_soliton_problem,
                      norms_against_exact)
from .solver import LinearSolveError, newton_solve

__all__ = [
    "AdaptConfig", "AdaptError", "AdaptTrace", "LinearSolveError", "Mesh", "MeshError",
    "PENALTY", "Problem", "adapt_loop", "assemble_blocks", "assemble_system",
    "bistability_problem", "build_mesh", "build_space", "corner_soliton_problem",
    "dorfler_mark", "estimate", "hexagon_mesh", "interpolate", "newton_solve",
    "norms_against_exact", "notched_mesh", "refine", "refine_uniform", "uniform_loop",
    "write_vtk", "__version__",
]
