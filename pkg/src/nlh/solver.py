"""Sparse direct solves and the outer nonlinear iterations."""
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import (SCHEMES, Solution, assemble_blocks, assemble_system,
                       build_space, linear_system, residual_vector)
from .mesh import prolongation_values

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 50


class LinearSolveError(RuntimeError):
    """Factorization failed or the solve is inaccurate."""


@dataclass
class NonlinearReport:
    iterations: int = 0
    rel_increments: list = field(default_factory=list)
    converged: bool = False
    final_residual_norm: float = float("nan")
    scheme: str = "newton"

    def to_json(self):
        return json.dumps(asdict(self))


def solve_linear(system, check=1e-10):
    """Solve a :class:`~nlh.assembly.RealBlockSystem` by sparse LU.

    Returns the complex coefficient vector.
    """
    A = system.matrix.tocsc()
    b = system.rhs
    if A.shape[0] == 0:
        return np.zeros(0, complex)
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise LinearSolveError(f"singular system: {exc}") from exc
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise LinearSolveError("non-finite solution")
    nb = np.linalg.norm(b)
    if nb > 0:
        res = np.linalg.norm(A @ x - b) / nb
        if res > check:
            # one step of iterative refinement before giving up
            x = x + lu.solve(b - A @ x)
            res = np.linalg.norm(A @ x - b) / nb
            if res > check:
                raise LinearSolveError(f"relative residual {res:.2e} exceeds {check:.0e}")
    return system.to_complex(x)


def energy_norm(blocks, c):
    return float(np.sqrt(max(np.real(np.vdot(c, blocks.energy @ c)), 0.0)))


def _is_linear(space, problem):
    return problem.epsilon == 0 or not space.mesh.in_omega0.any()


def newton_solve(space, problem, u0=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                 scheme="newton", blocks=None):
    """Nonlinear solve by Newton, frozen-nonlinearity or modified Newton.

    Iterates until the relative energy-norm increment falls below ``tol``.
    Without ``u0`` the iteration starts from the solution of the problem
    with the Kerr term removed.

    Returns
    -------
    (Solution, NonlinearReport)
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if blocks is None:
        blocks = assemble_blocks(space, problem)
    report = NonlinearReport(scheme=scheme)
    nload = np.linalg.norm(blocks.load)

    def rel_residual(c):
        r = np.linalg.norm(residual_vector(space, problem, c, blocks))
        return r / nload if nload > 0 else r

    if u0 is None:
        u = solve_linear(linear_system(blocks))
    else:
        u = np.asarray(getattr(u0, "coeffs", u0), dtype=complex).copy()
        if len(u) != space.n_dofs:
            raise ValueError("initial guess does not live on this space")
    linear = _is_linear(space, problem)

    for it in range(1, max_iter + 1):
        new = solve_linear(assemble_system(blocks, space, problem, u, scheme))
        denom = energy_norm(blocks, new)
        diff = energy_norm(blocks, new - u)
        inc = diff / denom if denom > 0 else diff
        report.rel_increments.append(inc)
        report.iterations = it
        u = new
        if inc <= tol:
            report.converged = True
            break
        if linear:
            # the step map is constant, so the next increment would vanish
            report.converged = True
            break
        if not np.isfinite(inc):
            break
    report.final_residual_norm = float(rel_residual(u))
    if not report.converged:
        log.warning("%s did not converge in %d iterations (last increment %.2e)",
                    scheme, report.iterations, report.rel_increments[-1])
    return Solution(space, u), report


def continuation_step(space, problem_at_I, warm_start, tol=DEFAULT_TOL,
                      max_iter=DEFAULT_MAX_ITER, scheme="newton", blocks=None):
    """Newton solve seeded with a neighbouring solution on the same space."""
    if warm_start.space is not space:
        if warm_start.space.mesh.uid != space.mesh.parent_uid:
            raise ValueError("warm start lives on an unrelated mesh")
        warm_start = prolongate(warm_start, space)
    return newton_solve(space, problem_at_I, warm_start.coeffs, tol, max_iter, scheme, blocks)


def prolongate(solution, fine):
    """Exact embedding of a coarse P1 solution into a refined space.

    ``fine`` may be a mesh or an :class:`~nlh.assembly.FeSpace`.
    """
    fine_space = fine if hasattr(fine, "free") else build_space(fine)
    fine_mesh = fine_space.mesh
    coarse_mesh = solution.space.mesh
    if fine_mesh.uid == coarse_mesh.uid:
        return Solution(fine_space, solution.coeffs.copy())
    if fine_mesh.parent_uid != coarse_mesh.uid:
        raise ValueError("fine mesh does not descend from the solution's mesh")
    values = prolongation_values(fine_mesh, solution.values)
    return Solution(fine_space, fine_space.restrict(values))
