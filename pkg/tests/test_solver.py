import numpy as np
import pytest
import scipy.sparse as sp

from nlh.assembly import (RealBlockSystem, assemble_blocks, build_space, interpolate,
                          residual_vector)
from nlh.experiments import contraction_ratios, convergence_order
from nlh.mesh import evaluate_p1, hexagon_mesh, refine, refine_uniform
from nlh.solver import (LinearSolveError, continuation_step, energy_norm, newton_solve,
                        prolongate, solve_linear)
from nlh.verify import polynomial_problem, small_mesh


def test_solve_linear_recovers_known_solution(rng):
    n = 30
    A = sp.random(n, n, density=0.3, random_state=1) + 5 * sp.eye(n)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    system = RealBlockSystem(A.tocsr().astype(complex), sp.csr_matrix((n, n), dtype=complex),
                             A @ x)
    assert np.allclose(solve_linear(system), x)


def test_solve_linear_rejects_singular_system():
    n = 4
    K = sp.csr_matrix(np.diag([1.0, 1.0, 0.0, 1.0]).astype(complex))
    system = RealBlockSystem(K, sp.csr_matrix((n, n), dtype=complex), np.ones(n, complex))
    with pytest.raises(LinearSolveError):
        solve_linear(system)


@pytest.mark.parametrize("scheme", ["newton", "frozen", "modified_newton"])
def test_all_schemes_reach_the_same_discrete_solution(scheme):
    space = build_space(small_mesh())
    problem = polynomial_problem()
    ref, _ = newton_solve(space, problem, tol=1e-13)
    sol, report = newton_solve(space, problem, tol=1e-12, scheme=scheme)
    assert report.converged and report.scheme == scheme
    assert np.abs(sol.coeffs - ref.coeffs).max() < 1e-9 * np.abs(ref.coeffs).max()
    assert report.final_residual_norm < 1e-9


def test_newton_converges_quadratically_and_frozen_linearly():
    space = build_space(refine_uniform(refine_uniform(small_mesh())))
    base = polynomial_problem()
    problem = type(base)(k=3.0, k_inside=4.5, epsilon=5.0, f=base.f, g=base.g)
    _, newton = newton_solve(space, problem, tol=1e-12)
    _, frozen = newton_solve(space, problem, tol=1e-6, scheme="frozen")
    assert newton.converged and frozen.converged
    assert 1.7 <= convergence_order(newton.rel_increments) <= 2.3
    ratios = contraction_ratios(frozen.rel_increments)
    assert np.all(ratios[-10:] < 1) and np.ptp(ratios[-10:]) < 0.1


def test_linear_problem_needs_one_step():
    space = build_space(small_mesh())
    sol, report = newton_solve(space, polynomial_problem().linearized())
    assert report.converged and report.iterations == 1
    assert np.abs(residual_vector(space, polynomial_problem().linearized(), sol.coeffs)).max() < 1e-12


def test_newton_input_validation():
    space = build_space(small_mesh())
    problem = polynomial_problem()
    with pytest.raises(ValueError):
        newton_solve(space, problem, tol=0)
    with pytest.raises(ValueError):
        newton_solve(space, problem, scheme="picard")
    with pytest.raises(ValueError):
        newton_solve(space, problem, u0=np.zeros(3))


def test_report_marks_non_convergence():
    space = build_space(small_mesh())
    _, report = newton_solve(space, polynomial_problem(), scheme="frozen", max_iter=2, tol=1e-14)
    assert not report.converged and report.iterations == 2
    assert '"converged": false' in report.to_json()


def test_energy_norm_of_constant():
    mesh = hexagon_mesh(4)
    space = build_space(mesh)
    blocks = assemble_blocks(space, polynomial_problem())
    kt = polynomial_problem().k_elements(mesh)
    assert energy_norm(blocks, np.ones(space.n_dofs)) == pytest.approx(
        np.sqrt((kt ** 2 * mesh.areas).sum()))


def test_prolongate_embeds_exactly(rng):
    mesh = small_mesh()
    space = build_space(mesh)
    sol = interpolate(space, lambda p: np.sin(3 * p[:, 0]) * p[:, 0] + 1j * p[:, 1] * p[:, 0])
    fine = refine(mesh, [0, 4])
    up = prolongate(sol, fine)
    pts = rng.uniform(0, 1, (40, 2))
    assert np.allclose(evaluate_p1(fine, up.values, pts), evaluate_p1(mesh, sol.values, pts))
    assert prolongate(sol, space).coeffs is not sol.coeffs
    with pytest.raises(ValueError):
        prolongate(sol, refine(fine, [0]))


def test_continuation_step_warm_starts_on_refined_mesh():
    problem = polynomial_problem()
    coarse = build_space(small_mesh())
    sol, _ = newton_solve(coarse, problem)
    fine = build_space(refine_uniform(coarse.mesh))
    warm, report = continuation_step(fine, problem, sol)
    cold, cold_report = newton_solve(fine, problem)
    assert report.converged and report.iterations <= cold_report.iterations
    assert np.allclose(warm.coeffs, cold.coeffs, atol=1e-8)
    with pytest.raises(ValueError):
        continuation_step(build_space(hexagon_mesh(2)), problem, sol)
