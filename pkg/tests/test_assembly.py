import numpy as np
import pytest
from hypothesis import given, strategies as st

from nlh import oracles
from nlh.assembly import (RealBlockSystem, assemble_blocks, assemble_fixed_point_system,
                          assemble_newton_system, assemble_system, build_space,
                          element_mass, element_stiffness, interpolate, linear_system,
                          nonlinear_terms, residual_vector, write_coo)
from nlh.mesh import build_mesh, hexagon_mesh
from nlh.problem import PENALTY, Problem
from nlh.solver import solve_linear
from nlh.verify import polynomial_problem, small_mesh

from conftest import random_coeffs


def perturbed_mesh(shift):
    # interior vertex of the 3x3 grid moved; the mesh stays valid for |shift| < 0.2
    base = small_mesh()
    pts = base.vertices.copy()
    pts[4] += shift
    tagger = lambda a, b: "dirichlet" if a[0] == 0.0 and b[0] == 0.0 else "impedance"
    return build_mesh(pts, base.triangles, tagger, lambda c: c[:, 0] > 0.5)


def rel(a, b):
    return np.abs(np.asarray(a) - b).max() / max(np.abs(b).max(), 1e-300)


@given(st.floats(-0.15, 0.15), st.floats(-0.15, 0.15))
def test_blocks_match_oracle_on_perturbed_meshes(dx, dy):
    mesh, problem = perturbed_mesh([dx, dy]), polynomial_problem()
    blocks = assemble_blocks(build_space(mesh), problem)
    ref = oracles.dense_blocks(mesh, problem)
    for name in ("S", "M", "B", "J", "Mk2", "Bk"):
        assert rel(getattr(blocks, name).toarray(), ref[name]) < 1e-10, name
    assert rel(blocks.load, ref["load"]) < 1e-10


@given(st.integers(0, 10_000), st.sampled_from([0.0, PENALTY]))
def test_newton_action_and_residual_match_oracle(seed, gamma):
    mesh, problem = small_mesh(), polynomial_problem(gamma)
    space = build_space(mesh)
    rng = np.random.default_rng(seed)
    u, v = random_coeffs(rng, space.n_dofs), random_coeffs(rng, space.n_dofs)
    blocks = assemble_blocks(space, problem)
    system = assemble_newton_system(blocks, space, problem, u)
    assert rel(system.apply(v), oracles.newton_action(mesh, problem, u, v)) < 1e-10
    assert rel(residual_vector(space, problem, u, blocks), oracles.residual(mesh, problem, u)) < 1e-10


def test_newton_action_is_derivative_of_residual(mesh8, poly, rng):
    space = build_space(mesh8)
    u, v = random_coeffs(rng, space.n_dofs), random_coeffs(rng, space.n_dofs)
    action = assemble_newton_system(assemble_blocks(space, poly), space, poly, u).apply(v)
    errs = []
    for t in (1e-2, 1e-3):
        fd = (residual_vector(space, poly, u + t * v) - residual_vector(space, poly, u)) / t
        errs.append(np.abs(fd - action).max())
    assert errs[1] < errs[0] / 8  # first-order remainder


def test_newton_fixed_point_is_a_residual_root(mesh8, poly, rng):
    # one step from u lands on u exactly when u solves the discrete equations
    space = build_space(mesh8)
    blocks = assemble_blocks(space, poly)
    u = random_coeffs(rng, space.n_dofs)
    for scheme in ("newton", "frozen", "modified_newton"):
        sys_ = assemble_system(blocks, space, poly, u, scheme)
        assert rel(sys_.apply(u) - sys_.F, residual_vector(space, poly, u, blocks)) < 1e-12


def test_local_matrices():
    mesh = hexagon_mesh(2)
    space = build_space(mesh)
    K = element_stiffness(space)
    M = element_mass(space)
    assert np.allclose(K.sum(axis=2), 0.0)
    assert np.allclose(M.sum(axis=(1, 2)), mesh.areas)
    assert np.allclose(K, K.transpose(0, 2, 1))
    assert np.all(np.linalg.eigvalsh(M) > 0)


def test_global_matrices_act_correctly_on_linear_fields():
    mesh = hexagon_mesh(4)
    space = build_space(mesh)
    blocks = assemble_blocks(space, Problem(k=1.0))
    ones = np.ones(space.n_dofs)
    x = mesh.vertices[space.free, 0]
    assert ones @ blocks.M @ ones == pytest.approx(mesh.areas.sum())
    assert x @ blocks.S @ x == pytest.approx(mesh.areas.sum())
    # a globally linear field has no normal-derivative jumps
    assert np.abs(blocks.J @ x).max() < 1e-12
    assert ones @ blocks.B @ ones == pytest.approx(6.0)


def test_jump_matrix_is_hermitian_positive_semidefinite(mesh8):
    J = assemble_blocks(build_space(mesh8), polynomial_problem()).J.toarray()
    assert np.allclose(J, J.T)
    assert np.linalg.eigvalsh(J).min() > -1e-12


def test_penalty_enters_linear_part(mesh8):
    space = build_space(mesh8)
    b0 = assemble_blocks(space, polynomial_problem(0.0))
    b1 = assemble_blocks(space, polynomial_problem(PENALTY))
    diff = (b1.linear_part - b0.linear_part).toarray()
    assert np.allclose(diff, PENALTY * b0.J.toarray())


def test_dirichlet_vertices_are_eliminated(mesh8):
    space = build_space(mesh8)
    assert space.n_dofs == mesh8.n_vertices - 3
    assert np.all(mesh8.vertices[space.dof < 0][:, 0] == 0.0)
    full = space.extend(np.arange(space.n_dofs) + 1.0)
    assert np.all(full[space.dof < 0] == 0) and np.array_equal(space.restrict(full), np.arange(space.n_dofs) + 1.0)


def test_real_block_form_matches_complex_action(mesh8, poly, rng):
    space = build_space(mesh8)
    u, c = random_coeffs(rng, space.n_dofs), random_coeffs(rng, space.n_dofs)
    system = assemble_newton_system(assemble_blocks(space, poly), space, poly, u)
    real = system.matrix @ RealBlockSystem.to_real(c)
    assert np.allclose(RealBlockSystem.to_complex(real), system.apply(c))
    assert np.allclose(RealBlockSystem.to_complex(system.rhs), system.F)


def test_nonlinear_terms_match_oracle(mesh8, poly, rng):
    space = build_space(mesh8)
    u = random_coeffs(rng, space.n_dofs)
    _, _, cubic = nonlinear_terms(space, poly, u)
    ref, _ = oracles.kerr_integrals(mesh8, poly, u)
    assert rel(cubic, ref) < 1e-10
    Mabs, Msq, _ = nonlinear_terms(space, poly, u)
    assert np.allclose(Mabs @ u, cubic)  # ∫|u|²u φ = Σ_j ∫|u|² φ_i φ_j u_j
    assert np.allclose((Mabs - Mabs.T).toarray(), 0) and np.allclose((Msq - Msq.T).toarray(), 0)
    zero = nonlinear_terms(space, poly.linearized(), u)
    assert zero[0].nnz == 0 and not zero[2].any()


def test_linear_problem_reproduces_linear_solution():
    # u = x + 2i y solves -Δu - k²u = f with f = -k²u and the matching impedance data
    k = 2.0
    u = lambda p: p[:, 0] + 2j * p[:, 1]
    grad = np.array([1.0, 2j])
    problem = Problem(k=k, f=lambda p: -k ** 2 * u(p),
                      g=lambda p, n: n @ grad + 1j * k * u(p))
    mesh = hexagon_mesh(8)
    space = build_space(mesh)
    coeffs = solve_linear(linear_system(assemble_blocks(space, problem)))
    # u lies in the discrete space and all data are integrated exactly
    assert np.abs(coeffs - interpolate(space, u).coeffs).max() < 1e-10


def test_fixed_point_modes_and_validation(mesh8, poly, rng):
    space = build_space(mesh8)
    blocks = assemble_blocks(space, poly)
    u = random_coeffs(rng, space.n_dofs)
    frozen = assemble_fixed_point_system(blocks, space, poly, u, "frozen")
    assert frozen.L.nnz == 0 and np.allclose(frozen.F, blocks.load)
    with pytest.raises(ValueError):
        assemble_fixed_point_system(blocks, space, poly, u, "picard")
    with pytest.raises(ValueError):
        assemble_newton_system(blocks, space, poly, u[:-1])


def test_write_coo(tmp_path, mesh8, poly):
    blocks = assemble_blocks(build_space(mesh8), poly)
    path = tmp_path / "a.coo"
    write_coo(blocks.linear_part, path)
    lines = path.read_text().splitlines()
    n, m, nnz = map(int, lines[0].split()[1:])
    assert n == m == blocks.S.shape[0] and len(lines) == nnz + 1
    i, j, re, im = lines[1].split()
    assert complex(float(re), float(im)) == blocks.linear_part[int(i), int(j)]
