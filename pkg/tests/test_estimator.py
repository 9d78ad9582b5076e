import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nlh import estimator as est_mod
from nlh import oracles
from nlh.assembly import build_space, interpolate
from nlh.estimator import dorfler_mark, elliptic_projection, estimate, oscillation_sq
from nlh.mesh import hexagon_mesh, refine, refine_uniform
from nlh.problem import ExactSolution, Problem
from nlh.solver import newton_solve
from nlh.verify import polynomial_problem, small_mesh

from conftest import random_coeffs


def rel(a, b):
    return np.abs(np.asarray(a) - b).max() / max(np.abs(b).max(), 1e-300)


@given(st.integers(0, 10_000), st.integers(0, 3))
def test_indicators_match_oracle(seed, n_marked):
    mesh = small_mesh()
    if n_marked:
        mesh = refine(mesh, range(n_marked))
    problem = polynomial_problem()
    space = build_space(mesh)
    u = random_coeffs(np.random.default_rng(seed), space.n_dofs)
    report = estimate(space, problem, u)
    eta, std = oracles.estimator(mesh, problem, u)
    assert rel(report.eta_sq, eta) < 1e-10
    assert rel(report.eta_std_sq, std) < 1e-10


def test_wrong_jump_sign_is_detected(monkeypatch, mesh8, poly, rng):
    space = build_space(mesh8)
    u = random_coeffs(rng, space.n_dofs)
    monkeypatch.setattr(est_mod, "_JUMP_SIGN", -1.0)
    eta, _ = oracles.estimator(mesh8, poly, u)
    assert rel(estimate(space, poly, u).eta_sq, eta) > 1e-3


C = np.array([1.0 + 0.5j, -2.0j])


def linear_u(p):
    return 0.3 + p @ C


def in_inner_hexagon(p):
    s3 = np.sqrt(3.0)
    return (np.abs(p[:, 1]) <= s3 / 4) & (s3 * np.abs(p[:, 0]) + np.abs(p[:, 1]) <= s3 / 2)


@pytest.mark.parametrize("eps", [0.0, 0.3])
def test_estimator_vanishes_on_exact_linear_solution(eps):
    # u is linear and the data make it an exact solution, so every residual is zero
    k = 2.0
    mesh = hexagon_mesh(4)
    assert np.array_equal(in_inner_hexagon(mesh.centroids), mesh.in_omega0)

    def f(p):
        return -k ** 2 * (1 + eps * in_inner_hexagon(p) * np.abs(linear_u(p)) ** 2) * linear_u(p)

    problem = Problem(k=k, epsilon=eps, f=f, g=lambda p, n: n @ C + 1j * k * linear_u(p))
    space = build_space(mesh)
    report = estimate(space, problem, interpolate(space, linear_u))
    assert report.eta < 1e-11 and report.eta_std < 1e-11


def test_neighbour_volume_sum_bounds_global_ratio(rng):
    mesh = refine(hexagon_mesh(4), [0, 7, 30])
    space = build_space(mesh)
    problem = polynomial_problem()
    report = estimate(space, problem, random_coeffs(rng, space.n_dofs))
    ratio = report.eta / report.eta_std
    assert 1.0 <= ratio <= np.sqrt(3.0)


def test_oscillation_vanishes_for_polynomial_data(mesh8):
    f = lambda p: p[:, 0] ** 3 - 2j * p[:, 0] * p[:, 1] ** 2 + 1.0
    g = lambda p, n: (1 + n[:, 0]) * p[:, 0] - 1j * p[:, 1] + n[:, 1]
    problem = Problem(k=3.0, f=f, g=g)
    space = build_space(refine_uniform(mesh8))
    assert oscillation_sq(space, problem).max() < 1e-26


def test_oscillation_decays_under_refinement(mesh8):
    problem = Problem(k=3.0, f=lambda p: np.exp(3 * p[:, 0]) + 0j,
                      g=lambda p, n: np.sin(4 * p[:, 1]) + 0j)
    mesh = mesh8
    osc = []
    for _ in range(3):
        osc.append(np.sqrt(oscillation_sq(build_space(mesh), problem).sum()))
        mesh = refine_uniform(mesh)
    assert osc[0] > 4 * osc[1] > 16 * osc[2]


# ---------------------------------------------------------------- marking
@given(st.lists(st.floats(0, 1), min_size=1, max_size=12),
       st.sampled_from([0.2, 0.4, 0.7, 1.0]))
def test_dorfler_is_minimal(values, theta):
    eta_sq = np.asarray(values) ** 3
    marked = dorfler_mark(eta_sq, theta)
    if eta_sq.sum() == 0:
        assert marked == set()
        return
    assert eta_sq[list(marked)].sum() >= theta ** 2 * eta_sq.sum() * (1 - 1e-14)
    assert len(marked) == oracles.minimal_dorfler_size(eta_sq, theta)


@given(st.lists(st.floats(1e-6, 1), min_size=1, max_size=40))
def test_dorfler_grows_with_theta(values):
    eta_sq = np.asarray(values)
    sets = [dorfler_mark(eta_sq, t) for t in (0.1, 0.3, 0.5, 0.7, 0.9, 1.0)]
    for small, big in zip(sets, sets[1:]):
        assert small <= big
    assert sets[-1] == set(range(len(eta_sq)))


def test_dorfler_breaks_ties_by_index():
    assert dorfler_mark(np.ones(6), 0.5) == {0, 1}
    assert dorfler_mark(np.array([0.5, 1.0, 1.0, 0.5]), 0.5) == {1}


def test_dorfler_validates_theta():
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            dorfler_mark(np.ones(3), bad)
    assert dorfler_mark(np.zeros(0), 0.5) == set()


# ---------------------------------------------------------------- projection
def test_elliptic_projection_reproduces_discrete_functions(mesh8):
    c = 1.0 - 2.0j
    bilinear = ExactSolution(lambda p: c * p[:, 0] * (1 + p[:, 1]),
                             lambda p: np.column_stack([c * (1 + p[:, 1]), c * p[:, 0]]),
                             lambda p: np.zeros(len(p)))
    lin = ExactSolution(lambda p: c * p[:, 0], lambda p: np.tile([c, 0], (len(p), 1)),
                        lambda p: np.zeros(len(p)))
    space = build_space(mesh8)
    proj = elliptic_projection(space, lin)
    assert np.allclose(proj.coeffs, interpolate(space, lin.value).coeffs, atol=1e-13)
    # outside the discrete space the projection differs from the interpolant
    assert not np.allclose(elliptic_projection(space, bilinear).coeffs,
                           interpolate(space, bilinear.value).coeffs)


def test_elliptic_projection_warns_when_unresolved(mesh8):
    lin = ExactSolution(lambda p: p[:, 0] + 0j, lambda p: np.tile([1.0, 0.0], (len(p), 1)),
                        lambda p: np.zeros(len(p)))
    with pytest.warns(RuntimeWarning):
        elliptic_projection(build_space(mesh8), lin, k=100.0)


def test_report_serialisation(tmp_path, mesh8, poly):
    space = build_space(mesh8)
    sol, _ = newton_solve(space, poly)
    report = estimate(space, poly, sol)
    path = tmp_path / "eta.csv"
    report.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[1] == "triangle,eta_sq,osc_sq" and len(lines) == mesh8.n_triangles + 2
    summary = json.loads(report.summary_json())
    assert summary["eta"] == pytest.approx(report.eta)
    assert report.mesh_uid == mesh8.uid
