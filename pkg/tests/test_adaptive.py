import json

import numpy as np
import pytest

from nlh import adaptive
from nlh.adaptive import AdaptConfig, AdaptError, adapt_loop, uniform_loop
from nlh.assembly import build_space
from nlh.mesh import is_conforming, notched_mesh
from nlh.problem import corner_soliton_problem
from nlh.solver import LinearSolveError, newton_solve


@pytest.fixture(scope="module")
def setup():
    problem, exact = corner_soliton_problem(5.0, 1.0)
    return problem, exact, notched_mesh(h0=0.2)


def test_zero_iterations_solves_once(setup):
    problem, exact, mesh = setup
    trace = adapt_loop(problem, mesh, AdaptConfig(stop_rule=("iterations", 0)), exact)
    assert len(trace.records) == 1 and trace.mesh is mesh
    rec = trace.records[0]
    assert rec.n_elements == mesh.n_triangles and rec.newton_converged and rec.h1_rel > 0


def test_uniform_loop_quadruples(setup):
    problem, exact, mesh = setup
    trace = uniform_loop(problem, mesh, AdaptConfig(stop_rule=("iterations", 3)), exact)
    n = trace.column("n_elements")
    assert np.array_equal(n[1:] / n[:-1], [4, 4, 4])
    assert np.all(np.diff(trace.column("h1_rel")) < 0)


def test_adaptive_loop_invariants(setup):
    problem, exact, mesh = setup
    seen = []
    trace = adapt_loop(problem, mesh, AdaptConfig(stop_rule=("iterations", 5)), exact,
                       callback=lambda n, m, sol, est, rec: seen.append((n, m.n_triangles)))
    assert [s[0] for s in seen] == list(range(6))
    assert all(r.newton_converged for r in trace.records)
    assert all(0 < r.marked <= r.n_elements for r in trace.records)
    assert np.all(np.diff(trace.column("n_elements")) > 0)
    assert is_conforming(trace.mesh) and trace.previous_mesh.uid == trace.mesh.parent_uid
    # warm starts keep Newton short after the first mesh
    assert max(r.newton_iterations for r in trace.records[1:]) <= 4


def test_linear_problem_matches_direct_solve(setup):
    problem, exact, mesh = setup
    linear = problem.linearized()
    trace = adapt_loop(linear, mesh, AdaptConfig(stop_rule=("iterations", 3)))
    direct, _ = newton_solve(build_space(trace.mesh), linear)
    assert np.allclose(trace.solution.coeffs, direct.coeffs, atol=1e-10)


def test_runs_are_reproducible(setup):
    problem, exact, mesh = setup
    cfg = AdaptConfig(stop_rule=("iterations", 3))
    a = adapt_loop(problem, mesh, cfg, exact)
    b = adapt_loop(problem, mesh, cfg, exact)
    assert np.array_equal(a.mesh.triangles, b.mesh.triangles)
    assert np.array_equal(a.column("eta"), b.column("eta"))
    assert np.array_equal(a.solution.coeffs, b.solution.coeffs)


def test_stop_rules(setup):
    problem, exact, mesh = setup
    t = adapt_loop(problem, mesh, AdaptConfig(stop_rule=("max_elements", 600)))
    assert t.records[-1].n_elements >= 600 > t.records[-2].n_elements
    t = adapt_loop(problem, mesh, AdaptConfig(stop_rule=("estimator_factor", 0.5)))
    assert t.records[-1].eta < 0.5 * t.records[0].eta <= t.records[-2].eta
    t = adapt_loop(problem, mesh, AdaptConfig(stop_rule=("iterations", 50), max_iterations=2))
    assert len(t.records) == 3


def test_config_validation():
    with pytest.raises(ValueError):
        AdaptConfig(theta_D=0.0)
    with pytest.raises(ValueError):
        AdaptConfig(b=0)
    with pytest.raises(ValueError):
        AdaptConfig(stop_rule=("forever", 1))


def test_solver_failure_keeps_partial_trace(setup, monkeypatch):
    problem, exact, mesh = setup
    calls = {"n": 0}
    real = adaptive.newton_solve

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 3:
            raise LinearSolveError("injected")
        return real(*args, **kwargs)

    monkeypatch.setattr(adaptive, "newton_solve", flaky)
    with pytest.raises(AdaptError) as info:
        adapt_loop(problem, mesh, AdaptConfig(stop_rule=("iterations", 5)))
    assert len(info.value.trace.records) == 2


def test_projection_columns_and_serialisation(setup, tmp_path):
    problem, exact, mesh = setup
    trace = adapt_loop(problem, mesh, AdaptConfig(stop_rule=("iterations", 1), projection=True),
                       exact)
    proj = trace.column("projection_h1")
    assert np.all(proj > 0) and np.all(trace.column("exact_h1") > 0)
    path = tmp_path / "trace.csv"
    trace.write_csv(path)
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    assert lines[0].startswith("n_elements,n_dofs,eta") and len(lines) == 3
    data = json.loads(trace.to_json())
    assert data["label"] == "adaptive" and len(data["records"]) == 2
    with pytest.raises(ValueError):
        trace.append(trace.records[0])
