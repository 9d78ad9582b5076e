"""Self-check suite: vectorised code against the loop oracles, marking
against brute force, mesh invariants and the manufactured solution.

Each check returns a :class:`Check`; :func:`run_checks` renders them as a
fixed-width table. Output contains no timings or addresses, so repeated runs
print identical bytes.
"""
from dataclasses import dataclass

import numpy as np

from . import oracles
from .assembly import (assemble_blocks, assemble_newton_system, build_space,
                       residual_vector)
from .estimator import dorfler_mark, estimate
from .mesh import build_mesh, hexagon_mesh, is_conforming, refine
from .problem import PENALTY, Problem, corner_soliton_problem
from .quadrature import triangle_rule

TOL = 1e-10


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


def small_mesh():
    """Eight triangles on the unit square; Dirichlet on ``x = 0``, Kerr
    subdomain ``x > 1/2``."""
    pts = np.array([[x, y] for y in (0.0, 0.5, 1.0) for x in (0.0, 0.5, 1.0)])
    tris = []
    for j in range(2):
        for i in range(2):
            a = 3 * j + i
            tris += [(a, a + 1, a + 4), (a, a + 4, a + 3)]

    def tagger(a, b):
        return "dirichlet" if a[0] == 0.0 and b[0] == 0.0 else "impedance"

    return build_mesh(pts, tris, tagger, lambda c: c[:, 0] > 0.5)


def polynomial_problem(gamma=PENALTY):
    """Low-degree data, so every quadrature in play is exact."""
    def f(p):
        return (1.0 + 2.0 * p[:, 0] - p[:, 1] + p[:, 0] ** 2) + 0.5j * p[:, 1]

    def g(p, n):
        return (p[:, 0] - 2.0 * p[:, 1] ** 2) * (1.0 + n[:, 0]) + 1j * (1.0 + n[:, 1])

    return Problem(k=3.0, k_inside=4.5, epsilon=0.2, f=f, g=g, gamma=gamma, label="poly")


def _rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    scale = max(np.abs(b).max(), 1e-300)
    return float(np.abs(a - b).max() / scale)


def _coeffs(n, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def check_quadrature():
    bary, w = triangle_rule(8)
    worst = 0.0
    for a in range(5):
        for b in range(5 - a):
            for c in range(9 - a - b):
                if a + b + c > 8:
                    continue
                exact = 2.0 * np.prod([float(np.prod(np.arange(1, m + 1))) for m in (a, b, c)]) \
                    / float(np.prod(np.arange(1, a + b + c + 3)))
                got = np.sum(w * bary[:, 0] ** a * bary[:, 1] ** b * bary[:, 2] ** c)
                worst = max(worst, abs(got - exact) / exact)
    return Check("quadrature-moments", worst < TOL, f"max rel {worst:.1e}")


def check_blocks():
    mesh, problem = small_mesh(), polynomial_problem()
    blocks = assemble_blocks(build_space(mesh), problem)
    ref = oracles.dense_blocks(mesh, problem)
    worst = max(_rel(getattr(blocks, k).toarray(), ref[k]) for k in ("S", "M", "B", "J", "Mk2", "Bk"))
    worst = max(worst, _rel(blocks.load, ref["load"]))
    return Check("assembly-blocks", worst < TOL, f"max rel {worst:.1e}")


def check_newton_action():
    mesh, problem = small_mesh(), polynomial_problem()
    space = build_space(mesh)
    u, v = _coeffs(space.n_dofs, 1), _coeffs(space.n_dofs, 2)
    system = assemble_newton_system(assemble_blocks(space, problem), space, problem, u)
    got = system.apply(v)
    ref = oracles.newton_action(mesh, problem, u, v)
    err = _rel(got, ref)
    return Check("newton-action", err < TOL, f"rel {err:.1e}")


def check_residual():
    mesh, problem = small_mesh(), polynomial_problem()
    space = build_space(mesh)
    u = _coeffs(space.n_dofs, 3)
    err = _rel(residual_vector(space, problem, u), oracles.residual(mesh, problem, u))
    return Check("residual-vector", err < TOL, f"rel {err:.1e}")


def check_estimator():
    mesh, problem = small_mesh(), polynomial_problem()
    space = build_space(mesh)
    u = _coeffs(space.n_dofs, 4)
    report = estimate(space, problem, u)
    eta, std = oracles.estimator(mesh, problem, u)
    err = max(_rel(report.eta_sq, eta), _rel(report.eta_std_sq, std))
    return Check("estimator-indicators", err < TOL, f"rel {err:.1e}")


def check_dorfler(draws=200):
    rng = np.random.default_rng(7)
    bad = 0
    for _ in range(draws):
        eta_sq = rng.random(int(rng.integers(1, 13))) ** 3
        for theta in (0.2, 0.4, 0.7, 1.0):
            marked = dorfler_mark(eta_sq, theta)
            carried = eta_sq[list(marked)].sum()
            minimal = oracles.minimal_dorfler_size(eta_sq, theta)
            if len(marked) != minimal or carried < theta ** 2 * eta_sq.sum() * (1 - 1e-14):
                bad += 1
    return Check("dorfler-minimality", bad == 0, f"{bad} failures in {4 * draws}")


def mesh_invariants(mesh, cycles, seed=11, max_marks=5):
    """Random mark/refine cycles; returns the number of cycles that broke
    conformity, orientation, the Kerr-subdomain area or the angle bound
    (half the initial minimum angle), and the final mesh."""
    area0 = mesh.areas[mesh.in_omega0].sum()
    bound = 0.5 * mesh.min_angles().min() * (1.0 - 1e-9)
    rng = np.random.default_rng(seed)
    broken = 0
    for _ in range(cycles):
        k = int(rng.integers(1, max_marks + 1))
        mesh = refine(mesh, rng.choice(mesh.n_triangles, min(k, mesh.n_triangles), replace=False))
        area = mesh.areas[mesh.in_omega0].sum()
        ok = is_conforming(mesh) and bool(np.all(mesh.signed_areas > 0))
        ok = ok and abs(area - area0) <= 1e-12 * area0 and mesh.min_angles().min() >= bound
        broken += not ok
    return broken, mesh


def check_mesh(cycles=60):
    broken, mesh = mesh_invariants(hexagon_mesh(4), cycles)
    return Check("mesh-invariants", broken == 0,
                 f"{broken} bad of {cycles} cycles, {mesh.n_triangles} triangles")


def check_manufactured():
    problem, exact = corner_soliton_problem(5.0, 1.0)
    rng = np.random.default_rng(5)
    pts = np.column_stack([rng.uniform(-0.7, 0.95, 40), rng.uniform(-0.95, 0.95, 40)])
    r = np.hypot(pts[:, 0] - 0.5, pts[:, 1])
    pts = pts[(r > 0.05) & (np.abs(r - 0.25) > 0.02) & (np.abs(np.abs(pts[:, 0]) - 0.25) > 0.02)]
    h = 1e-3
    lap = sum(exact.value(pts + d) for d in ([h, 0], [-h, 0], [0, h], [0, -h]))
    lap = (lap - 4.0 * exact.value(pts)) / h ** 2
    err = _rel(lap, exact.laplacian(pts))
    return Check("manufactured-laplacian", err < 1e-4, f"rel {err:.1e}")


CHECKS = (check_quadrature, check_blocks, check_newton_action, check_residual,
          check_estimator, check_dorfler, check_mesh, check_manufactured)


def run_checks():
    return [c() for c in CHECKS]


def format_report(checks):
    lines = [f"{'check':<24} {'result':<6} detail"]
    for c in checks:
        lines.append(f"{c.name:<24} {'PASS' if c.passed else 'FAIL':<6} {c.detail}")
    n_fail = sum(not c.passed for c in checks)
    lines.append(f"{len(checks) - n_fail}/{len(checks)} checks passed")
    return "\n".join(lines) + "\n"
