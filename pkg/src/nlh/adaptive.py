"""Solve → estimate → mark → refine loop, and its uniform counterpart."""
import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .assembly import assemble_blocks, build_space
from .estimator import dorfler_mark, elliptic_projection, estimate
from .mesh import refine, refine_uniform
from .problem import exact_h1_norm, norms_against_exact
from .solver import DEFAULT_TOL, newton_solve, prolongate

log = logging.getLogger(__name__)


@dataclass
class AdaptConfig:
    """Loop parameters.

    ``stop_rule`` is one of ``("estimator_factor", rho)`` (stop once
    η < ρ η₀), ``("max_elements", N)`` or ``("iterations", n)``; ``n`` counts
    refinements, so ``("iterations", 0)`` solves once on the initial mesh.
    ``max_iterations`` caps the number of refinements in every case.
    """

    theta_D: float = 0.4
    b: int = 1
    max_iterations: int = 30
    stop_rule: tuple = ("iterations", 10)
    tol: float = DEFAULT_TOL
    scheme: str = "newton"
    max_newton: int = 50
    projection: bool = False

    def __post_init__(self):
        if not 0 < self.theta_D <= 1:
            raise ValueError("theta_D must lie in (0, 1]")
        if self.b < 1:
            raise ValueError("b must be >= 1")
        if self.stop_rule[0] not in ("estimator_factor", "max_elements", "iterations"):
            raise ValueError(f"unknown stop rule {self.stop_rule!r}")


@dataclass
class IterationRecord:
    n_elements: int
    n_dofs: int
    eta: float
    eta_std: float
    osc: float
    marked: int
    newton_iterations: int
    newton_converged: bool
    newton_increments: list
    h1_rel: Optional[float] = None
    l2_rel: Optional[float] = None
    energy_error: Optional[float] = None
    projection_h1: Optional[float] = None
    exact_h1: Optional[float] = None
    wall_time: float = 0.0


TRACE_COLUMNS = [
    ("n_elements", "number of triangles"),
    ("n_dofs", "number of free vertices"),
    ("eta", "global estimator"),
    ("eta_std", "global standard residual estimator"),
    ("osc", "global data oscillation"),
    ("marked", "number of marked triangles"),
    ("newton_iterations", "nonlinear iterations"),
    ("newton_converged", "1 if the nonlinear solve converged"),
    ("h1_rel", "relative H1 error against the exact solution"),
    ("l2_rel", "relative L2 error against the exact solution"),
    ("energy_error", "energy-norm error against the exact solution"),
    ("projection_h1", "H1 error of the elliptic projection"),
    ("exact_h1", "H1 norm of the exact solution"),
    ("wall_time", "seconds spent in the iteration"),
]


@dataclass
class AdaptTrace:
    records: list = field(default_factory=list)
    mesh: object = None
    solution: object = None
    previous_mesh: object = None
    label: str = ""

    def append(self, rec):
        if self.records and rec.n_elements <= self.records[-1].n_elements:
            raise ValueError("element count must increase along the trace")
        self.records.append(rec)

    def column(self, name):
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name)
                         for r in self.records], dtype=float)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            for name, doc in TRACE_COLUMNS:
                fh.write(f"# {name}: {doc}\n")
            w = csv.writer(fh)
            w.writerow([n for n, _ in TRACE_COLUMNS])
            for r in self.records:
                row = []
                for n, _ in TRACE_COLUMNS:
                    v = getattr(r, n)
                    row.append("" if v is None else (int(v) if isinstance(v, bool) else v))
                w.writerow(row)

    def to_json(self):
        return json.dumps({"label": self.label,
                           "records": [asdict(r) for r in self.records]})


class AdaptError(RuntimeError):
    """Solver failure inside the loop; ``trace`` holds the completed iterations."""

    def __init__(self, msg, trace):
        super().__init__(msg)
        self.trace = trace


def _stop(config, trace, n_refinements):
    kind, value = config.stop_rule
    rec = trace.records[-1]
    if n_refinements >= config.max_iterations:
        return True
    if kind == "iterations":
        return n_refinements >= value
    if kind == "max_elements":
        return rec.n_elements >= value
    return rec.eta < value * trace.records[0].eta


def _run(problem, mesh0, config, exact, mark, label, warm_start=None, callback=None,
         refine_step=None):
    trace = AdaptTrace(label=label)
    mesh = mesh0
    previous = warm_start
    n = 0
    while True:
        t0 = time.perf_counter()
        space = build_space(mesh)
        blocks = assemble_blocks(space, problem)
        u0 = None if previous is None else prolongate(previous, space).coeffs
        try:
            sol, rep = newton_solve(space, problem, u0, config.tol, config.max_newton,
                                    config.scheme, blocks)
        except Exception as exc:
            raise AdaptError(f"solve failed on mesh {n}: {exc}", trace) from exc
        est = estimate(space, problem, sol)
        marked = mark(est, mesh)
        rec = IterationRecord(mesh.n_triangles, space.n_dofs, est.eta, est.eta_std, est.osc,
                              len(marked), rep.iterations, rep.converged,
                              list(rep.rel_increments))
        if exact is not None:
            errs = norms_against_exact(sol, exact, k=problem)
            rec.h1_rel, rec.l2_rel, rec.energy_error = errs
            if config.projection:
                proj = elliptic_projection(space, exact)
                rec.exact_h1 = exact_h1_norm(mesh, exact)
                rec.projection_h1 = norms_against_exact(proj, exact).h1_rel * rec.exact_h1
        rec.wall_time = time.perf_counter() - t0
        trace.append(rec)
        trace.previous_mesh, trace.mesh, trace.solution = trace.mesh, mesh, sol
        log.info("%s it=%d N=%d eta=%.3e h1=%s newton=%d", label, n, mesh.n_triangles,
                 est.eta, rec.h1_rel, rep.iterations)
        if callback is not None:
            callback(n, mesh, sol, est, rec)
        if _stop(config, trace, n) or not marked:
            break
        mesh = (refine(mesh, marked, config.b) if refine_step is None
                else refine_step(mesh))
        previous = sol
        n += 1
    return trace


def adapt_loop(problem, mesh0, config=None, exact=None, warm_start=None, callback=None):
    """Adaptive loop with Dörfler marking and newest-vertex bisection.

    Newton is warm-started on every refined mesh with the prolongated
    previous solution.
    """
    config = config or AdaptConfig()
    return _run(problem, mesh0, config, exact,
                lambda est, mesh: dorfler_mark(est, config.theta_D),
                "adaptive", warm_start, callback)


def uniform_loop(problem, mesh0, config=None, exact=None, warm_start=None, callback=None):
    """Same pipeline with every element marked; each step splits every edge,
    so the element count grows by exactly four."""
    config = config or AdaptConfig()
    return _run(problem, mesh0, config, exact,
                lambda est, mesh: set(range(mesh.n_triangles)),
                "uniform", warm_start, callback, refine_step=refine_uniform)
