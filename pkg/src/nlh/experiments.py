"""Experiment drivers: accuracy study on the notched domain and the
hysteresis sweep in the hexagonal Kerr cavity.

Both return plain data; writing files is left to :mod:`nlh.cli`.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from .adaptive import AdaptConfig, adapt_loop, uniform_loop
from .config import ConfigError
from .assembly import assemble_blocks, assemble_newton_system, build_space, interpolate
from .mesh import hexagon_mesh, notched_mesh, write_vtk
from .problem import (REFERENCE_INTENSITY, bistability_problem, corner_soliton_problem,
                      incident_beam)
from .solver import energy_norm, newton_solve

log = logging.getLogger(__name__)


# ----------------------------------------------------------------------
# rates
def rate_fit(n_elements, errors, last=None):
    """Least-squares slope of ``log(error)`` against ``log(N)``.

    ``last`` restricts the fit to the final entries.
    """
    n = np.asarray(n_elements, dtype=float)
    e = np.asarray(errors, dtype=float)
    if last is not None:
        n, e = n[-last:], e[-last:]
    if len(n) < 2:
        raise ValueError("need at least two points for a rate")
    return float(np.polyfit(np.log(n), np.log(e), 1)[0])


def convergence_order(increments, floor=1e-13, steps=3):
    """Slope of ``log e_{l+1}`` against ``log e_l`` over the final ``steps``
    increments above the round-off ``floor``."""
    e = np.asarray([x for x in increments if x > floor], dtype=float)[-steps:]
    if len(e) < 3:
        raise ValueError("need three increments above the floor")
    return float(np.polyfit(np.log(e[:-1]), np.log(e[1:]), 1)[0])


def contraction_ratios(increments, floor=1e-13):
    """Successive increment ratios ``e_{l+1} / e_l`` above the floor."""
    e = np.asarray([x for x in increments if x > floor], dtype=float)
    return e[1:] / e[:-1]


# ----------------------------------------------------------------------
# accuracy
@dataclass
class AccuracyResult:
    traces: dict
    rates: dict
    exact_label: str = ""


def _projected_elements(cfg, n0):
    kind, value = cfg.stop
    if kind == "max_elements":
        # one refinement can at most quadruple past the threshold
        return 4 * value
    steps = value if kind == "iterations" else cfg.max_iterations
    return n0 * 4.0 ** min(steps, cfg.max_iterations)


def check_feasible(cfg):
    """Refuse uniform runs projected past ``cfg.max_elements_cap`` elements."""
    n0 = notched_mesh(cfg.R, cfg.h0).n_triangles
    for method in cfg.methods:
        if method.endswith("uniform") and _projected_elements(cfg, n0) > cfg.max_elements_cap:
            raise ConfigError(f"{method} is projected past {cfg.max_elements_cap} elements")


def run_accuracy(cfg, callback=None):
    """Run every requested method of an :class:`~nlh.config.AccuracyConfig`.

    Returns
    -------
    AccuracyResult
        Traces keyed by method name and rate fits over ``cfg.rate_window``.

    Raises
    ------
    ConfigError
        If a uniform run is projected to exceed ``cfg.max_elements_cap``.
    """
    check_feasible(cfg)
    mesh0 = notched_mesh(cfg.R, cfg.h0)
    traces, rates = {}, {}
    for method in cfg.methods:
        gamma = cfg.gamma if method.startswith("cipfem") else 0.0
        problem, exact = corner_soliton_problem(cfg.k, cfg.q, cfg.R, gamma)
        acfg = AdaptConfig(theta_D=cfg.theta_D, b=cfg.b, max_iterations=cfg.max_iterations,
                           stop_rule=cfg.stop, tol=cfg.tol_newton, projection=cfg.projection)
        loop = uniform_loop if method.endswith("uniform") else adapt_loop
        cb = None if callback is None else (lambda *a, m=method: callback(m, *a))
        trace = loop(problem, mesh0, acfg, exact=exact, callback=cb)
        trace.label = method
        traces[method] = trace
        n, err = trace.column("n_elements"), trace.column("h1_rel")
        window = min(cfg.rate_window, len(n))
        rates[method] = rate_fit(n, err, window) if window >= 2 else float("nan")
    return AccuracyResult(traces, rates, exact_label=problem.label)


def estimator_ratios(trace):
    """Per-iteration ``error / (η/||u||₁)`` and ``η / (||u - P_h u||₁ + osc)``.

    The second column needs a trace recorded with ``projection=True``.
    """
    eta = trace.column("eta")
    norm = trace.column("exact_h1")
    err = trace.column("h1_rel")
    proj = trace.column("projection_h1")
    osc = trace.column("osc")
    return err * norm / eta, eta / (proj + osc)


# ----------------------------------------------------------------------
# bistability
@dataclass
class BranchPoint:
    I: float
    energy: float
    branch: str
    converged: bool
    iterations: int
    halvings: int = 0
    jump: bool = False


@dataclass
class BistabilityResult:
    points: list = field(default_factory=list)
    jumps: list = field(default_factory=list)
    solutions: dict = field(default_factory=dict)
    mesh: object = None

    def branch(self, name):
        pts = [p for p in self.points if p.branch == name]
        return (np.array([p.I for p in pts]), np.array([p.energy for p in pts]))


class CavitySweep:
    """Continuation in the beam intensity on a fixed equilateral mesh.

    Energies are ``||u_h||_E / ||u_inc⁰||_E`` where ``||v||_E² = |v|₁² +
    ||k v||₀²`` uses the local wave number and ``u_inc⁰`` is the beam at the
    reference intensity.
    """

    def __init__(self, cfg):
        self.cfg = cfg
        self.mesh = hexagon_mesh(cfg.m)
        self.space = build_space(self.mesh)
        ref_problem = self.problem(REFERENCE_INTENSITY)
        self._ref_blocks = assemble_blocks(self.space, ref_problem)
        beam = interpolate(self.space, incident_beam(REFERENCE_INTENSITY, cfg.k0).value)
        self.reference = energy_norm(self._ref_blocks, beam.coeffs)
        # the I dependence sits entirely in the load, which is linear in I
        self._unit_load = self._ref_blocks.load / REFERENCE_INTENSITY

    def problem(self, I):
        c = self.cfg
        return bistability_problem(I, c.k0, c.contrast, c.epsilon, c.gamma)

    def blocks(self, I):
        b = self._ref_blocks
        return type(b)(b.S, b.M, b.B, b.J, b.Mk2, b.Bk, self._unit_load * I, b.gamma)

    def energy(self, coeffs):
        return energy_norm(self._ref_blocks, coeffs) / self.reference

    def solve(self, I, u0):
        return newton_solve(self.space, self.problem(I), u0, self.cfg.tol_newton,
                            self.cfg.max_newton, "newton", self.blocks(I))

    def _continue(self, I_cur, u_cur, target):
        """Step from ``I_cur`` to ``target``, halving after failures.

        Returns ``(ok, I_reached, coeffs, report, halvings)``.
        """
        step, halvings, rep = target - I_cur, 0, None
        while True:
            I_try = target if abs(step) >= abs(target - I_cur) else I_cur + step
            sol, rep = self.solve(I_try, u_cur)
            if rep.converged:
                I_cur, u_cur = I_try, sol.coeffs
                if I_cur == target:
                    return True, I_cur, u_cur, rep, halvings
                step = target - I_cur
                continue
            halvings += 1
            if halvings > self.cfg.max_halvings:
                return False, I_cur, u_cur, rep, halvings
            step /= 2.0

    def sweep(self, schedule, branch, start=(0.0, None), result=None):
        """Follow ``schedule`` from ``start = (I, coeffs)``, halving the step
        after a failed Newton solve.

        When halving fails the branch has ended; the point is then re-solved
        from the Kerr-free solution, which lands on the remaining branch. A
        point whose energy departs from proportional scaling of its
        predecessor by more than ``jump_threshold`` is flagged as a jump.
        """
        result = result or BistabilityResult(mesh=self.mesh)
        I_cur, u_cur = start
        if u_cur is None:
            u_cur = np.zeros(self.space.n_dofs, complex)
        prev = None if start[1] is None else (I_cur, self.energy(u_cur))
        for target in schedule:
            ok, I_cur, u_cur, rep, halvings = self._continue(I_cur, u_cur, target)
            if not ok:
                sol, rep = self.solve(target, None)
                ok = rep.converged
                if ok:
                    I_cur, u_cur = target, sol.coeffs
            energy = self.energy(u_cur) if ok else float("nan")
            jump = False
            if ok and prev is not None and prev[0] > 0 and target > 0:
                expected = prev[1] * target / prev[0]
                jump = abs(energy - expected) > self.cfg.jump_threshold * expected
            pt = BranchPoint(float(target), energy, branch, ok, rep.iterations, halvings, jump)
            result.points.append(pt)
            if jump:
                result.jumps.append(pt)
                log.info("%s branch jumps at I=%g (energy %.3f -> %.3f)", branch, target,
                         prev[1], energy)
            if ok:
                result.solutions[(branch, float(target))] = u_cur
                prev = (target, energy)
            else:
                log.warning("%s branch: no convergence at I=%g", branch, target)
        return result, (I_cur, u_cur)

    def solve_at_energy(self, energy, u0, I0, tol=None, max_iter=None):
        """Newton solve with the scaled energy fixed and ``I`` free.

        The load is linear in ``I``, so every step splits the new iterate as
        ``a + I b`` and picks the root of the quadratic energy constraint
        closest to the current ``I``. Works on unstable branches where plain
        continuation in ``I`` fails.

        Returns
        -------
        (coeffs, I, converged)
        """
        tol = tol or self.cfg.tol_newton
        max_iter = max_iter or self.cfg.max_newton
        G = self._ref_blocks.energy
        target = (energy * self.reference) ** 2
        u, I = np.asarray(u0, complex), float(I0)
        zero = self.blocks(0.0)
        for _ in range(max_iter):
            system = assemble_newton_system(zero, self.space, self.problem(I), u)
            lu = spla.splu(system.matrix.tocsc())
            a = system.to_complex(lu.solve(system.rhs))
            b = system.to_complex(lu.solve(system.to_real(self._unit_load)))
            Gb = G @ b
            alpha = np.real(np.vdot(b, Gb))
            beta = np.real(np.vdot(a, Gb))
            gamma = np.real(np.vdot(a, G @ a)) - target
            disc = beta ** 2 - alpha * gamma
            if alpha <= 0 or disc < 0:
                return u, I, False
            roots = (-beta + np.array([-1.0, 1.0]) * np.sqrt(disc)) / alpha
            I_new = float(roots[np.argmin(np.abs(roots - I))])
            new = a + I_new * b
            inc = np.sqrt(max(np.real(np.vdot(new - u, G @ (new - u))), 0.0) / target)
            u, I = new, I_new
            if inc <= tol:
                return u, I, True
        return u, I, False

    def middle_solution(self, I, lower, upper, steps=40):
        """Third solution at ``I`` between the branch solutions ``lower`` and
        ``upper``.

        Newton is first seeded with their mean. If that lands on one of the
        two branches, the energy constraint is marched up from ``lower``
        until the free intensity crosses ``I`` on the way back down, and the
        crossing is refined with Brent's method. A plain Newton solve at
        ``I`` confirms the point.

        Returns
        -------
        (coeffs or None, NonlinearReport or None)
        """
        e_lo, e_hi = self.energy(lower), self.energy(upper)

        def is_new(u):
            e = self.energy(u)
            return min(abs(e - e_lo), abs(e - e_hi)) > 0.05 * min(e_lo, e_hi)

        sol, rep = self.solve(I, 0.5 * (lower + upper))
        if rep.converged and is_new(sol.coeffs):
            return sol.coeffs, rep

        state = {"u": lower, "I": float(I)}

        def advance(e):
            u, J, ok = self.solve_at_energy(e, state["u"], state["I"])
            if not ok:
                raise RuntimeError(f"energy-constrained solve failed at {e:.4g}")
            state["u"], state["I"] = u, J
            return J - I

        try:
            prev_e, prev_gap, risen = e_lo, 0.0, False
            bracket, left = None, (lower, float(I))
            for e in np.linspace(e_lo, e_hi, steps + 1)[1:-1]:
                gap = advance(e)
                risen = risen or gap > 0
                if risen and gap <= 0 < prev_gap:
                    bracket = (prev_e, e)
                    break
                prev_e, prev_gap = e, gap
                left = (state["u"], state["I"])
            if bracket is None:
                raise RuntimeError("no crossing between the branches")
            state["u"], state["I"] = left
            brentq(advance, *bracket, xtol=1e-12 * e_hi)
        except (RuntimeError, ValueError) as exc:
            log.warning("middle branch not found at I=%g: %s", I, exc)
            return None, None
        sol, rep = self.solve(I, state["u"])
        if not (rep.converged and is_new(sol.coeffs)):
            return None, rep
        return sol.coeffs, rep

    def branch_state(self, result, branch, I):
        """Solution of ``branch`` continued to ``I`` from the nearest
        stored point on the approach side."""
        stored = {J: u for (b, J), u in result.solutions.items() if b == branch}
        if I in stored:
            return stored[I]
        side = [J for J in stored if (J < I if branch == "up" else J > I)]
        if not side:
            return None
        J = max(side) if branch == "up" else min(side)
        sol, rep = self.solve(I, stored[J])
        return sol.coeffs if rep.converged else None

    def run(self):
        """Up-sweep, down-sweep from the top of the up-sweep, then one
        solve per mid-branch point seeded with the mean of both branches."""
        c = self.cfg
        up = sorted(c.I_up)
        down = sorted(c.I_down or c.I_up, reverse=True)
        result, top = self.sweep(up, "up")
        if len(up) > 1 or c.I_down:
            result, _ = self.sweep(down, "down", start=top, result=result)
        for I in c.I_mid:
            a = self.branch_state(result, "up", I)
            b = self.branch_state(result, "down", I)
            if a is None or b is None:
                result.points.append(BranchPoint(I, float("nan"), "mid", False, 0))
                continue
            lo, hi = (a, b) if self.energy(a) <= self.energy(b) else (b, a)
            u, rep = self.middle_solution(I, lo, hi)
            ok = u is not None
            result.points.append(BranchPoint(I, self.energy(u) if ok else float("nan"), "mid",
                                             ok, rep.iterations if rep else 0))
            if ok:
                result.solutions[("mid", I)] = u
        return result

    def dump_field(self, coeffs, path):
        """VTK file with |u_h|, Re u_h and the element H¹ seminorm."""
        values = self.space.extend(coeffs)
        local = values[self.mesh.triangles]
        grad = np.einsum("ti,tij->tj", local, self.space.grads)
        semi = np.sqrt((np.abs(grad) ** 2).sum(axis=1) * self.mesh.areas)
        write_vtk(self.mesh, path, point_data={"abs_u": np.abs(values), "re_u": values.real},
                  cell_data={"h1_semi": semi})


def hysteresis_width(result, rel=0.2):
    """Intensities where up- and down-sweep energies differ by more than ``rel``."""
    Iu, Eu = result.branch("up")
    Id, Ed = result.branch("down")
    common = sorted(set(Iu.tolist()) & set(Id.tolist()))
    out = []
    for I in common:
        eu = Eu[Iu == I][0]
        ed = Ed[Id == I][0]
        if np.isfinite(eu) and np.isfinite(ed) and abs(eu - ed) > rel * min(eu, ed):
            out.append(I)
    return out
