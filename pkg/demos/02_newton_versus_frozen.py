"""
Nonlinear iterations for the Kerr term
======================================

Three ways to handle the cubic term on a fixed mesh:

* Newton: linearise ``|u|^2 u`` exactly (the step is only real-linear)
* frozen nonlinearity: take ``|u|^2`` from the previous iterate
* modified Newton: Newton's matrix without the conjugate term

Newton converges quadratically, the two fixed-point schemes linearly.
"""
import numpy as np

from nlh import build_space, corner_soliton_problem, newton_solve, notched_mesh
from nlh.experiments import contraction_ratios, convergence_order

problem, _ = corner_soliton_problem(k=20.0, q=5.0)
space = build_space(notched_mesh(h0=0.05))
print(f"{space.n_dofs} unknowns, epsilon = {problem.epsilon:.2e}")

# start well away from the solution so the quadratic phase is visible
u_lin, _ = newton_solve(space, problem.linearized())
u0 = 3.0 * u_lin.coeffs

for scheme in ("newton", "frozen", "modified_newton"):
    sol, rep = newton_solve(space, problem, u0, tol=1e-14, scheme=scheme)
    incs = ", ".join(f"{e:.1e}" for e in rep.rel_increments)
    print(f"\n{scheme}: {rep.iterations} iterations, relative increments {incs}")
    if scheme == "newton":
        print(f"  fitted order {convergence_order(rep.rel_increments):.2f}")
    else:
        print(f"  contraction ratios {np.round(contraction_ratios(rep.rel_increments), 8)}")
