"""
Continuous interior penalty against pollution
=============================================

At ``k = 40`` plain P1 elements suffer from the pollution effect: on
meshes that resolve the wavelength the phase error still dominates. The
CIP penalty ``gamma = -sqrt(3)/24 + 0.005i`` on normal-derivative jumps
shrinks the relative H1 error on the same meshes.

A few seconds.
"""
from nlh import PENALTY, AdaptConfig, corner_soliton_problem, notched_mesh, uniform_loop

fem, exact = corner_soliton_problem(k=40.0, q=10.0)
cip = fem.with_gamma(PENALTY)
mesh0 = notched_mesh(h0=0.1)
cfg = AdaptConfig(stop_rule=("iterations", 2))

t_fem = uniform_loop(fem, mesh0, cfg, exact)
t_cip = uniform_loop(cip, mesh0, cfg, exact)

print(f"{'N':>8} {'k h':>6} {'FEM':>10} {'CIPFEM':>10} {'ratio':>7}")
for i, (a, b) in enumerate(zip(t_fem.records, t_cip.records)):
    # h = |T|^(1/2) halves with every uniform step
    kh = 40.0 * mesh0.h.max() / 2 ** i
    print(f"{a.n_elements:8d} {kh:6.2f} {a.h1_rel:10.3e} {b.h1_rel:10.3e} {b.h1_rel / a.h1_rel:7.3f}")
