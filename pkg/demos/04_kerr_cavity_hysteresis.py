"""
Optical bistability in a hexagonal Kerr cavity
==============================================

A Gaussian beam drives a hexagon whose inner half has a higher refractive
index and a Kerr response. Sweeping the intensity up and then down traces
two different branches; between the jumps a third (unstable) solution
exists, found here by continuation with the energy held fixed.

The coarse 20-layer mesh reproduces the hysteresis qualitatively in about
half a minute. ``configs/bistability_full.ini`` runs the 100-layer mesh.
"""
import numpy as np

from nlh.config import BistabilityConfig
from nlh.experiments import CavitySweep, hysteresis_width

cfg = BistabilityConfig(m=20, I_up=tuple(np.linspace(0.0, 6e5, 20)), I_mid=(4.0e5,))
sweep = CavitySweep(cfg)
print(f"{sweep.mesh.n_triangles} triangles, {sweep.space.n_dofs} unknowns")

result = sweep.run()
Iu, Eu = result.branch("up")
Id, Ed = result.branch("down")
print(f"\n{'I':>10} {'up':>8} {'down':>8}")
for I, eu in zip(Iu, Eu):
    ed = Ed[Id == I][0]
    flag = "  <- differ" if abs(eu - ed) > 0.2 * min(eu, ed) else ""
    print(f"{I:10.0f} {eu:8.3f} {ed:8.3f}{flag}")

for p in result.jumps:
    print(f"{p.branch}-sweep jumps at I = {p.I:.0f}")
width = hysteresis_width(result)
print(f"hysteresis on I in [{min(width):.0f}, {max(width):.0f}]" if width else "no hysteresis")

# %% three solutions at one intensity
mid = [p for p in result.points if p.branch == "mid"][0]
for name in ("up", "down"):
    e = sweep.energy(sweep.branch_state(result, name, mid.I))
    print(f"I = {mid.I:.0f}: {name:>4} branch energy {e:.3f}")
print(f"I = {mid.I:.0f}:  mid branch energy {mid.energy:.3f} (converged: {mid.converged})")
