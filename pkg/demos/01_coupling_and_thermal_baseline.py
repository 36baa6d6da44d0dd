"""
Where the numbers come from: coupling and thermal baseline
==========================================================

A spin sitting inside the flux-qubit loop feels the field of four straight
wire segments.  Its coupling to the qubit follows from that field.
"""
import numpy as np

from fqpol.model import PhysicalConfig, coupling_strength, gibbs_population, polarization_gain

cfg = PhysicalConfig()
print(f"coupling at the centre: {cfg.g0():.2f} rad/s")

# The field is weakest in the middle and grows toward the wires
for frac in (0.0, 0.25, 0.5, 0.75, 0.9):
    x = frac * cfg.r0
    print(f"  x = {frac:4.2f} r0  ->  g = {coupling_strength(cfg, (x, 0.0)):7.1f} rad/s")

# Random positions in a central square give a spread of couplings
rng = np.random.default_rng(0)
pos = rng.uniform(-1.75e-6, 1.75e-6, size=(10_000, 2))
g = np.array([coupling_strength(cfg, p) for p in pos])
print(f"sampled couplings: {g.min():.0f} .. {g.max():.0f} rad/s (median {np.median(g):.0f})")

# Without any cooling the spins sit in a Gibbs state
for T_mK in (10, 20, 50):
    print(f"thermal excited population at 1 mT, {T_mK} mK: {gibbs_population(1e-3, T_mK * 1e-3):.4f}")

p_th = gibbs_population(1e-3, 10e-3)
print(f"a cooled population of 0.16 is {polarization_gain(0.16, p_th):.1f}x the thermal polarization")
