"""
Dark states and why spin dephasing helps
========================================

For identical spins the protocol only moves probability down the ladders
|j, m> -> |j, m-1>.  The bottom rung of every ladder is dark, so repeating the
exchange step alone gets stuck.  Dephasing the spins in between mixes the
ladders and the stuck population leaks out.
"""
from fractions import Fraction

from fqpol import dicke

# Where exchange-only cooling stops, exactly
for M in (1, 2, 3, 4, 10):
    weights, p = dicke.dark_limit(M, exact=True)
    print(f"M = {M:3d}: exchange-only limit p_up = {p} = {float(p):.4f}")

# The first few cycles for two spins, in exact arithmetic
s = dicke.SectorState.uniform(2, exact=True)
for n in range(4):
    print(f"cycle {n}: p_up = {s.p_up()}")
    s = dicke.step1_update(s)

# The exchange-only limit creeps toward 1/2 as the register grows
for M in (10, 50, 100, 200):
    p, cycles = dicke.step1_saturation(M)
    print(f"M = {M:3d}: exchange only saturates at {p:.4f} after {cycles} cycles")

# With dephasing in every cycle the curves collapse when plotted against cycles / M
a = dicke.idealized_protocol(10, 200, "step1+2")
b = dicke.idealized_protocol(50, 1000, "step1+2")
print(" cycles/M   M=10      M=50")
for k in (0, 5, 10, 20, 50, 100, 200):
    print(f"  {k / 10:5.1f}   {a[k]:.5f}   {b[5 * k]:.5f}")

# The printed column recursion loses probability; the corrected one does not
cd = dicke.ColumnDistribution.uniform(2, exact=True)
print("column totals after one cycle:",
      dicke.pi_update(cd).total(), "(corrected) vs",
      dicke.pi_update(cd, dark_count="printed").total(), "(printed)")
assert dicke.pi_update(cd).total() == Fraction(1)
