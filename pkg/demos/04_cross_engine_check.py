"""
Two engines, one answer
=======================

The density-matrix engine knows nothing about angular-momentum sectors.  If
its qubit resets are spaced far enough apart, projecting its spin state onto
the |j, m, i> basis should reproduce the table update exactly.
"""
from fqpol import xcheck

basis = xcheck.build_sector_basis(3)
print("basis check:", xcheck.sector_basis_report(basis)["passed"])

r = xcheck.engine_equivalence(3, mode="step1", n_cycles=10, basis=basis)
print(f"exchange only: max deviation {r['max_deviation']:.2e}")

r = xcheck.engine_equivalence(3, mode="step1+2", n_cycles=10, basis=basis)
print(f"exchange + dephasing: max deviation {r['max_deviation']:.2e}")

# Resetting too early leaves coherence behind and the agreement degrades
for spacing in (1, 2, 4, 8, 16):
    r = xcheck.engine_equivalence(3, n_cycles=8, spacing=spacing, enforce_saturation=False,
                                  basis=basis)
    print(f"reset after {spacing:2d}/gamma: deviation {r['max_deviation']:.3e}")

# Everything at once, as JSON
print(xcheck.to_json(xcheck.run_all(2, equivalence=False))[:300], "...")
