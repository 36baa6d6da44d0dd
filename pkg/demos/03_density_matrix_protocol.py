"""
Running the protocol on the full density matrix
===============================================

Three spins, equal couplings, no decoherence.  Each cycle lets the flux
qubit exchange energy with the spins for 95 us and then resets it.
"""
import numpy as np

from fqpol.dicke import dark_limit
from fqpol.lindblad import SaturationRule, Schedule, initial_state, run_protocol
from fqpol.model import PhysicalConfig, SpinEnsemble, build_effective_hamiltonian

cfg = PhysicalConfig()
M = 3
ens = SpinEnsemble(np.zeros(M), np.full(M, cfg.g0()))
H = build_effective_hamiltonian(ens)

# Reset every 100 us and stop once the mean population stops moving
traj = run_protocol(initial_state(M), H, ens, Schedule.from_config(cfg, 30_000),
                    saturation=SaturationRule())

for n in (0, 100, 1000, 3000, len(traj) - 1):
    print(f"step {traj.step[n]:6d}  t = {traj.time_s[n]:.3f} s  p_up = {np.round(traj.p_up[n], 4)}")

print(f"plateau {traj.p_up_mean[-1]:.4f} vs dark-state limit {dark_limit(M)[1]:.4f}")
print("audit:", traj.audit())

# The CSV is what the command-line tool writes
print(traj.to_csv().splitlines()[0])
