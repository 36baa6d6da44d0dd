"""Flux-qubit mediated cooling of electron spin ensembles.

``model`` holds parameters and operators, ``lindblad`` the density-matrix
engine, ``dicke`` the permutation-symmetric sector tables, ``xcheck`` the
brute-force oracles and ``scenarios`` / ``cli`` the run plumbing.
"""
from .dicke import (ColumnDistribution, SectorState, block_evolve, dark_limit, degeneracy,
                    idealized_protocol, pi_update, step1_update, step2_update)
from .lindblad import (InvariantBreach, OperatorSumStepper, SaturationRule, Schedule,
                       Trajectory, initial_state, reset_flux_qubit, run_protocol)
from .model import (PhysicalConfig, SpinEnsemble, StepSizeWarning, build_effective_hamiltonian,
                    coupling_strength, gibbs_population, polarization_gain)
from .scenarios import ScenarioConfig, parse_config, run_scenario, sample_ensemble

__version__ = "0.1.0"
