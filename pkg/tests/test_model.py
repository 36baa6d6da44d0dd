import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from fqpol.model import (GAMMA_E, HBAR, K_B, MU_0, SIGMA_M, SIGMA_P, SIGMA_X, SIGMA_Y, SIGMA_Z,
                         PhysicalConfig, SpinEnsemble, StepSizeWarning,
                         build_effective_hamiltonian, check_step_size, collective_operators,
                         coupling_strength, embed, excited_population, gibbs_population,
                         polarization_gain)


def test_ladder_operators_use_half_convention():
    assert np.allclose(SIGMA_P, (SIGMA_X + 1j * SIGMA_Y) / 2)
    assert np.allclose(SIGMA_M, (SIGMA_X - 1j * SIGMA_Y) / 2)
    # |0> is the ground state: sigma_z |0> = -|0>
    assert SIGMA_Z[0, 0] == -1 and SIGMA_Z[1, 1] == 1
    assert SIGMA_P @ np.array([1, 0]) @ np.array([0, 1]) == 1


def test_hamiltonian_matches_kronecker_construction():
    ens = SpinEnsemble([300.0, -120.0, 55.0], [170.0, 190.0, 230.0])
    N = 4
    H_ref = np.zeros((2 ** N, 2 ** N), dtype=complex)
    for k in range(1, N):
        H_ref += ens.omega_prime[k - 1] * embed(SIGMA_Z, k, N)
        flip = embed(SIGMA_P, 0, N) @ embed(SIGMA_M, k, N)
        H_ref += ens.g[k - 1] * (flip + flip.conj().T)
    H = build_effective_hamiltonian(ens)
    assert np.array_equal(H, H.conj().T)
    assert np.allclose(H, H_ref, atol=0)


def test_hamiltonian_single_spin_matrix():
    H = build_effective_hamiltonian(SpinEnsemble([10.0], [175.0]))
    # basis |FQ spin>: 00, 01, 10, 11
    expected = np.array([[-10, 0, 0, 0], [0, 10, 175, 0], [0, 175, -10, 0], [0, 0, 0, 10]])
    assert np.allclose(H, expected)


def test_hamiltonian_conserves_excitation_number():
    H = build_effective_hamiltonian(SpinEnsemble([1.0, 2.0, 3.0], [4.0, 5.0, 6.0]))
    counts = np.array([bin(i).count("1") for i in range(16)])
    rows, cols = np.nonzero(H)
    assert np.all(counts[rows] == counts[cols])


def test_single_exchange_rabi_oscillation():
    # one excitation swapped between spin and flux qubit: cos^2(g t)
    g = 175.0
    H = build_effective_hamiltonian(SpinEnsemble([0.0], [g]))
    psi0 = np.zeros(4)
    psi0[1] = 1.0   # spin excited, FQ ground
    for t in np.linspace(0, 0.02, 7):
        psi = expm(-1j * H * t) @ psi0
        assert abs(psi[1]) ** 2 == pytest.approx(math.cos(g * t) ** 2, abs=1e-12)


def test_empty_ensemble_rejected():
    with pytest.raises(ValueError):
        build_effective_hamiltonian(SpinEnsemble(np.zeros(0), np.zeros(0)))


def test_ensemble_validation():
    with pytest.raises(ValueError):
        SpinEnsemble([0.0, 1.0], [1.0])
    with pytest.raises(ValueError):
        SpinEnsemble([0.0], [-1.0])
    with pytest.raises(ValueError):
        SpinEnsemble([0.0], [1.0], gamma_T=[1.0])


def test_collective_operators_spectrum():
    for M in (1, 2, 3, 4):
        ops = collective_operators(M)
        ev = np.round(np.linalg.eigvalsh(ops["J2"]), 9)
        allowed = {round(j * (j + 1), 9) for j in np.arange(M / 2, -0.1, -1)}
        assert set(ev) <= allowed
        assert np.allclose(ops["J2"] @ ops["J_z"], ops["J_z"] @ ops["J2"])


def test_coupling_at_centre_from_four_wires():
    cfg = PhysicalConfig()
    prefactor = GAMMA_E * MU_0 * cfg.I_p / (2 * math.pi) * cfg.epsilon / math.hypot(cfg.epsilon, cfg.Delta)
    assert coupling_strength(cfg, (0, 0)) == pytest.approx(prefactor * 4 / cfg.r0, rel=1e-12)
    assert cfg.g0() == pytest.approx(175.0, rel=0.02)


def test_coupling_off_centre_by_hand():
    cfg = PhysicalConfig()
    r0 = cfg.r0
    pre = coupling_strength(cfg, (0, 0)) * r0 / 4
    x = r0 / 2
    expected = pre * (1 / (r0 - x) + 1 / (r0 + x) + 2 / r0)
    assert coupling_strength(cfg, (x, 0)) == pytest.approx(expected, rel=1e-12)


@given(st.floats(-0.95, 0.95), st.floats(-0.95, 0.95))
def test_coupling_symmetric_and_minimal_at_centre(u, v):
    cfg = PhysicalConfig()
    x, y = u * cfg.r0, v * cfg.r0
    g = coupling_strength(cfg, (x, y))
    assert g == pytest.approx(coupling_strength(cfg, (-x, y)), rel=1e-12)
    assert g == pytest.approx(coupling_strength(cfg, (y, x)), rel=1e-12)
    assert g >= cfg.g0() * (1 - 1e-12)


@pytest.mark.parametrize("pos", [(3e-6, 0), (0, -3e-6), (4e-6, 0)])
def test_coupling_rejects_boundary_and_outside(pos):
    with pytest.raises(ValueError):
        coupling_strength(PhysicalConfig(), pos)


def test_coupling_rejects_zero_bias():
    with pytest.raises(ValueError):
        coupling_strength(PhysicalConfig(epsilon=0.0, Delta=0.0), (0, 0))


def test_gibbs_population_values():
    x = HBAR * GAMMA_E * 1e-3 / (K_B * 10e-3)
    assert gibbs_population(1e-3, 10e-3) == pytest.approx(1 / (1 + math.exp(x)), rel=1e-14)
    assert gibbs_population(1e-3, 10e-3) == pytest.approx(0.4664, abs=5e-4)
    assert gibbs_population(1e-3, 50e-3) == pytest.approx(0.4933, abs=5e-4)
    assert gibbs_population(0.0, 1.0) == 0.5
    with pytest.raises(ValueError):
        gibbs_population(1e-3, 0.0)
    with pytest.raises(ValueError):
        gibbs_population(-1e-3, 1.0)


@given(st.floats(1e-5, 1.0), st.floats(1e-3, 10.0), st.floats(1e-3, 10.0))
def test_gibbs_decreases_with_field_and_rises_with_temperature(B, T1, T2):
    lo, hi = sorted((T1, T2))
    assert gibbs_population(B, lo) <= gibbs_population(B, hi) + 1e-15
    assert gibbs_population(B, lo) <= 0.5


def test_polarization_gain():
    assert polarization_gain(0.16, 0.47) == pytest.approx(0.68 / 0.06)
    assert polarization_gain(0.0, 0.0) == 1.0
    with pytest.raises(ValueError):
        polarization_gain(0.1, 0.5)


def test_excited_population_reads_the_right_bit():
    rho = np.zeros((8, 8))
    rho[0b010, 0b010] = 1.0      # spin 1 excited, spin 2 ground
    assert excited_population(rho, 1) == 1.0
    assert excited_population(rho, 2) == 0.0
    with pytest.raises(IndexError):
        excited_population(rho, 3)
    with pytest.raises(IndexError):
        excited_population(rho, 0)


def test_rate_conventions():
    cfg = PhysicalConfig()
    gT, gL = cfg.rates(2)
    assert np.allclose(gT, [1 / 30e-6, 1e3, 1e3])
    assert np.allclose(gL, [1 / 200e-6, 1.0, 1.0])
    gT, gL = cfg.rates(2, longitudinal=False)
    assert np.all(gL == 0) and gT[0] > 0
    gT, gL = cfg.rates(1, convention="physical")
    # populations relax at 2 gamma_L = 1/T1, coherences at 2 gamma_T + gamma_L = 1/T2
    assert 2 * gL[0] == pytest.approx(1 / cfg.T1_fq)
    assert 2 * gT[0] + gL[0] == pytest.approx(1 / cfg.T2_fq)
    with pytest.raises(ValueError):
        cfg.rates(1, convention="nope")


def test_config_validation():
    with pytest.raises(ValueError):
        PhysicalConfig(T1_fq=0.0)
    with pytest.raises(ValueError):
        PhysicalConfig(delta=1e-4, t_int=5e-5)
    assert PhysicalConfig(t_i=0.0).t_i == 0.0


def test_step_size_warning():
    ens = SpinEnsemble([0.0], [175.0], gamma_T=[1 / 30e-6, 1e3])
    with pytest.warns(StepSizeWarning):
        check_step_size(ens, 5e-6)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        check_step_size(ens, 1e-7)
