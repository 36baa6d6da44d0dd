"""
Physical parameters and operator construction for a flux qubit coupled to
``M`` electron spins in the spin-locked rotating frame.

Qubit 0 is the flux qubit (FQ) and is the most significant bit of every
basis index; spin ``k`` (1-based) is the ``k``-th next bit.  Single-qubit
states are ``|0>`` (ground) and ``|1>`` (excited) with

    sigma_z = |1><1| - |0><0|,   sigma_+ = |1><0|,   sigma_- = |0><1|,

so that ``sigma_+ = (sigma_x + i sigma_y) / 2`` and the excited-state
population of spin ``k`` is ``(1 + Tr(sigma_z^(k) rho)) / 2``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from functools import reduce

import numpy as np

# Physical constants (rad s^-1 T^-1, T m A^-1, J s, J K^-1).
GAMMA_E = 1.760859e11
MU_0 = 1.256637e-6
HBAR = 1.054571817e-34
K_B = 1.380649e-23

RATE_CONVENTIONS = ("caption-literal", "physical")


class StepSizeWarning(UserWarning):
    """The integration substep is not small against the fastest rate."""


@dataclass(frozen=True)
class PhysicalConfig:
    """Flux-qubit, electron-spin and schedule parameters (SI units, angular
    frequencies in rad/s).  Defaults are the flux-qubit parameter table of the
    original proposal together with ``T1_e = 1 s`` and ``T2_e = 1 ms``."""

    r0: float = 3.0e-6
    I_p: float = 180e-9
    Delta: float = 2 * math.pi * 5.37e9
    epsilon: float = 2 * math.pi * 0.112e9
    T1_fq: float = 200e-6
    T2_fq: float = 30e-6
    T1_e: float = 1.0
    T2_e: float = 1.0e-3
    t_i: float = 5e-6
    t_int: float = 95e-6
    delta: float = 5e-6

    def __post_init__(self):
        for name in ("r0", "T1_fq", "T2_fq", "T1_e", "T2_e", "t_int", "delta"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be strictly positive, got {value!r}")
        if not (np.isfinite(self.t_i) and self.t_i >= 0):
            raise ValueError(f"t_i must be non-negative, got {self.t_i!r}")
        if self.I_p < 0:
            raise ValueError("I_p must be non-negative")
        if self.delta > self.t_int:
            raise ValueError(f"delta ({self.delta}) exceeds t_int ({self.t_int})")

    def g0(self) -> float:
        """Coupling of a spin sitting at the centre of the loop."""
        return coupling_strength(self, (0.0, 0.0))

    def rates(self, M: int, *, transverse: bool = True, longitudinal: bool = True,
              convention: str = "caption-literal") -> tuple[np.ndarray, np.ndarray]:
        """Return ``(gamma_T, gamma_L)`` arrays of length ``M + 1``.

        ``caption-literal`` maps every rate to the inverse of the quoted time
        (``gamma_T = 1/T2``, ``gamma_L = 1/T1``).  ``physical`` instead matches
        the dissipator's actual relaxation times: populations relax at
        ``2 gamma_L`` and coherences at ``2 gamma_T + gamma_L``.
        """
        if convention not in RATE_CONVENTIONS:
            raise ValueError(f"unknown rate convention {convention!r}")
        T1 = np.array([self.T1_fq] + [self.T1_e] * M)
        T2 = np.array([self.T2_fq] + [self.T2_e] * M)
        if convention == "caption-literal":
            gL = 1.0 / T1
            gT = 1.0 / T2
        else:
            gL = 0.5 / T1
            gT = 0.5 * (1.0 / T2 - gL)
            if np.any(gT < 0):
                raise ValueError("T2 > 2 T1 is unphysical under the 'physical' convention")
        if not longitudinal:
            gL = np.zeros(M + 1)
        if not transverse:
            gT = np.zeros(M + 1)
        return gT, gL


@dataclass
class SpinEnsemble:
    """Per-spin detunings and couplings plus per-qubit decay rates.

    ``gamma_T`` and ``gamma_L`` have length ``M + 1``; index 0 is the flux
    qubit.  Missing rate arrays default to zero.
    """

    omega_prime: np.ndarray
    g: np.ndarray
    gamma_T: np.ndarray | None = None
    gamma_L: np.ndarray | None = None
    M: int = field(init=False)

    def __post_init__(self):
        self.omega_prime = np.atleast_1d(np.asarray(self.omega_prime, dtype=float))
        self.g = np.atleast_1d(np.asarray(self.g, dtype=float))
        self.M = len(self.g)
        if len(self.omega_prime) != self.M:
            raise ValueError(
                f"omega_prime has length {len(self.omega_prime)} but g has length {self.M}")
        zeros = np.zeros(self.M + 1)
        self.gamma_T = zeros.copy() if self.gamma_T is None else np.asarray(self.gamma_T, dtype=float)
        self.gamma_L = zeros.copy() if self.gamma_L is None else np.asarray(self.gamma_L, dtype=float)
        for name in ("gamma_T", "gamma_L"):
            arr = getattr(self, name)
            if arr.shape != (self.M + 1,):
                raise ValueError(f"{name} must have length M + 1 = {self.M + 1}, got {arr.shape}")
            if np.any(arr < 0) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite and non-negative")
        if np.any(self.g < 0) or not np.all(np.isfinite(self.g)):
            raise ValueError("couplings g must be finite and non-negative")
        if not np.all(np.isfinite(self.omega_prime)):
            raise ValueError("detunings must be finite")

    @property
    def n_qubits(self) -> int:
        return self.M + 1

    @classmethod
    def uniform(cls, M: int, g: float, omega_prime: float = 0.0, **rates) -> "SpinEnsemble":
        return cls(np.full(M, float(omega_prime)), np.full(M, float(g)), **rates)

    def with_rates(self, gamma_T=None, gamma_L=None) -> "SpinEnsemble":
        return replace(self, gamma_T=gamma_T, gamma_L=gamma_L)

    def max_rate(self) -> float:
        """Largest rate or frequency scale (rad/s) entering one substep."""
        return float(max(np.max(self.gamma_T), np.max(self.gamma_L),
                         np.max(self.g), np.max(np.abs(self.omega_prime)), 0.0))


def check_step_size(ensemble: SpinEnsemble, delta: float, threshold: float = 0.05) -> float:
    """Warn when ``delta * max(rate, coupling)`` exceeds ``threshold``."""
    ratio = delta * ensemble.max_rate()
    if ratio > threshold:
        warnings.warn(
            f"delta * max(rate, coupling) = {ratio:.3g} exceeds {threshold}; "
            "the first-order dissipative step may be inaccurate",
            StepSizeWarning, stacklevel=2)
    return ratio


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------
SIGMA_P = np.array([[0, 0], [1, 0]], dtype=complex)
SIGMA_M = SIGMA_P.T.copy()
SIGMA_Z = np.diag([-1.0, 1.0]).astype(complex)
SIGMA_X = SIGMA_P + SIGMA_M
SIGMA_Y = -1j * (SIGMA_P - SIGMA_M)
IDENTITY_2 = np.eye(2, dtype=complex)


def embed(op: np.ndarray, site: int, n_qubits: int) -> np.ndarray:
    """Tensor a single-qubit operator into an ``n_qubits`` register.
    Site 0 is the most significant bit."""
    if not 0 <= site < n_qubits:
        raise IndexError(f"site {site} out of range for {n_qubits} qubits")
    factors = [op if i == site else IDENTITY_2 for i in range(n_qubits)]
    return reduce(np.kron, factors)


def bit_values(n_qubits: int, site: int) -> np.ndarray:
    """0/1 occupation of ``site`` for every basis index."""
    idx = np.arange(2 ** n_qubits)
    return (idx >> (n_qubits - 1 - site)) & 1


def build_effective_hamiltonian(ensemble: SpinEnsemble) -> np.ndarray:
    """Rotating-frame Hamiltonian

        H = sum_k omega'_k sigma_z^(k) + g_k (sigma_+^(0) sigma_-^(k) + h.c.)

    as a dense ``2**(M+1)`` square matrix.  Built directly from basis-index
    bit arithmetic, so every matrix element is exact.
    """
    M = ensemble.M
    if M < 1:
        raise ValueError("the effective model needs at least one spin")
    N = M + 1
    dim = 2 ** N
    H = np.zeros((dim, dim), dtype=complex)
    idx = np.arange(dim)
    fq = bit_values(N, 0)
    for k in range(1, N):
        b = bit_values(N, k)
        H[idx, idx] += ensemble.omega_prime[k - 1] * (2 * b - 1)
        # sigma_+^(0) sigma_-^(k): |0 .. 1_k ..> -> |1 .. 0_k ..>
        src = idx[(fq == 0) & (b == 1)]
        dst = src ^ (1 << (N - 1)) ^ (1 << (N - 1 - k))
        H[dst, src] += ensemble.g[k - 1]
        H[src, dst] += ensemble.g[k - 1]
    return H


def collective_operators(M: int) -> dict[str, np.ndarray]:
    """Collective spin operators on the ``2**M`` spin-only space.

    ``S_z``, ``S_p``, ``S_m`` are sums of single-spin Pauli-type operators;
    ``J2`` is the total angular momentum squared with eigenvalues ``j(j+1)``.
    """
    dim = 2 ** M
    idx = np.arange(dim)
    Sz = np.zeros(dim)
    Sp = np.zeros((dim, dim))
    for k in range(M):
        b = (idx >> (M - 1 - k)) & 1
        Sz += 2 * b - 1
        src = idx[b == 0]
        Sp[src | (1 << (M - 1 - k)), src] += 1.0
    Sm = Sp.T.copy()
    Jz = np.diag(Sz / 2)
    J2 = Jz @ Jz + 0.5 * (Sp @ Sm + Sm @ Sp)
    return {"S_z": np.diag(Sz), "S_p": Sp, "S_m": Sm, "J_z": Jz, "J2": J2}


# ---------------------------------------------------------------------------
# Geometry, thermal baseline, observables
# ---------------------------------------------------------------------------
def coupling_strength(config: PhysicalConfig, position) -> float:
    """Coupling (rad/s) of a spin at ``position = (x, y)`` inside the square
    loop of half-side ``r0``, each side treated as an infinite straight wire."""
    x, y = (float(v) for v in position)
    r0 = config.r0
    if not (abs(x) < r0 and abs(y) < r0):
        raise ValueError(f"position {position!r} is not strictly inside the loop (half-side {r0})")
    norm = math.hypot(config.epsilon, config.Delta)
    if norm == 0:
        raise ValueError("epsilon and Delta cannot both vanish")
    distances = (r0 - x, r0 + x, r0 - y, r0 + y)
    return (config.epsilon / norm) * (GAMMA_E * MU_0 * config.I_p / (2 * math.pi)) \
        * sum(1.0 / r for r in distances)


def gibbs_population(B: float, T: float) -> float:
    """Thermal excited-state population of an electron spin at field ``B`` (T)
    and temperature ``T`` (K)."""
    if not T > 0:
        raise ValueError(f"temperature must be positive, got {T!r}")
    if B < 0:
        raise ValueError(f"field must be non-negative, got {B!r}")
    # exp(-x) / (1 + exp(-x)) with x >= 0 cannot overflow
    w = math.exp(-HBAR * GAMMA_E * B / (K_B * T))
    return w / (1.0 + w)


def excited_population(rho: np.ndarray, k: int) -> float:
    """``(1 + Tr(sigma_z^(k) rho)) / 2`` for spin ``k`` (1-based)."""
    rho = np.asarray(rho)
    N = int(round(math.log2(rho.shape[0])))
    M = N - 1
    if not 1 <= k <= M:
        raise IndexError(f"spin index {k} out of range 1..{M}")
    sz = 2 * bit_values(N, k) - 1
    return 0.5 * (1.0 + float(np.real(np.dot(sz, np.diagonal(rho)))))


def polarization_gain(p_cooled: float, p_thermal: float) -> float:
    """Ratio of polarization contrasts ``(1 - 2 p_cooled) / (1 - 2 p_thermal)``."""
    if not p_thermal < 0.5:
        raise ValueError("thermal population must be below 1/2 for a positive baseline contrast")
    if not (0 <= p_cooled < 0.5 and p_thermal >= 0):
        raise ValueError("populations must lie in [0, 1/2)")
    return (1 - 2 * p_cooled) / (1 - 2 * p_thermal)
