"""
Density-matrix propagation with the first-order operator-sum stepper

    rho -> rho' = U rho U^dag,   U = exp(-i H delta)
    rho(t + delta) = rho' + L[rho'] delta

and a periodic flux-qubit reset.  ``L`` contains per-qubit dephasing
``gamma_T (sz rho sz - rho)`` and symmetric exchange with the bath
``gamma_L (s+ rho s- + s- rho s+ - rho)``.

The effective Hamiltonian conserves the total excitation number, the
dissipator preserves the difference of excitation numbers between row and
column, and the reset does too.  A state whose coherences only connect
basis vectors of equal excitation number therefore stays that way, and
:class:`OperatorSumStepper` propagates only that support, one excitation
block at a time.  Other states fall back to dense matrices.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .model import SpinEnsemble, check_step_size

TRACE_ABORT = 1e-6
MIN_EIG_ABORT = -1e-4


class InvariantBreach(RuntimeError):
    """A protocol run left the set of valid density matrices."""


class NumericalOverflowError(FloatingPointError):
    """Non-finite entries appeared during propagation."""


def _n_qubits(dim: int) -> int:
    n = int(round(math.log2(dim)))
    if 2 ** n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


def _popcount(idx: np.ndarray) -> np.ndarray:
    count = np.zeros_like(idx)
    x = idx.copy()
    while np.any(x):
        count += x & 1
        x >>= 1
    return count


def initial_state(M: int) -> np.ndarray:
    """Flux qubit in ``|0>``, every spin completely mixed."""
    fq = np.zeros((2, 2), dtype=complex)
    fq[0, 0] = 1.0
    return np.kron(fq, np.eye(2 ** M, dtype=complex) / 2 ** M)


def validate_density_matrix(rho: np.ndarray, *, herm_tol=1e-10, trace_tol=1e-9,
                            eig_tol=-1e-6) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    _n_qubits(rho.shape[0])
    if not np.all(np.isfinite(rho)):
        raise ValueError("density matrix has non-finite entries")
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > trace_tol:
        raise ValueError(f"density matrix trace {np.trace(rho).real:.12g} != 1")
    if np.min(np.linalg.eigvalsh(rho)) < eig_tol:
        raise ValueError("density matrix is not positive semidefinite")
    return rho


def _check_rates(ensemble: SpinEnsemble):
    if np.any(ensemble.gamma_T < 0) or np.any(ensemble.gamma_L < 0):
        raise ValueError("decay rates must be non-negative")


def dissipator(rho: np.ndarray, ensemble: SpinEnsemble) -> np.ndarray:
    """Apply the Lindblad dissipator to a dense density matrix."""
    _check_rates(ensemble)
    rho = np.asarray(rho, dtype=complex)
    N = _n_qubits(rho.shape[0])
    if N != ensemble.n_qubits:
        raise ValueError(f"state has {N} qubits, ensemble has {ensemble.n_qubits}")
    idx = np.arange(rho.shape[0])
    out = np.zeros_like(rho)
    for l in range(N):
        shift = N - 1 - l
        bits = (idx >> shift) & 1
        gT = ensemble.gamma_T[l]
        gL = ensemble.gamma_L[l]
        if gT:
            sign = (2 * bits - 1)
            out += gT * (np.outer(sign, sign) - 1) * rho
        if gL:
            flip = idx ^ (1 << shift)
            same = bits[:, None] == bits[None, :]
            out += gL * (np.where(same, rho[np.ix_(flip, flip)], 0) - rho)
    return out


def propagator(H: np.ndarray, delta: float) -> np.ndarray:
    """``exp(-i H delta)`` from a Hermitian eigendecomposition.

    When ``H`` conserves excitation number the decomposition is done per
    excitation block, so entries between blocks are exactly zero.
    """
    H = np.asarray(H, dtype=complex)
    dim = H.shape[0]
    U = np.zeros_like(H)
    blocks = _excitation_blocks(_n_qubits(dim)) if conserves_excitations(H) \
        else [np.arange(dim)]
    for b in blocks:
        E, V = np.linalg.eigh(H[np.ix_(b, b)])
        U[np.ix_(b, b)] = (V * np.exp(-1j * E * delta)) @ V.conj().T
    return U


def conserves_excitations(H: np.ndarray) -> bool:
    pop = _popcount(np.arange(H.shape[0]))
    rows, cols = np.nonzero(H)
    return bool(np.all(pop[rows] == pop[cols]))


def _excitation_blocks(N: int) -> list[np.ndarray]:
    pop = _popcount(np.arange(2 ** N))
    return [np.flatnonzero(pop == k) for k in range(N + 1)]


def evolve_substep(rho: np.ndarray, H: np.ndarray, ensemble: SpinEnsemble, delta: float,
                   U: np.ndarray | None = None) -> np.ndarray:
    """One operator-sum substep on a dense state.  ``U`` may be passed in when
    precomputed with :func:`propagator`; the result is then identical to
    recomputing it."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    if U is None:
        U = propagator(H, delta)
    rho1 = U @ rho @ U.conj().T
    out = rho1 + delta * dissipator(rho1, ensemble)
    if not np.all(np.isfinite(out)):
        raise NumericalOverflowError("non-finite entries after substep")
    return out


def partial_trace_fq(rho: np.ndarray) -> np.ndarray:
    """Trace out the flux qubit, leaving the ``2**M`` spin marginal."""
    rho = np.asarray(rho)
    half = rho.shape[0] // 2
    return rho[:half, :half] + rho[half:, half:]


def reset_flux_qubit(rho: np.ndarray) -> np.ndarray:
    """Return ``|0><0| (x) Tr_0(rho)``."""
    rho = np.asarray(rho, dtype=complex)
    _n_qubits(rho.shape[0])
    out = np.zeros_like(rho)
    half = rho.shape[0] // 2
    out[:half, :half] = partial_trace_fq(rho)
    return out


# ---------------------------------------------------------------------------
# Schedules and trajectories
# ---------------------------------------------------------------------------
@dataclass
class Schedule:
    """Reset schedule.  ``t_int`` is rounded to a whole number of substeps; the
    rounding residual (s) is kept in ``residual``."""

    delta: float
    t_int: float
    t_i: float
    n_steps: int
    n_substeps: int = field(init=False)
    residual: float = field(init=False)

    def __post_init__(self):
        if not (self.delta > 0 and self.t_int > 0 and self.t_i >= 0):
            raise ValueError("delta and t_int must be positive and t_i non-negative")
        if self.delta > self.t_int:
            raise ValueError("delta exceeds t_int")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps!r}")
        self.n_steps = int(self.n_steps)
        self.n_substeps = max(1, int(round(self.t_int / self.delta)))
        self.residual = self.t_int - self.n_substeps * self.delta

    @property
    def period(self) -> float:
        return self.n_substeps * self.delta + self.t_i

    @classmethod
    def from_config(cls, config, n_steps: int) -> "Schedule":
        return cls(config.delta, config.t_int, config.t_i, n_steps)


@dataclass
class SaturationRule:
    """Stop once the mean excited population moved less than ``tol`` over the
    last ``window`` steps."""

    window: int = 100
    tol: float = 1e-4

    def satisfied(self, mean_p: list[float]) -> bool:
        n = len(mean_p) - 1
        return n >= self.window and abs(mean_p[n] - mean_p[n - self.window]) < self.tol


@dataclass
class Trajectory:
    """Per-step observables of a protocol run.  Row 0 is the initial state."""

    step: np.ndarray
    time_s: np.ndarray
    p_up: np.ndarray            # shape (n_rows, M)
    trace_error: np.ndarray
    min_eig: np.ndarray
    herm_defect: np.ndarray
    saturated: bool = False
    final_state: np.ndarray | None = None

    @property
    def p_up_mean(self) -> np.ndarray:
        return self.p_up.mean(axis=1)

    @property
    def M(self) -> int:
        return self.p_up.shape[1]

    def __len__(self):
        return len(self.step)

    def audit(self) -> dict:
        return {
            "max_trace_error": float(np.max(self.trace_error)),
            "max_hermiticity_defect": float(np.max(self.herm_defect)),
            "min_eigenvalue": float(np.min(self.min_eig)),
            "p_up_min": float(np.min(self.p_up)),
            "p_up_max": float(np.max(self.p_up)),
            "steps_run": int(self.step[-1]),
            "saturated": bool(self.saturated),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        M = self.M
        writer.writerow(["step", "time_s"] + [f"p_up_{k}" for k in range(1, M + 1)]
                        + ["p_up_mean", "trace_error", "min_eig"])
        mean = self.p_up_mean
        for i in range(len(self)):
            values = [self.time_s[i], *self.p_up[i], mean[i], self.trace_error[i], self.min_eig[i]]
            writer.writerow([str(int(self.step[i]))] + [f"{v:.8e}" for v in values])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# Stepper
# ---------------------------------------------------------------------------
class OperatorSumStepper:
    """Precomputed propagator, dissipator and reset for one ``(H, ensemble,
    delta)`` triple.

    States are handled in an internal representation (see :meth:`load` and
    :meth:`dense`); with the block layout that is a flat vector of the
    equal-excitation coherences.
    """

    def __init__(self, H: np.ndarray, ensemble: SpinEnsemble, delta: float, *,
                 layout: str = "auto"):
        _check_rates(ensemble)
        if not delta > 0:
            raise ValueError("delta must be positive")
        H = np.asarray(H, dtype=complex)
        self.N = _n_qubits(H.shape[0])
        if self.N != ensemble.n_qubits:
            raise ValueError("Hamiltonian and ensemble sizes disagree")
        self.dim = H.shape[0]
        self.M = self.N - 1
        self.H = H
        self.ensemble = ensemble
        self.delta = delta
        self.U = propagator(H, delta)
        if layout not in ("auto", "blocks", "dense"):
            raise ValueError(f"unknown layout {layout!r}")
        self._block_capable = conserves_excitations(H)
        if layout == "blocks" and not self._block_capable:
            raise ValueError("block layout needs an excitation-conserving Hamiltonian")
        self.layout = "dense" if layout == "dense" or not self._block_capable else "blocks"
        self._zsign = np.array([2 * ((np.arange(self.dim) >> (self.N - 1 - k)) & 1) - 1
                                for k in range(1, self.N)], dtype=float)
        if self._block_capable:
            self._build_blocks()

    # -- block layout -------------------------------------------------------
    def _build_blocks(self):
        N, dim = self.N, self.dim
        idx = np.arange(dim)
        pop = _popcount(idx)
        self.blocks = _excitation_blocks(N)
        local = np.empty(dim, dtype=np.int64)
        sizes = np.array([len(b) for b in self.blocks])
        offsets = np.concatenate([[0], np.cumsum(sizes ** 2)])
        for b in self.blocks:
            local[b] = np.arange(len(b))
        self._sizes, self._offsets = sizes, offsets
        self._Ublocks = [np.ascontiguousarray(self.U[np.ix_(b, b)]) for b in self.blocks]
        self._UblocksH = [u.conj().T.copy() for u in self._Ublocks]

        def pos(r, c):
            k = pop[r]
            return offsets[k] + local[r] * sizes[k] + local[c]

        R = np.concatenate([np.repeat(b, len(b)) for b in self.blocks])
        C = np.concatenate([np.tile(b, len(b)) for b in self.blocks])
        self._R, self._C = R, C
        S = len(R)
        diag = np.zeros(S)
        rows, cols, vals = [], [], []
        gT, gL = self.ensemble.gamma_T, self.ensemble.gamma_L
        for l in range(N):
            shift = N - 1 - l
            br = (R >> shift) & 1
            bc = (C >> shift) & 1
            if gT[l]:
                diag += gT[l] * ((2 * br - 1) * (2 * bc - 1) - 1)
            if gL[l]:
                diag -= gL[l]
                sel = np.flatnonzero(br == bc)
                rows.append(sel)
                cols.append(pos(R[sel] ^ (1 << shift), C[sel] ^ (1 << shift)))
                vals.append(np.full(len(sel), gL[l]))
        rows.append(np.arange(S))
        cols.append(np.arange(S))
        vals.append(diag)
        D = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(S, S))
        self._A = (sp.identity(S, format="csr") + self.delta * D).tocsr().astype(complex)
        self._diagpos = pos(idx, idx)
        fqbit = 1 << (N - 1)
        tgt = np.flatnonzero((R < fqbit) & (C < fqbit))
        self._reset_tgt = tgt
        self._reset_src = pos(R[tgt] | fqbit, C[tgt] | fqbit)
        # dense reference for the dense layout
        self._support_mask = np.zeros((dim, dim), dtype=bool)
        self._support_mask[R, C] = True

    def supports(self, rho: np.ndarray) -> bool:
        """True when ``rho`` only has equal-excitation coherences."""
        return self._block_capable and not np.any(rho[~self._support_mask])

    # -- state conversion ---------------------------------------------------
    def load(self, rho: np.ndarray):
        rho = np.asarray(rho, dtype=complex)
        if rho.shape != (self.dim, self.dim):
            raise ValueError("state dimension does not match the Hamiltonian")
        if self.layout == "blocks" and self.supports(rho):
            return ("blocks", rho[self._R, self._C].copy())
        return ("dense", rho.copy())

    def dense(self, state) -> np.ndarray:
        kind, data = state
        if kind == "dense":
            return data.copy()
        rho = np.zeros((self.dim, self.dim), dtype=complex)
        rho[self._R, self._C] = data
        return rho

    # -- propagation --------------------------------------------------------
    def substep(self, state):
        kind, data = state
        if kind == "dense":
            return ("dense", evolve_substep(data, self.H, self.ensemble, self.delta, self.U))
        v = data.copy()
        for k, n in enumerate(self._sizes):
            if n == 1 and self._Ublocks[k][0, 0] == 1:
                continue
            sl = slice(self._offsets[k], self._offsets[k + 1])
            blk = v[sl].reshape(n, n)
            v[sl] = (self._Ublocks[k] @ blk @ self._UblocksH[k]).ravel()
        v = self._A @ v
        if not np.all(np.isfinite(v)):
            raise NumericalOverflowError("non-finite entries after substep")
        return ("blocks", v)

    def evolve(self, state, n_substeps: int):
        for _ in range(n_substeps):
            state = self.substep(state)
        return state

    def reset(self, state):
        kind, data = state
        if kind == "dense":
            return ("dense", reset_flux_qubit(data))
        out = np.zeros_like(data)
        out[self._reset_tgt] = data[self._reset_tgt] + data[self._reset_src]
        return ("blocks", out)

    # -- observables --------------------------------------------------------
    def diagonal(self, state) -> np.ndarray:
        kind, data = state
        if kind == "dense":
            return np.diagonal(data).copy()
        return data[self._diagpos]

    def excited_populations(self, state) -> np.ndarray:
        d = np.real(self.diagonal(state))
        return 0.5 * (1.0 + self._zsign @ d)

    def audit(self, state) -> tuple[float, float, float]:
        """Return ``(trace_error, hermiticity_defect, min_eigenvalue)``."""
        kind, data = state
        if kind == "dense":
            tr = np.trace(data)
            herm = np.max(np.abs(data - data.conj().T))
            mineig = np.min(np.linalg.eigvalsh(0.5 * (data + data.conj().T)))
        else:
            tr = np.sum(data[self._diagpos])
            herm = 0.0
            mineig = np.inf
            for k, n in enumerate(self._sizes):
                blk = data[self._offsets[k]:self._offsets[k + 1]].reshape(n, n)
                herm = max(herm, float(np.max(np.abs(blk - blk.conj().T))))
                mineig = min(mineig, float(np.min(np.linalg.eigvalsh(0.5 * (blk + blk.conj().T)))))
        return abs(tr - 1.0), float(herm), float(mineig)


def run_protocol(initial: np.ndarray, H: np.ndarray, ensemble: SpinEnsemble,
                 schedule: Schedule, *, saturation: SaturationRule | None = None,
                 layout: str = "auto", keep_final: bool = True) -> Trajectory:
    """Evolve for ``t_int``, reset the flux qubit, repeat ``n_steps`` times.

    Observables are recorded after every reset.  With ``saturation`` the run
    stops early once the rule is met.  Raises :class:`InvariantBreach` when
    the trace drifts by more than 1e-6 or an eigenvalue drops below -1e-4.
    """
    check_step_size(ensemble, schedule.delta)
    initial = validate_density_matrix(initial)
    stepper = OperatorSumStepper(H, ensemble, schedule.delta, layout=layout)
    state = stepper.load(initial)

    steps, times, pups, trerr, mineig, herm = [], [], [], [], [], []

    def record(n, t):
        te, hd, me = stepper.audit(state)
        if te > TRACE_ABORT or me < MIN_EIG_ABORT:
            raise InvariantBreach(
                f"invariant breach at step {n}: trace error {te:.3e}, "
                f"min eigenvalue {me:.3e}, hermiticity defect {hd:.3e}")
        steps.append(n)
        times.append(t)
        pups.append(stepper.excited_populations(state))
        trerr.append(te)
        herm.append(hd)
        mineig.append(me)

    record(0, 0.0)
    means = [float(np.mean(pups[0]))]
    saturated = False
    for n in range(1, schedule.n_steps + 1):
        state = stepper.evolve(state, schedule.n_substeps)
        state = stepper.reset(state)
        record(n, n * schedule.period)
        means.append(float(np.mean(pups[-1])))
        if saturation is not None and saturation.satisfied(means):
            saturated = True
            break
    return Trajectory(
        step=np.array(steps), time_s=np.array(times), p_up=np.array(pups),
        trace_error=np.array(trerr), min_eig=np.array(mineig), herm_defect=np.array(herm),
        saturated=saturated, final_state=stepper.dense(state) if keep_final else None)
