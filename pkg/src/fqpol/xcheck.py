"""
Brute-force oracles for small spin registers.

Everything here works in the explicit ``2**M`` binary basis of the spins and
is independent of the table-based updates in :mod:`fqpol.dicke`, which it is
meant to check.  Reports are plain dicts that serialise to JSON.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import dicke
from .lindblad import OperatorSumStepper, initial_state
from .model import SpinEnsemble, build_effective_hamiltonian, collective_operators

MAX_ORACLE_M = 8
EQUIVALENCE_THRESHOLD = 1e-3


def _key(x) -> int:
    return dicke._twice(x)


def _popcounts(M: int) -> np.ndarray:
    idx = np.arange(2 ** M)
    return np.array([bin(i).count("1") for i in idx])


@dataclass
class SectorBasis:
    """Orthonormal vectors spanning every ``(j, m)`` eigenspace of ``(J^2, J_z)``.

    ``vectors[(2j, 2m)]`` has shape ``(2**M, d_j)``; column ``i`` is
    ``|j, m, i>``.  Within a ladder the copies are linked by the lowering
    operator, ``S_- |j, m, i> = l_jm |j, m-1, i>``.
    """

    M: int
    vectors: dict = field(default_factory=dict)

    def get(self, j, m) -> np.ndarray:
        return self.vectors[(_key(j), _key(m))]

    def multiplicity(self, j, m) -> int:
        return self.get(j, m).shape[1]

    def rho_jm(self, j, m) -> np.ndarray:
        """``sum_i |j,m,i><j,m,i|`` on the spin space."""
        V = self.get(j, m)
        return V @ V.T

    def labels(self):
        return [(Fraction(tj, 2), Fraction(tm, 2)) for tj, tm in sorted(self.vectors)]

    def project(self, sigma: np.ndarray) -> dicke.SectorState:
        """Per-copy probabilities ``p[j, m] = Tr(sum_i |jmi><jmi| sigma) / d_j``."""
        state = dicke.SectorState.uniform(self.M)
        p = np.zeros_like(state.p)
        js = dicke.j_values(self.M)
        for (tj, tm), V in self.vectors.items():
            r = js.index(Fraction(tj, 2))
            n = (tm + self.M) // 2
            p[r, n] = np.real(np.einsum("ai,ab,bi->", V, sigma, V)) / V.shape[1]
        return dicke.SectorState(self.M, p)

    def copy_spread(self, sigma: np.ndarray) -> float:
        """Largest difference between ``<j,m,i|sigma|j,m,i>`` across copies ``i``."""
        spread = 0.0
        for V in self.vectors.values():
            diag = np.real(np.einsum("ai,ab,bi->i", V, sigma, V))
            spread = max(spread, float(diag.max() - diag.min()))
        return spread


def _orthonormal_range(P: np.ndarray, candidates: np.ndarray, rank: int, tol=1e-8) -> np.ndarray:
    """Gram-Schmidt on ``P @ e_b`` for candidate basis vectors in order, keeping
    the first ``rank`` independent ones."""
    kept = []
    for b in candidates:
        v = P[:, b].copy()
        for _ in range(2):
            for u in kept:
                v -= (u @ v) * u
        norm = np.linalg.norm(v)
        if norm > tol:
            kept.append(v / norm)
            if len(kept) == rank:
                break
    if len(kept) != rank:
        raise RuntimeError(f"found {len(kept)} independent vectors, expected {rank}")
    return np.array(kept).T


def build_sector_basis(M: int) -> SectorBasis:
    """Construct ``|j, m, i>`` for ``M`` spins from the binary basis.

    Highest-weight vectors of ladder ``j`` span the kernel of ``S_+`` inside
    the column ``m = j``; they are orthonormalised in a fixed order (binary
    basis vectors projected in ascending index) and the rest of each ladder
    follows by applying ``S_-``.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    if M > MAX_ORACLE_M:
        raise ValueError(f"sector basis construction is limited to M <= {MAX_ORACLE_M}")
    ops = collective_operators(M)
    Sp, Sm = ops["S_p"], ops["S_m"]
    pop = _popcounts(M)
    dim = 2 ** M
    basis = SectorBasis(M)
    for j in dicke.j_values(M):
        tj = int(2 * j)
        d = dicke.degeneracy(M, j)
        n_top = (M + tj) // 2
        col = np.flatnonzero(pop == n_top)
        A = Sp[:, col]
        # projector onto ker(S_+) within the column
        Pcol = np.eye(len(col)) - np.linalg.pinv(A) @ A
        P = np.zeros((dim, dim))
        P[np.ix_(col, col)] = Pcol
        top = _orthonormal_range(P, col, d)
        V = top
        tm = tj
        basis.vectors[(tj, tm)] = V
        while tm > -tj:
            l = dicke.ladder_coefficient(Fraction(tj, 2), Fraction(tm, 2))
            V = Sm @ V / l
            tm -= 2
            basis.vectors[(tj, tm)] = V
    return basis


def degeneracy_audit(M_max: int = 20) -> dict:
    """Check ``sum_j d_j (2j+1) = 2**M`` for every ``M <= M_max``."""
    failures = []
    for M in range(1, M_max + 1):
        total = sum(dicke.degeneracy(M, j) * int(2 * j + 1) for j in dicke.j_values(M))
        if total != 2 ** M:
            failures.append(M)
    return {"check": "degeneracy_audit", "M_max": M_max, "failures": failures,
            "passed": not failures}


def sector_basis_report(basis: SectorBasis) -> dict:
    M = basis.M
    ops = collective_operators(M)
    J2, Jz = ops["J2"], ops["J_z"]
    all_vecs = np.hstack(list(basis.vectors.values()))
    ortho = float(np.max(np.abs(all_vecs.T @ all_vecs - np.eye(all_vecs.shape[1]))))
    eig_err = 0.0
    mult_ok = True
    for (tj, tm), V in basis.vectors.items():
        j, m = tj / 2, tm / 2
        eig_err = max(eig_err, float(np.max(np.abs(J2 @ V - j * (j + 1) * V))),
                      float(np.max(np.abs(Jz @ V - m * V))))
        mult_ok &= V.shape[1] == dicke.degeneracy(M, Fraction(tj, 2))
    complete = all_vecs.shape[1] == 2 ** M
    passed = ortho < 1e-10 and eig_err < 1e-10 and mult_ok and complete
    return {"check": "sector_basis", "M": M, "orthonormality_defect": ortho,
            "eigenvalue_defect": eig_err, "multiplicities_match": bool(mult_ok),
            "complete": bool(complete), "passed": bool(passed)}


# ---------------------------------------------------------------------------
# Step II by brute force
# ---------------------------------------------------------------------------
def column_projector(M: int, m) -> np.ndarray:
    n = (_key(m) + M) // 2
    return np.diag((_popcounts(M) == n).astype(float))


def brute_force_step2(rho_sector: np.ndarray) -> np.ndarray:
    """Fixed point of independent ``sigma_z`` dephasing on every spin: all
    off-diagonal elements in the binary basis vanish.

    The input must live on a single projection column; anything else raises
    ``ValueError``.
    """
    rho = np.asarray(rho_sector)
    M = int(round(math.log2(rho.shape[0])))
    pop = _popcounts(M)
    rows, cols = np.nonzero(np.abs(rho) > 1e-12)
    if len(rows) and (len(set(pop[rows])) != 1 or len(set(pop[cols])) != 1
                      or pop[rows[0]] != pop[cols[0]]):
        raise ValueError("input is not supported on a single m column")
    return np.diag(np.diag(rho))


def step2_closed_form(M: int, j, m) -> np.ndarray:
    """``d_j / C(M, m + M/2)`` times the projector onto the binary column ``m``."""
    d = dicke.degeneracy(M, j)
    return d / dicke.column_size(M, m) * column_projector(M, m)


def step2_action_report(M: int, basis: SectorBasis | None = None) -> dict:
    """Compare brute-force dephasing of every ``rho_jm`` with the closed form,
    and the closed form with its sector-basis expansion."""
    basis = basis or build_sector_basis(M)
    worst = 0.0
    worst_expansion = 0.0
    for j, m in basis.labels():
        out = brute_force_step2(basis.rho_jm(j, m))
        closed = step2_closed_form(M, j, m)
        worst = max(worst, float(np.max(np.abs(out - closed))))
        expansion = sum(basis.rho_jm(s, m) for s in dicke.j_values(M) if s >= abs(m))
        expansion = dicke.degeneracy(M, j) / dicke.column_size(M, m) * expansion
        worst_expansion = max(worst_expansion, float(np.max(np.abs(expansion - closed))))
    return {"check": "step2_action", "M": M, "max_deviation": worst,
            "max_expansion_deviation": worst_expansion,
            "passed": worst < 1e-10 and worst_expansion < 1e-10}


# ---------------------------------------------------------------------------
# Permutation invariance
# ---------------------------------------------------------------------------
def permutation_matrix(M: int, perm) -> np.ndarray:
    """Matrix moving the state of spin ``k`` to spin ``perm[k]`` (0-based)."""
    dim = 2 ** M
    idx = np.arange(dim)
    new = np.zeros(dim, dtype=int)
    for k in range(M):
        bit = (idx >> (M - 1 - k)) & 1
        new |= bit << (M - 1 - perm[k])
    P = np.zeros((dim, dim))
    P[new, idx] = 1.0
    return P


def permutation_invariance_check(M: int, j, m, *, n_random: int = 20, seed: int = 0,
                                 basis: SectorBasis | None = None) -> dict:
    """Check ``P rho_jm P^T = rho_jm`` for every transposition and ``n_random``
    random permutations, plus ``[P, S_z] = [P, S^2] = 0``."""
    if M > MAX_ORACLE_M:
        raise ValueError(f"M <= {MAX_ORACLE_M} required")
    basis = basis or build_sector_basis(M)
    rho = basis.rho_jm(j, m)
    single = basis.get(j, m)[:, :1] @ basis.get(j, m)[:, :1].T
    ops = collective_operators(M)
    S2 = 4 * ops["J2"]
    Sz = ops["S_z"]
    rng = np.random.default_rng(seed)
    perms = [("transposition", t) for t in itertools.combinations(range(M), 2)]
    perms += [("random", None)] * n_random
    dev_t = dev_r = comm = 0.0
    single_dev = 0.0
    for kind, t in perms:
        if kind == "transposition":
            perm = list(range(M))
            perm[t[0]], perm[t[1]] = perm[t[1]], perm[t[0]]
        else:
            perm = list(rng.permutation(M))
        P = permutation_matrix(M, perm)
        dev = float(np.max(np.abs(P @ rho @ P.T - rho)))
        if kind == "transposition":
            dev_t = max(dev_t, dev)
        else:
            dev_r = max(dev_r, dev)
        comm = max(comm, float(np.max(np.abs(P @ Sz - Sz @ P))),
                   float(np.max(np.abs(P @ S2 - S2 @ P))))
        single_dev = max(single_dev, float(np.max(np.abs(P @ single @ P.T - single))))
    passed = max(dev_t, dev_r, comm) < 1e-10
    return {"check": "permutation_invariance", "M": M, "j": str(Fraction(j)),
            "m": str(Fraction(m)), "multiplicity": dicke.degeneracy(M, j),
            "transposition_max_deviation": dev_t, "random_max_deviation": dev_r,
            "commutator_max": comm, "single_copy_invariant": bool(single_dev < 1e-10),
            "passed": bool(passed)}


# ---------------------------------------------------------------------------
# Cross-engine equivalence
# ---------------------------------------------------------------------------
def _fq_coherence(rho: np.ndarray) -> float:
    half = rho.shape[0] // 2
    return float(np.max(np.abs(rho[:half, half:]))) if half else 0.0


def _offdiag(rho: np.ndarray) -> float:
    return float(np.max(np.abs(rho - np.diag(np.diag(rho)))))


def _evolve_until(stepper, state, n_sub, residual_fn, tol, max_rounds):
    state = stepper.evolve(state, n_sub)
    rounds = 1
    res = residual_fn(stepper.dense(state))
    while res > tol and rounds < max_rounds:
        state = stepper.evolve(state, n_sub)
        rounds += 1
        res = residual_fn(stepper.dense(state))
    return state, res


def engine_equivalence(M: int, g: float = 1.0, gamma: float | None = None, *,
                       n_cycles: int = 30, mode: str = "step1", spin_gamma: float | None = None,
                       spacing: float = 20.0, enforce_saturation: bool = True,
                       basis: SectorBasis | None = None) -> dict:
    """Run the density-matrix engine on the simplified model and compare the
    spin sector probabilities with the table updates after every cycle.

    ``mode``:
      * ``"step1"``  -- exchange with a dephasing flux qubit (rate ``gamma``)
        for ``spacing / gamma`` per cycle, then reset; compared against
        :func:`fqpol.dicke.step1_update`.
      * ``"step1+2"`` -- as above, followed by a decoupled phase with spin
        dephasing ``spin_gamma``; compared against ``step2_update``.
      * ``"simultaneous"`` -- exchange, flux-qubit dephasing and spin
        dephasing at once; passes when ``p_up`` falls below 0.01.

    With ``enforce_saturation`` each phase is extended until the flux-qubit
    coherence (or the spin coherence in Step II) is below 1e-6.
    """
    if M > 4:
        raise ValueError("engine equivalence is limited to M <= 4")
    if mode not in ("step1", "step1+2", "simultaneous"):
        raise ValueError(f"unknown mode {mode!r}")
    l_max = (M + 1) / 2
    gamma = 2 * g * l_max if gamma is None else gamma
    spin_gamma = gamma if spin_gamma is None else spin_gamma
    delta = 0.05 / max(gamma, g * l_max)

    ens1 = SpinEnsemble.uniform(M, g)
    gT = np.zeros(M + 1)
    gT[0] = gamma
    if mode == "simultaneous":
        gT[1:] = spin_gamma
        delta = min(delta, 0.5 / (gamma + M * spin_gamma))
    ens1 = ens1.with_rates(gamma_T=gT)
    stepper1 = OperatorSumStepper(build_effective_hamiltonian(ens1), ens1, delta)
    n1 = max(1, int(round(spacing / gamma / delta)))

    stepper2 = None
    if mode == "step1+2":
        delta2 = 1.0 / (2 * M * spin_gamma)
        gT2 = np.zeros(M + 1)
        gT2[1:] = spin_gamma
        ens2 = SpinEnsemble.uniform(M, 0.0).with_rates(gamma_T=gT2)
        stepper2 = OperatorSumStepper(build_effective_hamiltonian(ens2), ens2, delta2)
        n2 = max(1, int(round(spacing / spin_gamma / delta2)))

    basis = basis or build_sector_basis(M)
    tol = 1e-6 if enforce_saturation else np.inf
    table = dicke.SectorState.uniform(M)
    state = stepper1.load(initial_state(M))
    deviations, residuals, spreads, p_up = [], [], [], []
    worst_breakdown = {}
    for _ in range(n_cycles):
        state, res = _evolve_until(stepper1, state, n1, _fq_coherence, tol, 200)
        state = stepper1.reset(state)
        residuals.append(res)
        table = dicke.step1_update(table)
        if stepper2 is not None:
            rho = stepper1.dense(state)
            st2 = stepper2.load(rho)
            st2, res2 = _evolve_until(stepper2, st2, n2,
                                      lambda r: _offdiag(r[: r.shape[0] // 2, : r.shape[0] // 2]),
                                      tol, 200)
            residuals[-1] = max(res, res2)
            state = stepper1.load(stepper2.dense(st2))
            table = dicke.step2_update(table)
        rho = stepper1.dense(state)
        sigma = rho[: rho.shape[0] // 2, : rho.shape[0] // 2]
        measured = basis.project(sigma)
        spreads.append(basis.copy_spread(sigma))
        p_up.append(float(measured.p_up()))
        if mode != "simultaneous":
            diff = np.abs(measured.p - table.p)
            deviations.append(float(diff.max()))
            if deviations[-1] >= max(worst_breakdown.get("max", -1.0), 0.0):
                worst_breakdown = {"max": deviations[-1], "per_sector": {
                    f"j={j},m={mm}": float(abs(measured[j, mm] - table[j, mm]))
                    for j, mm in basis.labels()}}

    report = {"check": "engine_equivalence", "M": M, "mode": mode, "g": g, "gamma": gamma,
              "spin_gamma": spin_gamma if mode != "step1" else None, "delta": delta,
              "spacing_over_gamma": spacing, "n_cycles": n_cycles,
              "max_coherence_residual": float(max(residuals)),
              "max_copy_spread": float(max(spreads)), "p_up": p_up}
    if mode == "simultaneous":
        report["final_p_up"] = p_up[-1]
        report["passed"] = p_up[-1] < 0.01
    else:
        report["max_deviation"] = float(max(deviations))
        report["deviation_per_cycle"] = deviations
        report["threshold"] = EQUIVALENCE_THRESHOLD
        report["passed"] = report["max_deviation"] < EQUIVALENCE_THRESHOLD
        if not report["passed"]:
            report["breakdown"] = worst_breakdown["per_sector"]
    return report


def run_all(M: int, *, equivalence: bool = True) -> dict:
    """Every oracle available for ``M`` spins, as one JSON-ready report."""
    basis = build_sector_basis(M)
    reports = [degeneracy_audit(), sector_basis_report(basis), step2_action_report(M, basis)]
    for j, m in basis.labels():
        reports.append(permutation_invariance_check(M, j, m, basis=basis))
    if equivalence and M <= 4:
        reports.append(engine_equivalence(M, basis=basis))
        reports.append(engine_equivalence(M, mode="step1+2", n_cycles=10, basis=basis))
    return {"M": M, "passed": all(r["passed"] for r in reports), "reports": reports}


def to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
