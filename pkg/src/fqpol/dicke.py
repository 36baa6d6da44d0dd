"""
Permutation-symmetric reduction of the cooling protocol for identical spins.

The spin register is described in the basis ``|j, m, i>`` (total angular
momentum ``j``, projection ``m``, multiplicity index ``i = 1..d_j``).
States of the form ``sum_{j,m,i} p[j, m] |0><0| (x) |j,m,i><j,m,i|`` are
closed under both protocol steps:

* Step I  -- flip-flop exchange with a dephasing flux qubit run to
  saturation, then reset of the qubit (:func:`step1_update`);
* Step II -- independent spin dephasing run to saturation, which averages
  ``p[j, m]`` over ``j`` inside every ``m`` column (:func:`step2_update`).

After Step II only the column totals ``Pi[m]`` matter and one full cycle
reduces to :func:`pi_update`.

Tables are indexed ``p[r, n]`` with ``j = j_min + r`` and ``m = n - M/2``;
entries with ``|m| > j`` are zero.  Passing ``exact=True`` to the
constructors stores :class:`fractions.Fraction` objects so that small-``M``
oracles run in exact rational arithmetic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

MODES = ("step1_only", "step1_plus_2")
_MODE_ALIASES = {"step1": "step1_only", "step1+2": "step1_plus_2",
                 "step1_only": "step1_only", "step1_plus_2": "step1_plus_2"}


def _twice(x) -> int:
    """Return ``2 x`` as an int, rejecting values that are not half-integers."""
    tx = Fraction(x) * 2 if not isinstance(x, float) else Fraction(x).limit_denominator(4) * 2
    if tx.denominator != 1:
        raise ValueError(f"{x!r} is not an integer or half-integer")
    return int(tx)


def degeneracy(M: int, j) -> int:
    """Number of multiplicity copies ``d_j = (2j+1) M! / ((M/2+j+1)! (M/2-j)!)``."""
    if M < 1 or int(M) != M:
        raise ValueError(f"M must be a positive integer, got {M!r}")
    tj = _twice(j)
    if tj < 0 or tj > M or (M - tj) % 2:
        raise ValueError(f"j = {j} is not a valid total angular momentum for M = {M}")
    hi = (M + tj) // 2
    lo = (M - tj) // 2
    num = (tj + 1) * math.factorial(M)
    den = math.factorial(hi + 1) * math.factorial(lo)
    return num // den


def column_size(M: int, m) -> int:
    """Number of binary basis states with projection ``m``: ``C(M, m + M/2)``."""
    tm = _twice(m)
    if abs(tm) > M or (M - tm) % 2:
        raise ValueError(f"m = {m} is not a valid projection for M = {M}")
    return math.comb(M, (M + tm) // 2)


def ladder_coefficient(j, m) -> float:
    """Matrix element ``l_jm = sqrt(j(j+1) - m(m-1))`` of the lowering operator."""
    j = float(j)
    m = float(m)
    return math.sqrt(max(j * (j + 1) - m * (m - 1), 0.0))


def j_values(M: int) -> list[Fraction]:
    return [Fraction(tj, 2) for tj in range(M % 2, M + 1, 2)]


@lru_cache(maxsize=None)
def _degeneracy_table(M: int) -> tuple[int, ...]:
    return tuple(degeneracy(M, j) for j in j_values(M))


@lru_cache(maxsize=None)
def _column_table(M: int) -> tuple[int, ...]:
    return tuple(math.comb(M, n) for n in range(M + 1))


def _valid_mask(M: int) -> np.ndarray:
    js = j_values(M)
    n = np.arange(M + 1)
    mask = np.zeros((len(js), M + 1), dtype=bool)
    for r, j in enumerate(js):
        tj = int(2 * j)
        mask[r] = (n >= (M - tj) // 2) & (n <= (M + tj) // 2)
    return mask


def _weights(M: int, exact: bool) -> np.ndarray:
    d = _degeneracy_table(M)
    return np.array(d, dtype=object) if exact else np.array([float(x) for x in d])


# ---------------------------------------------------------------------------
# Two-level blocks |a> = |0>|j,m,i>,  |b> = |1>|j,m-1,i>
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class BlockState:
    """Populations ``a``, ``b`` and coherence ``c = <a|rho|b>`` of one block."""

    a: float
    b: float
    c: complex
    j: float
    m: float

    @property
    def l(self) -> float:
        return ladder_coefficient(self.j, self.m)


def block_decay_rates(g: float, gamma: float, l: float) -> np.ndarray:
    """Eigenvalues of the ``(a, b, Im c)`` subsystem: ``0`` and
    ``-gamma +/- sqrt(gamma**2 - 4 g**2 l**2)``."""
    kappa = np.sqrt(complex(gamma ** 2 - 4 * (g * l) ** 2))
    return np.array([0.0, -gamma + kappa, -gamma - kappa])


def block_evolve(block: BlockState, g: float, gamma: float, t: float) -> BlockState:
    """Exact solution of

        a' = -2 g l Im c,  b' = 2 g l Im c,
        (Im c)' = g l (a - b) - 2 gamma Im c,  (Re c)' = -2 gamma Re c

    after time ``t``.  ``a + b`` is conserved; ``(a - b, Im c)`` follows the
    closed-form exponential of a 2x2 matrix with eigenvalues from
    :func:`block_decay_rates`.
    """
    if t < 0 or g < 0 or gamma < 0:
        raise ValueError("t, g and gamma must be non-negative")
    gl = g * block.l
    s = block.a + block.b
    x0 = block.a - block.b
    y0 = complex(block.c).imag
    kappa = np.sqrt(complex(gamma ** 2 - 4 * gl ** 2))
    e_plus = np.exp((-gamma + kappa) * t)
    e_minus = np.exp((-gamma - kappa) * t)
    even = 0.5 * (e_plus + e_minus)
    if abs(kappa) * t < 1e-6:
        odd = t * np.exp(-gamma * t) * (1 + (kappa * t) ** 2 / 6)
    else:
        odd = (e_plus - e_minus) / (2 * kappa)
    # exp(A t) = even * I + odd * (A + gamma I),  A = [[0, -4gl], [gl, -2 gamma]]
    x = (even + odd * gamma) * x0 + odd * (-4 * gl) * y0
    y = odd * gl * x0 + (even - odd * gamma) * y0
    x, y = float(np.real(x)), float(np.real(y))
    cr = complex(block.c).real * math.exp(-2 * gamma * t)
    return BlockState(a=0.5 * (s + x), b=0.5 * (s - x), c=complex(cr, y), j=block.j, m=block.m)


# ---------------------------------------------------------------------------
# Sector tables
# ---------------------------------------------------------------------------
@dataclass
class SectorState:
    """Probability ``p[j, m]`` of each basis vector ``|j, m, i>`` (the same for
    every ``i``).  Normalisation is ``sum_{j,m} d_j p[j, m] = 1``."""

    M: int
    p: np.ndarray

    def __post_init__(self):
        shape = (len(j_values(self.M)), self.M + 1)
        if self.p.shape != shape:
            raise ValueError(f"table for M = {self.M} must have shape {shape}, got {self.p.shape}")

    @property
    def exact(self) -> bool:
        return self.p.dtype == object

    @property
    def j_values(self) -> list[Fraction]:
        return j_values(self.M)

    @property
    def m_values(self) -> list[Fraction]:
        return [Fraction(2 * n - self.M, 2) for n in range(self.M + 1)]

    @property
    def mask(self) -> np.ndarray:
        return _valid_mask(self.M)

    def degeneracies(self) -> np.ndarray:
        return _weights(self.M, self.exact)

    def __getitem__(self, jm):
        j, m = jm
        r = j_values(self.M).index(Fraction(_twice(j), 2))
        n = (_twice(m) + self.M) // 2
        if not self.mask[r, n]:
            raise KeyError(f"|m| > j for (j, m) = ({j}, {m})")
        return self.p[r, n]

    @classmethod
    def uniform(cls, M: int, exact: bool = False) -> "SectorState":
        """Completely mixed spin register."""
        mask = _valid_mask(M)
        if exact:
            p = np.full(mask.shape, Fraction(0), dtype=object)
            p[mask] = Fraction(1, 2 ** M)
        else:
            p = np.where(mask, 2.0 ** -M, 0.0)
        return cls(M, p)

    @classmethod
    def from_columns(cls, cd: "ColumnDistribution") -> "SectorState":
        """j-independent table with column totals ``cd.Pi``."""
        M = cd.M
        mask = _valid_mask(M)
        C = _column_table(M)
        if cd.exact:
            P = np.array([Fraction(x) / C[n] for n, x in enumerate(cd.Pi)], dtype=object)
            p = np.full(mask.shape, Fraction(0), dtype=object)
        else:
            P = np.asarray(cd.Pi, dtype=float) / np.array(C, dtype=float)
            p = np.zeros(mask.shape)
        for r in range(mask.shape[0]):
            p[r, mask[r]] = P[mask[r]]
        return cls(M, p)

    def total(self):
        return (self.degeneracies()[:, None] * self.p).sum()

    def p_up(self):
        return column_distribution(self).p_up()

    def is_j_independent(self, tol: float = 0.0) -> bool:
        mask = self.mask
        for n in range(self.M + 1):
            col = self.p[mask[:, n], n]
            if any(abs(x - col[0]) > tol for x in col):
                return False
        return True

    def copy(self) -> "SectorState":
        return SectorState(self.M, self.p.copy())


@dataclass
class ColumnDistribution:
    """Total probability ``Pi[m]`` of each projection column, ordered by
    ascending ``m = -M/2 .. M/2``."""

    M: int
    Pi: np.ndarray

    def __post_init__(self):
        if len(self.Pi) != self.M + 1:
            raise ValueError(f"need {self.M + 1} column probabilities, got {len(self.Pi)}")

    @property
    def exact(self) -> bool:
        return self.Pi.dtype == object

    @property
    def m_values(self) -> list[Fraction]:
        return [Fraction(2 * n - self.M, 2) for n in range(self.M + 1)]

    @classmethod
    def uniform(cls, M: int, exact: bool = False) -> "ColumnDistribution":
        C = _column_table(M)
        if exact:
            return cls(M, np.array([Fraction(c, 2 ** M) for c in C], dtype=object))
        return cls(M, np.array(C, dtype=float) / 2.0 ** M)

    @classmethod
    def polarized(cls, M: int, exact: bool = False) -> "ColumnDistribution":
        Pi = np.full(M + 1, Fraction(0), dtype=object) if exact else np.zeros(M + 1)
        Pi[0] = Fraction(1) if exact else 1.0
        return cls(M, Pi)

    def total(self):
        return self.Pi.sum()

    def p_up(self):
        """Excited population per spin, ``sum_m Pi[m] (1 + 2m/M) / 2``."""
        n = np.arange(self.M + 1)
        if self.exact:
            return sum(Fraction(int(k), self.M) * x for k, x in zip(n, self.Pi))
        return float(np.dot(self.Pi, n) / self.M)


def step1_update(state: SectorState) -> SectorState:
    """Saturated Step I followed by the flux-qubit reset.

    Every non-dark ``|j, m>`` keeps half its weight and hands the other half
    to ``|j, m-1>``; dark states ``|j, -j>`` (including ``j = 0``) keep
    everything.
    """
    M = state.M
    p = state.p
    out = np.zeros_like(p)
    for r, j in enumerate(j_values(M)):
        tj = int(2 * j)
        lo, hi = (M - tj) // 2, (M + tj) // 2
        seg = p[r, lo:hi + 1]
        if tj == 0:
            out[r, lo] = seg[0]
            continue
        new = seg / 2
        new[:-1] = new[:-1] + seg[1:] / 2
        new[0] = new[0] + seg[0] / 2
        out[r, lo:hi + 1] = new
    return SectorState(M, out)


def step2_update(state: SectorState) -> SectorState:
    """Saturated Step II: replace ``p[j, m]`` by the column average ``P_m``."""
    cd = column_distribution(state)
    return SectorState.from_columns(cd)


def column_distribution(state: SectorState) -> ColumnDistribution:
    Pi = (state.degeneracies()[:, None] * state.p).sum(axis=0)
    return ColumnDistribution(state.M, Pi)


@lru_cache(maxsize=None)
def _pi_coefficients(M: int, dark_count: str) -> tuple[tuple[Fraction, ...], tuple[Fraction, ...]]:
    """``(stay, give)`` fractions per column for :func:`pi_update`."""
    C = _column_table(M)
    d = dict(zip((int(2 * j) for j in j_values(M)), _degeneracy_table(M)))
    stay, give = [], []
    for n in range(M + 1):
        tm = 2 * n - M
        dark = Fraction(d[-tm], C[n]) if tm <= 0 else Fraction(0)
        if dark_count == "corrected":
            lost = dark
        else:
            # published rule: d_|m| whenever the receiving column m - 1 is <= 0
            lost = Fraction(d[abs(tm)], C[n]) if tm - 2 <= 0 else Fraction(0)
        stay.append((1 + dark) / 2)
        give.append((1 - lost) / 2)
    return tuple(stay), tuple(give)


def pi_update(cd: ColumnDistribution, dark_count: str = "corrected") -> ColumnDistribution:
    """One Step I + Step II cycle acting on column totals.

    Column ``m`` retains ``(1 + D_m / C_m) / 2`` of its weight and passes
    ``(1 - D_m / C_m) / 2`` down to column ``m - 1``, with ``C_m`` the column
    size and ``D_m`` its number of dark states (``d_|m|`` for ``m <= 0``,
    none for ``m > 0``).  ``dark_count="printed"`` reproduces the published
    recursion, which counts dark states in the ``m = +1`` (or ``+1/2``)
    column as well and does not conserve probability.
    """
    if dark_count not in ("corrected", "printed"):
        raise ValueError(f"unknown dark_count {dark_count!r}")
    M = cd.M
    stay, give = _pi_coefficients(M, dark_count)
    if cd.exact:
        stay_a = np.array(stay, dtype=object)
        give_a = np.array(give, dtype=object)
    else:
        stay_a = np.array([float(x) for x in stay])
        give_a = np.array([float(x) for x in give])
    Pi = cd.Pi
    new = stay_a * Pi
    new[:-1] = new[:-1] + give_a[1:] * Pi[1:]
    return ColumnDistribution(M, new)


def dark_limit(M: int, exact: bool = False):
    """Infinite repetition of Step I alone from the completely mixed state.

    Returns ``(weights, p_up)`` where ``weights[j] = d_j (2j+1) / 2**M`` is
    the probability collected in the dark states of ladder ``j`` and
    ``p_up = sum_j weights[j] (1 - 2j/M) / 2``.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    weights = {}
    p_up = Fraction(0)
    for j, d in zip(j_values(M), _degeneracy_table(M)):
        w = Fraction(d * int(2 * j + 1), 2 ** M)
        key = float(j)
        weights[key] = w
        p_up += w * (1 - 2 * j / M) / 2
    if exact:
        return weights, p_up
    return {k: float(v) for k, v in weights.items()}, float(p_up)


def idealized_protocol(M: int, n_cycles: int, mode: str = "step1_plus_2",
                       exact: bool = False) -> np.ndarray:
    """Excited population per spin after ``0 .. n_cycles`` saturated cycles
    starting from the completely mixed state."""
    if M < 1:
        raise ValueError("M must be at least 1")
    if n_cycles < 0:
        raise ValueError("n_cycles must be non-negative")
    try:
        mode = _MODE_ALIASES[mode]
    except KeyError:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}") from None
    out = []
    if mode == "step1_only":
        s = SectorState.uniform(M, exact)
        out.append(s.p_up())
        for _ in range(n_cycles):
            s = step1_update(s)
            out.append(s.p_up())
    else:
        cd = ColumnDistribution.uniform(M, exact)
        out.append(cd.p_up())
        for _ in range(n_cycles):
            cd = pi_update(cd)
            out.append(cd.p_up())
    return np.array(out, dtype=object if exact else float)


def step1_saturation(M: int, tol: float = 1e-15, max_cycles: int = 1_000_000) -> tuple[float, int]:
    """Iterate :func:`step1_update` from the mixed state until ``p_up`` changes
    by less than ``tol``; return ``(p_up, cycles)``."""
    s = SectorState.uniform(M)
    prev = s.p_up()
    for n in range(1, max_cycles + 1):
        s = step1_update(s)
        cur = s.p_up()
        if abs(cur - prev) < tol:
            return cur, n
        prev = cur
    raise RuntimeError(f"no convergence within {max_cycles} cycles")
