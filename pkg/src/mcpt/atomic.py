"""Level structure, angular momentum algebra and bare atomic operators.

Half-integer quantum numbers are stored as doubled integers (``two_j``,
``two_m``) so that indexing never compares floats.  Operators are dense
``numpy`` arrays in the ordering of a :class:`Basis`; the quantization axis
is the lab z axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .constants import AtomicData, PhysicalConstants, load_atomic_data
from .exceptions import DomainError

__all__ = [
    "Term",
    "Sublevel",
    "Basis",
    "TransitionChannel",
    "FieldVector",
    "lande_g",
    "cg_coefficient",
    "angular_momentum_matrices",
    "polarization_from_cartesian",
    "LINEAR_X",
    "zeeman_hamiltonian",
    "coupling_operator",
    "jump_operators",
    "ba138_terms",
    "ba138_basis",
    "ba138_channels",
    "LASER_CHANNELS",
]


def _doubled(value) -> int:
    """Exact doubled integer of an integer or half-integer quantity."""
    twice = Fraction(value) * 2
    if twice.denominator != 1:
        raise DomainError(f"{value!r} is not an integer or half-integer")
    return int(twice)


def _triangle(two_a: int, two_b: int, two_c: int) -> bool:
    return (
        abs(two_a - two_b) <= two_c <= two_a + two_b
        and (two_a + two_b + two_c) % 2 == 0
    )


def lande_g(L, S, J) -> float:
    """Lande g-factor in LS coupling with g_S = 2.

    Raises :class:`DomainError` if ``(L, S, J)`` do not form a coupling
    triangle.  J = 0 returns 0.

    >>> lande_g(2, 0.5, 2.5)
    1.2
    """
    two_L, two_S, two_J = _doubled(L), _doubled(S), _doubled(J)
    if two_L % 2 or min(two_L, two_S, two_J) < 0 or not _triangle(two_L, two_S, two_J):
        raise DomainError(f"invalid coupling L={L}, S={S}, J={J}")
    if two_J == 0:
        return 0.0
    # 4 j(j+1) = two_j (two_j + 2)
    jj = Fraction(two_J * (two_J + 2), 4)
    ss = Fraction(two_S * (two_S + 2), 4)
    ll = Fraction(two_L * (two_L + 2), 4)
    return float(Fraction(3, 2) + (ss - ll) / (2 * jj))


@lru_cache(maxsize=None)
def _cg_doubled(tj1: int, tm1: int, tj2: int, tm2: int, tJ: int, tM: int) -> float:
    if tM != tm1 + tm2:
        return 0.0
    if not _triangle(tj1, tj2, tJ):
        return 0.0
    for tj, tm in ((tj1, tm1), (tj2, tm2), (tJ, tM)):
        if abs(tm) > tj or (tj - tm) % 2:
            return 0.0

    f = math.factorial

    def h(x):  # doubled -> integer argument of a factorial
        return x // 2

    pref = Fraction(
        (tJ + 1)
        * f(h(tJ + tj1 - tj2))
        * f(h(tJ - tj1 + tj2))
        * f(h(tj1 + tj2 - tJ)),
        f(h(tj1 + tj2 + tJ) + 1),
    )
    pref *= (
        f(h(tJ + tM)) * f(h(tJ - tM))
        * f(h(tj1 - tm1)) * f(h(tj1 + tm1))
        * f(h(tj2 - tm2)) * f(h(tj2 + tm2))
    )
    total = Fraction(0)
    for k in range(0, h(tj1 + tj2 - tJ) + 1):
        args = (
            k,
            h(tj1 + tj2 - tJ) - k,
            h(tj1 - tm1) - k,
            h(tj2 + tm2) - k,
            h(tJ - tj2 + tm1) + k,
            h(tJ - tj1 - tm2) + k,
        )
        if min(args) < 0:
            continue
        denom = 1
        for a in args:
            denom *= f(a)
        total += Fraction((-1) ** k, denom)
    if total == 0:
        return 0.0
    return math.copysign(math.sqrt(pref * total * total), total)


def cg_coefficient(j1, m1, j2, m2, J, M) -> float:
    """Clebsch-Gordan coefficient <j1 m1; j2 m2 | J M> (Condon-Shortley phase).

    Evaluated from the Racah sum in exact rational arithmetic.  Arguments
    violating a selection rule give 0.

    >>> cg_coefficient(0.5, 0.5, 1, 1, 1.5, 1.5)
    1.0
    >>> round(cg_coefficient(0.5, -0.5, 1, 1, 1.5, 0.5) ** 2, 12)
    0.333333333333
    """
    return _cg_doubled(*(_doubled(x) for x in (j1, m1, j2, m2, J, M)))


@dataclass(frozen=True)
class Term:
    """A fine-structure term ``label`` with orbital L, spin S, total J.

    ``energy_offset`` is in rad/s relative to S1/2 and only informational:
    the rotating frame removes optical frequencies.
    """

    label: str
    L: int
    two_S: int
    two_J: int
    energy_offset: float = 0.0
    g_override: float | None = None

    def __post_init__(self):
        if self.L < 0 or not _triangle(2 * self.L, self.two_S, self.two_J):
            raise DomainError(f"term {self.label}: invalid (L, S, J)")

    @property
    def S(self) -> float:
        return self.two_S / 2

    @property
    def J(self) -> float:
        return self.two_J / 2

    @property
    def g_J(self) -> float:
        if self.g_override is not None:
            return self.g_override
        return lande_g(self.L, Fraction(self.two_S, 2), Fraction(self.two_J, 2))

    @property
    def multiplicity(self) -> int:
        return self.two_J + 1

    def two_m_values(self) -> tuple[int, ...]:
        return tuple(range(-self.two_J, self.two_J + 1, 2))


@dataclass(frozen=True)
class Sublevel:
    term: Term
    two_m: int

    def __post_init__(self):
        if abs(self.two_m) > self.term.two_J or (self.term.two_J - self.two_m) % 2:
            raise DomainError(f"m = {self.two_m}/2 not allowed in {self.term.label}")

    @property
    def m(self) -> float:
        return self.two_m / 2

    def __str__(self):
        return f"{self.term.label},m={self.two_m}/2"


class Basis:
    """Ordered Zeeman sublevels: terms in the given order, m ascending within each."""

    def __init__(self, terms):
        self.terms = tuple(terms)
        labels = [t.label for t in self.terms]
        if len(set(labels)) != len(labels):
            raise DomainError("duplicate term labels in basis")
        self.sublevels = tuple(
            Sublevel(t, tm) for t in self.terms for tm in t.two_m_values()
        )
        self._index = {(s.term.label, s.two_m): i for i, s in enumerate(self.sublevels)}
        self._slices = {}
        start = 0
        for t in self.terms:
            self._slices[t.label] = slice(start, start + t.multiplicity)
            start += t.multiplicity

    def __len__(self):
        return len(self.sublevels)

    def __iter__(self):
        return iter(self.sublevels)

    def __repr__(self):
        return f"Basis({', '.join(t.label for t in self.terms)}; d={len(self)})"

    @property
    def dim(self) -> int:
        return len(self.sublevels)

    def term(self, label: str) -> Term:
        for t in self.terms:
            if t.label == label:
                return t
        raise DomainError(f"term {label!r} not in basis")

    def has_term(self, label: str) -> bool:
        return label in self._slices

    def index(self, label: str, two_m: int) -> int:
        try:
            return self._index[(label, two_m)]
        except KeyError:
            raise DomainError(f"no sublevel {label} m={two_m}/2 in basis") from None

    def index_of(self, sublevel: Sublevel) -> int:
        return self.index(sublevel.term.label, sublevel.two_m)

    def slice(self, label: str) -> slice:
        try:
            return self._slices[label]
        except KeyError:
            raise DomainError(f"term {label!r} not in basis") from None

    def projector(self, label: str) -> np.ndarray:
        P = np.zeros((self.dim, self.dim))
        s = self.slice(label)
        P[s, s] = np.eye(s.stop - s.start)
        return P


@dataclass(frozen=True)
class TransitionChannel:
    """Electric dipole channel ``lower`` <-> ``upper`` with partial decay rate (1/s)."""

    lower: Term
    upper: Term
    gamma_partial: float
    wavelength: float = float("nan")

    def __post_init__(self):
        if not self.gamma_partial >= 0:
            raise DomainError("gamma_partial must be non-negative")
        if not _triangle(self.lower.two_J, 2, self.upper.two_J):
            raise DomainError(
                f"{self.lower.label}->{self.upper.label} is not dipole-allowed in J"
            )

    @property
    def name(self) -> str:
        return f"{self.lower.label}-{self.upper.label}"


@dataclass(frozen=True)
class FieldVector:
    """Magnetic field in gauss."""

    Bx: float = 0.0
    By: float = 0.0
    Bz: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.Bx, self.By, self.Bz)):
            raise DomainError("field components must be finite")

    @classmethod
    def along(cls, axis, magnitude: float) -> "FieldVector":
        a = np.asarray(axis, dtype=float)
        a = a / np.linalg.norm(a)
        return cls(*(magnitude * a))

    @property
    def magnitude(self) -> float:
        return math.sqrt(self.Bx**2 + self.By**2 + self.Bz**2)

    def as_array(self) -> np.ndarray:
        return np.array([self.Bx, self.By, self.Bz], dtype=float)

    def __add__(self, other):
        return FieldVector(*(self.as_array() + other.as_array()))

    def scaled(self, factor: float) -> "FieldVector":
        return FieldVector(*(factor * self.as_array()))


def polarization_from_cartesian(vec) -> np.ndarray:
    """Spherical components ``(eps_-1, eps_0, eps_+1)`` of a Cartesian polarization."""
    ex, ey, ez = np.asarray(vec, dtype=complex)
    eps = np.array([(ex + 1j * ey) / math.sqrt(2), ez, -(ex - 1j * ey) / math.sqrt(2)])
    norm = np.linalg.norm(eps)
    if norm == 0:
        raise DomainError("zero polarization vector")
    return eps / norm


LINEAR_X = polarization_from_cartesian((1.0, 0.0, 0.0))


def _check_pol(pol) -> np.ndarray:
    eps = np.asarray(pol, dtype=complex)
    if eps.shape != (3,):
        raise DomainError("polarization needs three spherical components")
    if not math.isclose(float(np.vdot(eps, eps).real), 1.0, rel_tol=1e-9):
        raise DomainError("polarization must be normalized")
    return eps


@lru_cache(maxsize=None)
def _jmats(two_j: int):
    two_m = np.arange(-two_j, two_j + 1, 2)
    m = two_m / 2
    j = two_j / 2
    jz = np.diag(m)
    jp = np.zeros((two_j + 1, two_j + 1))
    for k in range(two_j):
        # <m+1| J+ |m>
        jp[k + 1, k] = math.sqrt(j * (j + 1) - m[k] * (m[k] + 1))
    jx = (jp + jp.T) / 2
    jy = (jp - jp.T) / 2j
    for a in (jz, jp, jx, jy):
        a.setflags(write=False)
    return jx, jy, jz


def angular_momentum_matrices(J) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(Jx, Jy, Jz) in units of hbar, ordered by ascending m."""
    return _jmats(_doubled(J))


def zeeman_hamiltonian(basis: Basis, B: FieldVector, constants: PhysicalConstants | None = None) -> np.ndarray:
    """Zeeman Hamiltonian in rad/s, block diagonal over terms."""
    constants = constants or PhysicalConstants()
    scale = constants.mu_B_over_hbar
    H = np.zeros((basis.dim, basis.dim), dtype=complex)
    for term in basis.terms:
        jx, jy, jz = _jmats(term.two_J)
        s = basis.slice(term.label)
        H[s, s] = scale * term.g_J * (B.Bx * jx + B.By * jy + B.Bz * jz)
    return H


def _channel_slices(basis: Basis, channel: TransitionChannel):
    for t in (channel.lower, channel.upper):
        if not basis.has_term(t.label):
            raise DomainError(f"channel term {t.label} absent from basis")
    return basis.slice(channel.lower.label), basis.slice(channel.upper.label)


def coupling_operator(basis: Basis, channel: TransitionChannel, pol=LINEAR_X) -> np.ndarray:
    """Dimensionless raising operator V mapping ``lower`` onto ``upper``.

    ``V = sum_q eps_q sum_m <J_l m; 1 q | J_u m+q> |u, m+q><l, m|``.
    """
    eps = _check_pol(pol)
    sl, su = _channel_slices(basis, channel)
    tjl, tju = channel.lower.two_J, channel.upper.two_J
    V = np.zeros((basis.dim, basis.dim), dtype=complex)
    for i, tml in enumerate(channel.lower.two_m_values()):
        for qi, tq in enumerate((-2, 0, 2)):
            if eps[qi] == 0:
                continue
            tmu = tml + tq
            if abs(tmu) > tju:
                continue
            c = _cg_doubled(tjl, tml, 2, tq, tju, tmu)
            V[su.start + (tmu + tju) // 2, sl.start + i] += eps[qi] * c
    return V


def jump_operators(basis: Basis, channel: TransitionChannel) -> list[np.ndarray]:
    """Collapse operators (q = -1, 0, +1) for spontaneous decay upper -> lower."""
    sl, su = _channel_slices(basis, channel)
    tjl, tju = channel.lower.two_J, channel.upper.two_J
    amp = math.sqrt(channel.gamma_partial)
    ops = []
    for tq in (-2, 0, 2):
        A = np.zeros((basis.dim, basis.dim))
        if amp > 0:
            for i, tml in enumerate(channel.lower.two_m_values()):
                tmu = tml + tq
                if abs(tmu) > tju:
                    continue
                A[sl.start + i, su.start + (tmu + tju) // 2] = amp * _cg_doubled(
                    tjl, tml, 2, tq, tju, tmu
                )
        ops.append(A)
    return ops


# --- the 138Ba+ model -------------------------------------------------------

_BA_TERMS = (
    ("S1/2", 0, 1, 1),
    ("P1/2", 1, 1, 1),
    ("D3/2", 2, 1, 3),
    ("P3/2", 1, 1, 3),
    ("D5/2", 2, 1, 5),
)

# laser name -> (lower, upper)
LASER_CHANNELS = {
    "493": ("S1/2", "P1/2"),
    "650": ("D3/2", "P1/2"),
    "455": ("S1/2", "P3/2"),
    "614": ("D5/2", "P3/2"),
}

_CM_TO_RAD = 2 * math.pi * 2.99792458e10


def ba138_terms(data: AtomicData | None = None) -> tuple[Term, ...]:
    data = data or load_atomic_data()
    return tuple(
        Term(
            label,
            L,
            tS,
            tJ,
            energy_offset=data.energy_cm.get(label, 0.0) * _CM_TO_RAD,
            g_override=data.g_override.get(label),
        )
        for label, L, tS, tJ in _BA_TERMS
    )


def ba138_basis(data: AtomicData | None = None) -> Basis:
    """The 18-sublevel basis S1/2, P1/2, D3/2, P3/2, D5/2."""
    return Basis(ba138_terms(data))


def ba138_channels(basis: Basis, data: AtomicData | None = None) -> dict:
    """All dipole decay channels keyed ``(lower, upper)``, including P3/2 -> D3/2."""
    data = data or load_atomic_data()
    channels = {}
    for (upper, lower), _ in data.branching.items():
        channels[(lower, upper)] = TransitionChannel(
            basis.term(lower),
            basis.term(upper),
            data.partial_rate(upper, lower),
            data.wavelength_nm.get((lower, upper), float("nan")),
        )
    return channels
