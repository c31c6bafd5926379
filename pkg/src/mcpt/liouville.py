"""Rotating-frame Hamiltonian and Lindblad superoperators.

Density matrices are vectorized by column stacking, ``vec(rho) =
rho.reshape(-1, order="F")``, so that ``vec(A rho B) = kron(B.T, A) @
vec(rho)``.  Every superoperator in the package uses this convention.
"""

from __future__ import annotations

import io
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field

import numpy as np

from .atomic import (
    LINEAR_X,
    Basis,
    FieldVector,
    TransitionChannel,
    _check_pol,
    coupling_operator,
    zeeman_hamiltonian,
)
from .constants import PhysicalConstants
from .exceptions import DomainError, UnsupportedConfigurationError

__all__ = [
    "LaserDrive",
    "RotatingFrameShifts",
    "vec",
    "unvec",
    "rabi_from_saturation",
    "rotating_frame_shifts",
    "drive_hamiltonian",
    "build_hamiltonian",
    "commutator_superoperator",
    "dissipator",
    "dephasing_dissipator",
    "assemble_liouvillian",
    "write_matrix",
    "read_matrix",
]


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray, d: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if d is None:
        d = math.isqrt(v.size)
    return v.reshape(d, d, order="F")


def rabi_from_saturation(s: float, gamma_total: float) -> float:
    """Rabi frequency for saturation ``s`` under the convention s = 2 Omega^2 / Gamma^2.

    >>> rabi_from_saturation(2.0, 1.5e8)
    150000000.0
    """
    if s < 0:
        raise DomainError("saturation parameter must be non-negative")
    if not gamma_total > 0:
        raise DomainError("gamma_total must be positive")
    return gamma_total * math.sqrt(s / 2.0)


@dataclass(frozen=True)
class LaserDrive:
    """One laser on one dipole channel.

    ``detuning`` and ``linewidth`` are in rad/s.  ``saturation_rate`` is the
    decay rate (1/s) the saturation parameter refers to; the Rabi frequency
    is ``saturation_rate * sqrt(saturation / 2)``.
    """

    channel: TransitionChannel
    detuning: float
    saturation: float
    saturation_rate: float
    polarization: np.ndarray = field(default_factory=lambda: LINEAR_X.copy())
    linewidth: float = 0.0
    enabled: bool = True
    name: str = ""

    def __post_init__(self):
        if self.saturation < 0:
            raise DomainError(f"laser {self.name}: saturation must be >= 0")
        if self.linewidth < 0:
            raise DomainError(f"laser {self.name}: linewidth must be >= 0")
        object.__setattr__(self, "polarization", _check_pol(self.polarization))

    @property
    def rabi(self) -> float:
        return rabi_from_saturation(self.saturation, self.saturation_rate)


@dataclass(frozen=True)
class RotatingFrameShifts:
    """Diagonal energy (rad/s) of every term in the rotating frame."""

    shifts: dict

    def __getitem__(self, label):
        return self.shifts[label]

    def diagonal(self, basis: Basis) -> np.ndarray:
        return np.concatenate(
            [np.full(t.multiplicity, self.shifts.get(t.label, 0.0)) for t in basis.terms]
        )


def rotating_frame_shifts(lasers, basis: Basis, atol: float = 1e-6) -> RotatingFrameShifts:
    """Term energies making every enabled drive time independent.

    Each driven channel ends up with ``shift(upper) - shift(lower) =
    -detuning``.  Every connected component of the laser graph is anchored at
    its first term in basis order (so S1/2 sits at 0).  A loop whose detunings
    do not close raises :class:`UnsupportedConfigurationError`.
    """
    adj = defaultdict(list)
    for laser in lasers:
        if not laser.enabled:
            continue
        lo, up = laser.channel.lower.label, laser.channel.upper.label
        if not (basis.has_term(lo) and basis.has_term(up)):
            raise DomainError(f"laser {laser.name} addresses a term absent from the basis")
        adj[lo].append((up, -laser.detuning, laser.name))
        adj[up].append((lo, laser.detuning, laser.name))

    shifts = {}
    for term in basis.terms:
        root = term.label
        if root in shifts:
            continue
        shifts[root] = 0.0
        queue = deque([root])
        used = set()
        while queue:
            node = queue.popleft()
            for nxt, step, name in adj[node]:
                edge = (name, frozenset((node, nxt)))
                if edge in used:
                    continue
                used.add(edge)
                value = shifts[node] + step
                if nxt in shifts:
                    if not math.isclose(shifts[nxt], value, rel_tol=0, abs_tol=atol):
                        raise UnsupportedConfigurationError(
                            f"laser loop through {nxt} has inconsistent detunings "
                            f"(mismatch {shifts[nxt] - value:.6g} rad/s)"
                        )
                    continue
                shifts[nxt] = value
                queue.append(nxt)
    return RotatingFrameShifts(shifts)


def drive_hamiltonian(basis: Basis, lasers) -> np.ndarray:
    """Sum of (Omega/2)(V + V^dagger) over enabled lasers."""
    H = np.zeros((basis.dim, basis.dim), dtype=complex)
    for laser in lasers:
        if not laser.enabled or laser.saturation == 0:
            continue
        V = coupling_operator(basis, laser.channel, laser.polarization)
        H += 0.5 * laser.rabi * (V + V.conj().T)
    return H


def build_hamiltonian(basis: Basis, lasers, B: FieldVector, constants: PhysicalConstants | None = None) -> np.ndarray:
    """Full rotating-frame Hamiltonian in rad/s."""
    frame = rotating_frame_shifts(lasers, basis)
    H = zeeman_hamiltonian(basis, B, constants)
    H += np.diag(frame.diagonal(basis))
    H += drive_hamiltonian(basis, lasers)
    return H


def commutator_superoperator(H: np.ndarray) -> np.ndarray:
    """Superoperator of rho -> -i [H, rho]."""
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise DomainError("Hamiltonian must be square")
    eye = np.eye(H.shape[0])
    return -1j * (np.kron(eye, H) - np.kron(H.T, eye))


def dissipator(jumps, dim: int | None = None) -> np.ndarray:
    """Lindblad dissipator sum_k A rho A^+ - {A^+ A, rho}/2 as a superoperator."""
    jumps = [np.asarray(A) for A in jumps]
    if not jumps:
        if dim is None:
            raise DomainError("empty jump list needs an explicit dimension")
        return np.zeros((dim * dim, dim * dim), dtype=complex)
    d = jumps[0].shape[0]
    if dim is not None and dim != d:
        raise DomainError("jump operator dimension mismatch")
    for A in jumps:
        if A.shape != (d, d):
            raise DomainError("jump operators must be square and of equal dimension")
    eye = np.eye(d)
    D = np.zeros((d * d, d * d), dtype=complex)
    for A in jumps:
        if not np.any(A):
            continue
        AdA = A.conj().T @ A
        D += np.kron(A.conj(), A) - 0.5 * np.kron(eye, AdA) - 0.5 * np.kron(AdA.T, eye)
    return D


def dephasing_dissipator(linewidth: float, channel: TransitionChannel, basis: Basis) -> np.ndarray:
    """Pure dephasing of the channel's upper term at the laser linewidth.

    Jump operator ``sqrt(2 linewidth) * P_upper``; coherences between the
    upper term and everything else decay at ``linewidth``.
    """
    if linewidth < 0:
        raise DomainError("linewidth must be non-negative")
    if linewidth == 0:
        return np.zeros((basis.dim**2, basis.dim**2), dtype=complex)
    P = basis.projector(channel.upper.label)
    return dissipator([math.sqrt(2 * linewidth) * P])


def assemble_liouvillian(H: np.ndarray, dissipators=()) -> np.ndarray:
    """L = -i(I (x) H - H^T (x) I) + sum of dissipators (column stacking)."""
    L = commutator_superoperator(H)
    for D in dissipators:
        if D.shape != L.shape:
            raise DomainError("dissipator dimension does not match the Hamiltonian")
        L = L + D
    return L


def write_matrix(M: np.ndarray, fh=None) -> str | None:
    """Text dump: header ``rows cols``, then one row per line as ``re im`` pairs.

    Returns the text when ``fh`` is None.
    """
    M = np.asarray(M, dtype=complex)
    out = io.StringIO() if fh is None else fh
    out.write(f"{M.shape[0]} {M.shape[1]}\n")
    for row in M:
        out.write(" ".join(f"{z.real:.17g} {z.imag:.17g}" for z in row))
        out.write("\n")
    if fh is None:
        return out.getvalue()
    return None


def read_matrix(source) -> np.ndarray:
    """Inverse of :func:`write_matrix`; accepts text or a file object."""
    text = source if isinstance(source, str) else source.read()
    lines = text.strip().splitlines()
    rows, cols = (int(x) for x in lines[0].split())
    data = np.array([[float(x) for x in ln.split()] for ln in lines[1 : rows + 1]])
    if data.shape != (rows, 2 * cols):
        raise DomainError("matrix text does not match its header")
    return data[:, 0::2] + 1j * data[:, 1::2]
