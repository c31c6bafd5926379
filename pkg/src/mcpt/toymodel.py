"""Four-level model with one ground level, a split pair |+>, |-> and one excited level.

Level order is ``[g, +, -, e]``.  One laser couples g to e at detuning
``delta_L``; a second couples both |+> and |-> to e with equal strength at
detuning ``delta_P``.  The pair is split by ``delta`` symmetrically about its
unperturbed energy.  At ``delta = 0`` the antisymmetric combination of |+>
and |-> is dark for any laser parameters.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError
from .liouville import assemble_liouvillian, dissipator
from .solve import DarkStateSet, dark_subspace, steady_state

__all__ = [
    "ToyParams",
    "ToyCurve",
    "LEVELS",
    "toy_hamiltonian",
    "toy_couplings",
    "toy_jumps",
    "build_toy_liouvillian",
    "toy_initial_state",
    "toy_fluorescence",
    "toy_fluorescence_vs_delta",
    "toy_dark_states",
    "rate_equation_fluorescence",
]

LEVELS = ("g", "+", "-", "e")
G, PLUS, MINUS, E = range(4)


@dataclass(frozen=True)
class ToyParams:
    """Parameters of the four-level model, all rates in rad/s.

    ``branching`` gives the fractions of the decay of |e> into
    (|g>, |+>, |->).
    """

    delta_L: float
    delta_P: float
    delta: float = 0.0
    omega_L: float = 1.0
    omega_P: float = 1.0
    gamma: float = 1.0
    branching: tuple = (1 / 3, 1 / 3, 1 / 3)

    def __post_init__(self):
        if not self.gamma > 0:
            raise DomainError("gamma must be positive")
        b = np.asarray(self.branching, dtype=float)
        if b.shape != (3,) or np.any(b < 0) or not math.isclose(b.sum(), 1.0, abs_tol=1e-12):
            raise DomainError("branching needs three non-negative fractions summing to 1")

    def with_delta(self, delta: float) -> "ToyParams":
        return ToyParams(self.delta_L, self.delta_P, delta, self.omega_L, self.omega_P, self.gamma, self.branching)


def _ket_bra(i, j):
    M = np.zeros((4, 4), dtype=complex)
    M[i, j] = 1.0
    return M


def toy_couplings(p: ToyParams) -> list[np.ndarray]:
    """Hermitian drive terms of the two lasers."""
    VL = 0.5 * p.omega_L * (_ket_bra(E, G) + _ket_bra(G, E))
    VP = 0.5 * p.omega_P * (_ket_bra(E, PLUS) + _ket_bra(E, MINUS) + _ket_bra(PLUS, E) + _ket_bra(MINUS, E))
    return [VL, VP]


def toy_hamiltonian(p: ToyParams) -> np.ndarray:
    """Rotating-frame Hamiltonian; |g> sits at zero energy."""
    energies = np.array(
        [
            0.0,
            -p.delta_L + p.delta_P + 0.5 * p.delta,
            -p.delta_L + p.delta_P - 0.5 * p.delta,
            -p.delta_L,
        ]
    )
    H = np.diag(energies).astype(complex)
    for V in toy_couplings(p):
        H += V
    return H


def toy_jumps(p: ToyParams) -> list[np.ndarray]:
    return [math.sqrt(b * p.gamma) * _ket_bra(k, E) for k, b in zip((G, PLUS, MINUS), p.branching)]


def build_toy_liouvillian(p: ToyParams) -> np.ndarray:
    """16 x 16 Lindbladian (column stacking)."""
    return assemble_liouvillian(toy_hamiltonian(p), [dissipator(toy_jumps(p), 4)])


def toy_initial_state() -> np.ndarray:
    """Equal mixture of the three lower levels."""
    return np.diag([1 / 3, 1 / 3, 1 / 3, 0.0]).astype(complex)


def toy_fluorescence(p: ToyParams, rho0: np.ndarray | None = None) -> float:
    """Photon scattering rate gamma * rho_ee of the asymptotic state."""
    rho = steady_state(build_toy_liouvillian(p), toy_initial_state() if rho0 is None else rho0)
    return p.gamma * float(rho[E, E].real)


@dataclass
class ToyCurve:
    delta: np.ndarray
    rate: np.ndarray

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["delta_rad_per_s", "rate_photons_per_s"])
        for d, r in zip(self.delta, self.rate):
            w.writerow([repr(float(d)), repr(float(r))])
        return out.getvalue()


def toy_fluorescence_vs_delta(p: ToyParams, delta_grid) -> ToyCurve:
    """Scattering rate against the splitting of the |+>, |-> pair."""
    grid = np.asarray(delta_grid, dtype=float)
    if grid.size and not (grid.min() <= 0.0 <= grid.max()):
        raise DomainError("delta grid must span zero")
    rates = np.array([toy_fluorescence(p.with_delta(d)) for d in grid])
    return ToyCurve(grid, rates)


def toy_dark_states(p: ToyParams, rtol: float = 1e-10) -> DarkStateSet:
    """Eigenvectors of H that neither laser couples to |e>."""
    drive = sum(toy_couplings(p))
    scale = max(p.omega_L, p.omega_P, p.gamma)
    vecs, energies = dark_subspace(toy_hamiltonian(p), [drive], rtol, scale=scale)
    labels = []
    for j in range(vecs.shape[1]):
        w = np.abs(vecs[:, j]) ** 2
        labels.append("".join(LEVELS[i] for i in range(4) if w[i] > 1e-12))
    return DarkStateSet(vecs, energies, labels)


def rate_equation_fluorescence(p: ToyParams) -> float:
    """Scattering rate from population rate equations (coherences dropped).

    Each lower level i is pumped to |e> at ``W_i = Omega_i^2 gamma /
    (4 Delta_i^2 + gamma^2)``, with ``Delta_+- = delta_P +- delta/2``.  Valid
    when every lower-level pair is split by much more than the pumping rates.
    """
    W = np.array(
        [
            p.omega_L**2 * p.gamma / (4 * p.delta_L**2 + p.gamma**2),
            p.omega_P**2 * p.gamma / (4 * (p.delta_P + 0.5 * p.delta) ** 2 + p.gamma**2),
            p.omega_P**2 * p.gamma / (4 * (p.delta_P - 0.5 * p.delta) ** 2 + p.gamma**2),
        ]
    )
    b = np.asarray(p.branching)
    # populations (g, +, -, e); generator columns sum to zero
    M = np.zeros((4, 4))
    for i in range(3):
        M[i, i] -= W[i]
        M[E, i] += W[i]
        M[i, E] += W[i] + b[i] * p.gamma
    M[E, E] -= W.sum() + p.gamma
    A = np.vstack([M, np.ones(4)])
    rhs = np.zeros(5)
    rhs[-1] = 1.0
    pops, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    return p.gamma * float(pops[E])
