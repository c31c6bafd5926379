"""Small builders shared by the test modules."""

import math

import numpy as np

from mcpt.atomic import Basis, FieldVector, Term, TransitionChannel, polarization_from_cartesian
from mcpt.liouville import LaserDrive, assemble_liouvillian, build_hamiltonian, dissipator
from mcpt.atomic import jump_operators


def random_hermitian(rng, d):
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (A + A.conj().T) / 2


def random_density(rng, d):
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = A @ A.conj().T
    return rho / np.trace(rho).real


def zfield(B):
    return FieldVector(0.0, 0.0, B)


PI = polarization_from_cartesian((0, 0, 1))


def two_level(gamma=1.0, s=1.0, detuning=0.0, linewidth=0.0):
    """J=0 <-> J=1 pair driven with pi light: an exact two-level system on
    (g, e m=0) with two undriven upper spectators.

    Returns (basis, L, index of g, index of e0).
    """
    from mcpt.liouville import dephasing_dissipator

    g = Term("g", 0, 0, 0)
    e = Term("e", 1, 0, 2)
    basis = Basis([g, e])
    ch = TransitionChannel(g, e, gamma)
    laser = LaserDrive(ch, detuning, s, gamma, PI, linewidth)
    H = build_hamiltonian(basis, [laser], FieldVector())
    D = [dissipator(jump_operators(basis, ch))]
    if linewidth:
        D.append(dephasing_dissipator(linewidth, ch, basis))
    return basis, assemble_liouvillian(H, D), basis.index("g", 0), basis.index("e", 0)


def bare_two_level(gamma, omega, detuning=0.0, dephasing=0.0):
    """Textbook 2x2 model [g, e] in the same conventions."""
    H = np.array([[0, omega / 2], [omega / 2, -detuning]], dtype=complex)
    A = np.array([[0, math.sqrt(gamma)], [0, 0]], dtype=complex)
    ops = [A]
    if dephasing:
        ops.append(math.sqrt(2 * dephasing) * np.diag([0, 1]).astype(complex))
    return assemble_liouvillian(H, [dissipator(ops)])


# criterion number -> list of (part, passed, detail); filled by test_acceptance
ACCEPTANCE = {}


def record(criterion, part, passed, detail):
    ACCEPTANCE.setdefault(criterion, []).append((part, bool(passed), detail))
    print(f"criterion {criterion} [{part}] {'PASS' if passed else 'FAIL'}: {detail}")
    return bool(passed)
