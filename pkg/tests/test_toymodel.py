import math

import numpy as np
import pytest
from helpers import random_hermitian
from hypothesis import assume, given
from hypothesis import strategies as st

from mcpt.exceptions import DomainError
from mcpt.liouville import unvec, vec
from mcpt.solve import steady_state
from mcpt.toymodel import (
    E,
    ToyParams,
    build_toy_liouvillian,
    rate_equation_fluorescence,
    toy_couplings,
    toy_dark_states,
    toy_fluorescence,
    toy_fluorescence_vs_delta,
    toy_hamiltonian,
    toy_initial_state,
)

ANTISYM = np.array([0, 1, -1, 0]) / math.sqrt(2)
BASE = ToyParams(-1.0, -3.0, 0.0, 0.5, 0.5)


def fidelity(vecs, target):
    return float(np.linalg.norm(vecs.conj().T @ target) ** 2)


def test_shape_and_trace_annihilation(rng):
    L = build_toy_liouvillian(BASE.with_delta(0.4))
    assert L.shape == (16, 16)
    assert np.abs(vec(np.eye(4)) @ L).max() < 1e-12
    for _ in range(10):
        rho = random_hermitian(rng, 4)
        assert abs(np.trace(unvec(L @ vec(rho)))) < 1e-12


def test_single_dark_state_off_raman_resonance():
    dark = toy_dark_states(BASE)
    assert len(dark) == 1
    assert fidelity(dark.vectors, ANTISYM) > 1 - 1e-10
    lam = np.linalg.eigvals(build_toy_liouvillian(BASE))
    assert np.sum(np.abs(lam) < 1e-10) == 1
    rho = steady_state(build_toy_liouvillian(BASE), toy_initial_state())
    np.testing.assert_allclose(rho, np.outer(ANTISYM, ANTISYM), atol=1e-12)


def test_tripod_has_two_dark_states():
    p = ToyParams(-2.0, -2.0, 0.0, 0.5, 0.7)
    dark = toy_dark_states(p)
    assert len(dark) == 2
    assert fidelity(dark.vectors, ANTISYM) > 1 - 1e-10


def test_splitting_removes_dark_state():
    assert len(toy_dark_states(BASE.with_delta(0.2))) == 0


@given(
    st.floats(-5, 5),
    st.floats(-5, 5),
    st.floats(0.05, 3),
    st.floats(0.05, 3),
)
def test_dark_state_independent_of_laser_parameters(dl, dp, wl, wp):
    assume(abs(dl - dp) > 1e-3)
    p = ToyParams(dl, dp, 0.0, wl, wp)
    dark = toy_dark_states(p)
    assert len(dark) == 1
    assert fidelity(dark.vectors, ANTISYM) > 1 - 1e-10
    v = dark.vectors[:, 0]
    H = toy_hamiltonian(p)
    assert np.linalg.norm(H @ v - dark.energies[0] * v) < 1e-12 * max(1, np.linalg.norm(H, 2))
    for V in toy_couplings(p):
        assert np.linalg.norm(V @ v) < 1e-12


@pytest.fixture(scope="module")
def curve():
    grid = np.linspace(-2.0, 2.0, 41)
    return toy_fluorescence_vs_delta(BASE, grid)


def test_fluorescence_minimum_at_zero(curve):
    i0 = int(np.argmin(curve.rate))
    assert curve.delta[i0] == 0.0
    assert curve.rate[i0] < 1e-8 * curve.rate.max()


def test_fluorescence_even_in_delta(curve):
    np.testing.assert_allclose(curve.rate, curve.rate[::-1], rtol=1e-8, atol=1e-18)


def test_wings_approach_rate_equations():
    errs = []
    for delta in (50.0, 200.0):
        p = BASE.with_delta(delta)
        exact, incoherent = toy_fluorescence(p), rate_equation_fluorescence(p)
        errs.append(abs(exact - incoherent) / incoherent)
    assert errs[0] < 1e-3
    assert errs[1] < errs[0]


def test_dark_support_is_kept():
    L = build_toy_liouvillian(BASE)
    dark = np.outer(ANTISYM, ANTISYM)
    mixed = 0.5 * dark + 0.5 * np.diag([1, 0, 0, 0])
    for rho0 in (dark, mixed):
        rho = steady_state(L, rho0)
        assert np.real(ANTISYM @ rho @ ANTISYM) >= np.real(ANTISYM @ rho0 @ ANTISYM) - 1e-12


def test_initial_state_and_rate():
    rho0 = toy_initial_state()
    assert np.trace(rho0).real == 1.0 and rho0[E, E] == 0
    assert toy_fluorescence(BASE.with_delta(1.0)) > 0


def test_csv_and_grid_validation(curve):
    lines = curve.to_csv().splitlines()
    assert lines[0] == "delta_rad_per_s,rate_photons_per_s"
    assert len(lines) == 42
    with pytest.raises(DomainError):
        toy_fluorescence_vs_delta(BASE, [0.1, 0.2])


@pytest.mark.parametrize(
    "kwargs",
    [{"gamma": 0.0}, {"branching": (0.5, 0.5, 0.5)}, {"branching": (1.2, -0.1, -0.1)}],
)
def test_params_validation(kwargs):
    with pytest.raises(DomainError):
        ToyParams(-1.0, -3.0, **kwargs)
