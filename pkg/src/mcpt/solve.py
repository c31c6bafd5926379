"""Steady states, Liouvillian spectra, perturbative field derivatives and dark states.

All superoperators follow the column-stacking convention of
:mod:`mcpt.liouville`.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .atomic import Basis, FieldVector, coupling_operator
from .exceptions import DegenerateExpansionError, DomainError, SolverError
from .liouville import build_hamiltonian, unvec, vec

__all__ = [
    "SpectralMode",
    "BrightMode",
    "DecayCurve",
    "Evolution",
    "DarkStateSet",
    "steady_state",
    "kernel_projector",
    "liouvillian_spectrum",
    "term_weights",
    "spectrum_csv",
    "slowest_bright_mode",
    "decay_rate_vs_field",
    "evolve",
    "perturbative_expansion",
    "derivative_fluorescence",
    "dark_subspace",
    "dark_state_analysis",
    "trace_distance",
    "check_density_matrix",
]

# rcond below which the single-border steady-state system is treated as singular
_RCOND_SINGULAR = 1e-15


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Half the trace norm of ``a - b``."""
    diff = np.asarray(a) - np.asarray(b)
    diff = (diff + diff.conj().T) / 2
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def check_density_matrix(rho: np.ndarray, herm_tol=1e-12, trace_tol=1e-10, pos_tol=1e-9):
    """Raise :class:`DomainError` unless ``rho`` is a valid density matrix."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DomainError("density matrix must be square")
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        raise DomainError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > trace_tol:
        raise DomainError("density matrix trace differs from 1")
    if np.min(np.linalg.eigvalsh((rho + rho.conj().T) / 2)) < -pos_tol:
        raise DomainError("density matrix has negative eigenvalues")
    return rho


def _hermitize(rho):
    rho = (rho + rho.conj().T) / 2
    return rho / np.trace(rho).real


def _kernel_bases(L, tol):
    """Orthonormal right and left null-space bases of ``L`` (singular values <= tol*||L||)."""
    U, s, Vh = sla.svd(L)
    cut = tol * s[0]
    k = int(np.sum(s <= cut))
    if k == 0:
        return None, None, s
    return Vh[-k:].conj().T, U[:, -k:], s


def kernel_projector(L: np.ndarray, tol: float = 1e-12):
    """Spectral projector onto ker L along range L, plus the bases it was built from.

    Returns ``(P, R, W)`` with ``P = R (W^H R)^{-1} W^H``.  Raises
    :class:`SolverError` if the kernel is empty or zero is not semisimple.
    """
    R, W, s = _kernel_bases(L, tol)
    if R is None:
        raise SolverError(
            "no zero eigenvalue within tolerance; model is ill-conditioned",
            {"smallest_singular_values": s[-3:].tolist(), "tol": tol},
        )
    G = W.conj().T @ R
    if np.linalg.cond(G) > 1e10:
        raise SolverError("zero eigenvalue is not semisimple", {"kernel_dim": R.shape[1]})
    P = R @ np.linalg.solve(G, W.conj().T)
    return P, R, W


def steady_state(L: np.ndarray, rho0: np.ndarray | None = None, tol: float = 1e-12) -> np.ndarray:
    """Asymptotic state ``lim e^{Lt} rho0``.

    For a one-dimensional kernel the trace-normalized null vector is returned
    (bordered LU solve with iterative refinement, independent of ``rho0``).
    For a degenerate kernel ``rho0`` is projected onto it with the
    biorthogonal spectral projector.  ``tol`` is the relative singular-value
    threshold that defines the kernel.
    """
    L = np.asarray(L)
    n = L.shape[0]
    d = math.isqrt(n)
    if d * d != n or L.shape != (n, n):
        raise DomainError("superoperator must be d^2 x d^2")
    w = vec(np.eye(d))

    A = np.zeros((n + 1, n + 1), dtype=complex)
    A[:n, :n] = L
    A[:n, n] = w
    A[n, :n] = w
    b = np.zeros(n + 1, dtype=complex)
    b[n] = 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu = sla.lu_factor(A, check_finite=False)
    anorm = np.linalg.norm(A, 1)
    rcond, _ = sla.lapack.zgecon(lu[0], anorm)
    if rcond > _RCOND_SINGULAR and np.all(np.isfinite(lu[0])):
        x = sla.lu_solve(lu, b)
        for _ in range(3):
            x = x + sla.lu_solve(lu, b - A @ x)
        return _hermitize(unvec(x[:n], d))

    if rho0 is None:
        raise SolverError("degenerate steady state requires an initial state", {"rcond": rcond})
    P, _, _ = kernel_projector(L, tol)
    rho = unvec(P @ vec(rho0), d)
    return _hermitize(rho)


@dataclass
class SpectralMode:
    """One Liouvillian eigenpair.

    ``right`` is normalized to unit Frobenius norm and ``left`` satisfies
    ``<left, right> = 1``; ``overlap = <left, rho0>`` is the coefficient of
    this mode in the initial state.
    """

    eigenvalue: complex
    right: np.ndarray
    left: np.ndarray
    overlap: complex = 0j
    cluster: int = 0
    defective: bool = False

    @property
    def decay_rate(self) -> float:
        return -self.eigenvalue.real

    @property
    def lifetime(self) -> float:
        return math.inf if self.decay_rate <= 0 else 1.0 / self.decay_rate


def liouvillian_spectrum(L: np.ndarray, rho0: np.ndarray | None = None, cluster_tol: float = 1e-10):
    """All eigenmodes of ``L`` sorted by ``|Re lambda|``, biorthogonal left/right pairs.

    Eigenvalues closer than ``cluster_tol * ||L||`` share a cluster id.  A
    cluster whose right eigenvectors are numerically dependent is flagged
    ``defective``.
    """
    L = np.asarray(L)
    n = L.shape[0]
    d = math.isqrt(n)
    try:
        lam, R = sla.eig(L)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError("eigensolver failed", {"error": str(exc), "dim": n}) from exc
    order = np.lexsort((lam.imag, np.abs(lam.real)))
    lam, R = lam[order], R[:, order]
    R = R / np.linalg.norm(R, axis=0)
    try:
        Wt = np.linalg.inv(R)
    except np.linalg.LinAlgError as exc:
        raise SolverError("eigenvector matrix is singular (defective spectrum)", {"dim": n}) from exc

    scale = np.linalg.norm(L, 2) if n <= 1024 else np.linalg.norm(L)
    clusters = np.full(n, -1)
    cid = 0
    for i in range(n):
        if clusters[i] >= 0:
            continue
        close = np.abs(lam - lam[i]) <= cluster_tol * scale
        clusters[close & (clusters < 0)] = cid
        cid += 1
    defective = np.zeros(n, dtype=bool)
    for c in range(cid):
        idx = np.flatnonzero(clusters == c)
        if len(idx) > 1:
            sv = np.linalg.svd(R[:, idx], compute_uv=False)
            if sv[-1] < 1e-8 * sv[0]:
                defective[idx] = True

    v0 = None if rho0 is None else vec(rho0)
    modes = []
    for i in range(n):
        right = unvec(R[:, i], d)
        left = unvec(Wt[i].conj(), d)
        ov = complex(Wt[i] @ v0) if v0 is not None else 0j
        modes.append(SpectralMode(complex(lam[i]), right, left, ov, int(clusters[i]), bool(defective[i])))
    return modes


def term_weights(matrix: np.ndarray, basis: Basis) -> dict:
    """Share of each term in the net diagonal population of ``matrix``.

    Decaying modes are traceless, so the net population of each term can be
    positive or negative; the weight is ``|net_T| / sum_T' |net_T'|``.
    """
    diag = np.real_if_close(np.diag(matrix))
    # fix the global phase so the dominant diagonal entry is real
    k = int(np.argmax(np.abs(diag)))
    diag = np.real(diag * np.exp(-1j * np.angle(diag[k])))
    net = {t.label: float(np.sum(diag[basis.slice(t.label)])) for t in basis.terms}
    total = sum(abs(v) for v in net.values())
    if total == 0:
        return {k: 0.0 for k in net}
    return {k: abs(v) / total for k, v in net.items()}


SPECTRUM_COLUMNS = ("re_lambda", "im_lambda", "overlap_abs", "d32_weight", "d52_weight", "p12_weight", "p32_weight", "s_weight")


def spectrum_csv(modes, basis: Basis) -> str:
    """CSV table of a spectrum: eigenvalue, overlap and term weights per mode."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(SPECTRUM_COLUMNS)
    for mode in modes:
        tw = term_weights(mode.right, basis)
        w.writerow(
            [repr(mode.eigenvalue.real), repr(mode.eigenvalue.imag), repr(abs(mode.overlap))]
            + [repr(tw.get(lbl, 0.0)) for lbl in ("D3/2", "D5/2", "P1/2", "P3/2", "S1/2")]
        )
    return out.getvalue()


@dataclass
class BrightMode:
    mode: SpectralMode
    lifetime: float
    weights: dict


def slowest_bright_mode(modes, dark_tol: float, basis: Basis | None = None) -> BrightMode:
    """Mode with the smallest ``|Re lambda|`` above ``dark_tol``."""
    candidates = [m for m in modes if abs(m.eigenvalue.real) > dark_tol]
    if not candidates:
        raise DomainError("no mode decays faster than dark_tol")
    best = min(candidates, key=lambda m: abs(m.eigenvalue.real))
    weights = term_weights(best.right, basis) if basis is not None else {}
    return BrightMode(best, 1.0 / abs(best.eigenvalue.real), weights)


@dataclass
class DecayCurve:
    """Decay rate (1/s) of the tracked long-lived bright mode versus |B| (G)."""

    B: np.ndarray
    rate: np.ndarray
    exponent: float
    prefactor: float
    window: tuple

    @property
    def excess(self) -> np.ndarray:
        return self.rate - self.rate[np.argmin(np.abs(self.B))]


def _fit_power_law(B, y, window):
    B, y = np.abs(np.asarray(B)), np.asarray(y)
    sel = (B >= window[0]) & (B <= window[1]) & (y > 0)
    if sel.sum() < 2:
        return math.nan, math.nan
    slope, icpt = np.polyfit(np.log(B[sel]), np.log(y[sel]), 1)
    return float(slope), float(math.exp(icpt))


def decay_rate_vs_field(model, B_grid, axis=(0.0, 0.0, 1.0), dark_tol=None, window=(1e-3, 1e-2)) -> DecayCurve:
    """Follow the B = 0 slowest bright mode along a field axis.

    The mode is identified at the smallest |B| of the grid and followed by
    maximal overlap of eigen-matrices between neighbouring grid points.  The
    power-law exponent is fitted on a log-log scale to the rate increase
    over its zero-field value inside ``window`` (gauss).
    """
    B_grid = np.asarray(B_grid, dtype=float)
    if dark_tol is None:
        dark_tol = 1e-6 * model.data.gamma["P1/2"]
    order = np.argsort(np.abs(B_grid), kind="stable")
    axis = np.asarray(axis, dtype=float)
    rates = np.empty(len(B_grid))

    ref = None
    ref_rate = None
    for i in order:
        Bvec = FieldVector.along(axis, B_grid[i]) if B_grid[i] != 0 else FieldVector()
        lam, R = sla.eig(model.liouvillian(Bvec))
        R = R / np.linalg.norm(R, axis=0)
        if ref is None:
            mask = np.abs(lam.real) > dark_tol
            if not mask.any():
                raise DomainError("no bright mode at the first grid point")
            j = np.flatnonzero(mask)[np.argmin(np.abs(lam.real[mask]))]
        else:
            # restrict to modes whose rate is within a factor of the previous one
            ok = np.abs(np.abs(lam.real) - ref_rate) < 0.5 * ref_rate
            score = np.abs(R.conj().T @ ref)
            score[~ok] = -1
            j = int(np.argmax(score))
        ref = R[:, j]
        ref_rate = abs(lam[j].real)
        rates[i] = ref_rate

    zero = rates[order[0]]
    expo, pref = _fit_power_law(B_grid, rates - zero, window)
    return DecayCurve(B_grid, rates, expo, pref, tuple(window))


@dataclass
class Evolution:
    times: np.ndarray
    states: list
    used_expm: bool = False


def evolve(L: np.ndarray, rho0: np.ndarray, times, cond_limit: float = 1e10) -> Evolution:
    """rho(t) = sum_i e^{lambda_i t} right_i <left_i, rho0>.

    Falls back to ``scipy.linalg.expm`` per time point when the eigenvector
    matrix is too ill-conditioned to trust (flag ``used_expm``).
    """
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise DomainError("times must be non-negative and ascending")
    L = np.asarray(L)
    d = math.isqrt(L.shape[0])
    v0 = vec(rho0)
    lam, R = sla.eig(L)
    cond = np.linalg.cond(R)
    states = []
    if np.isfinite(cond) and cond < cond_limit:
        c = np.linalg.solve(R, v0)
        for t in times:
            if t == 0:
                states.append(np.array(rho0, dtype=complex, copy=True))
                continue
            states.append(unvec(R @ (np.exp(lam * t) * c), d))
        return Evolution(times, states, False)
    for t in times:
        states.append(unvec(sla.expm(L * t) @ v0, d))
    return Evolution(times, states, True)


# --- perturbation theory in B ----------------------------------------------


def perturbative_expansion(L0, L1, L2=None, rho0=None, order=2, max_order=10, tol=1e-12):
    """Taylor coefficients ``rho_0 .. rho_order`` of the steady state of L0 + B L1 + B^2 L2.

    Each coefficient splits into a kernel part ``R c_k`` and a range part
    fixed by the bordered system ``[[L0, R], [W^H, 0]]``.  The kernel
    coefficients ``c_k`` are fixed by trace normalization and by the
    solvability conditions of the higher orders, which are added until the
    requested orders are determined.  ``rho0`` is unused when the kernel of
    L0 is one-dimensional; otherwise it is only needed if the expansion stays
    degenerate up to ``max_order``.
    """
    n = L0.shape[0]
    d = math.isqrt(n)
    if L2 is None:
        L2 = np.zeros_like(L0)
    R, W, s = _kernel_bases(L0, tol)
    if R is None:
        raise SolverError("L0 has no kernel", {"smallest_singular_values": s[-3:].tolist()})
    k = R.shape[1]
    # work in units where the perturbation is comparable to the spectral gap
    # of L0; otherwise successive orders span dozens of decades
    gap = s[-k - 1]
    beta = gap / max(np.linalg.norm(L1, 2), np.sqrt(np.linalg.norm(L2, 2)), 1e-300)
    L1 = beta * L1
    L2 = beta**2 * L2
    w = vec(np.eye(d))

    border = np.zeros((n + k, n + k), dtype=complex)
    border[:n, :n] = L0
    border[:n, n:] = R
    border[n:, :n] = W.conj().T
    lu = sla.lu_factor(border)

    def solve_border(Y):
        """Return (X, MU) with L0 X + R MU = Y and W^H X = 0 (refined)."""
        rhs = np.vstack([Y, np.zeros((k, Y.shape[1]), dtype=complex)])
        Z = sla.lu_solve(lu, rhs)
        for _ in range(2):
            Z = Z + sla.lu_solve(lu, rhs - border @ Z)
        return Z[:n], Z[n:]

    # rho_j = A_j @ [c_0; ...; c_j; 1], built order by order
    N = max(order + 2, 3)
    while True:
        ncoef = (N + 1) * k + 1
        A = []
        mus = []
        for j in range(N + 1):
            Aj = np.zeros((n, ncoef), dtype=complex)
            Aj[:, j * k:(j + 1) * k] = R
            y = np.zeros((n, ncoef), dtype=complex)
            if j >= 1:
                y -= L1 @ A[j - 1]
            if j >= 2:
                y -= L2 @ A[j - 2]
            if j >= 1:
                X, MU = solve_border(y)
                Aj += X
                # solvability rows that vanish identically come back as
                # rounding noise; keep them out of the constraint set
                keep = np.linalg.norm(MU, axis=1) > 1e-9 * max(np.linalg.norm(y), 1e-300)
                mus.append(MU[keep])
            A.append(Aj)
        rows = []
        rhs = []
        for j in range(N + 1):
            t = w @ A[j]
            rows.append(t[:-1])
            rhs.append(-t[-1] + (1.0 if j == 0 else 0.0))
        for MU in mus:
            rows.extend(MU[:, :-1])
            rhs.extend(-MU[:, -1])
        M = np.array(rows)
        rhs = np.array(rhs)
        rnorm = np.linalg.norm(M, axis=1)
        rnorm[rnorm == 0] = 1.0
        M = M / rnorm[:, None]
        rhs = rhs / rnorm
        c, *_ = np.linalg.lstsq(M, rhs, rcond=None)
        sv = np.linalg.svd(M, compute_uv=False)
        _, _, Vh = np.linalg.svd(M)
        null = Vh[np.sum(sv > 1e-9 * sv[0]):]
        needed = slice(0, (order + 1) * k)
        free = np.linalg.norm(null[:, needed]) if null.size else 0.0
        resid = np.linalg.norm(M @ c - rhs)
        if free < 1e-8 and resid < 1e-8 * max(1.0, np.linalg.norm(rhs)):
            break
        if N >= max_order:
            rank_def = int(np.linalg.matrix_rank(null[:, needed], tol=1e-8)) if null.size else 0
            raise DegenerateExpansionError(
                "perturbative expansion not determined by the constraint set",
                rank_def,
                {"kernel_dim": k, "orders": N, "residual": float(resid)},
            )
        N += 2
    cvec = np.append(c, 1.0)
    coeffs = [unvec(A[j] @ cvec, d) / beta**j for j in range(order + 1)]
    coeffs = [(r + r.conj().T) / 2 for r in coeffs]
    return coeffs


def derivative_fluorescence(model, axis, observable, order_tol=1e-12):
    """(dI/dB, d2I/dB2) at B = 0 along ``axis`` from the perturbative steady state.

    ``observable`` maps a density matrix to a rate and must be affine in
    rho; its constant part is removed from the higher-order terms.
    """
    L1 = model.zeeman_superoperator(axis)
    rhos = perturbative_expansion(model.L0, L1, None, model.initial_state(), order=2, tol=order_tol)
    zero = observable(np.zeros_like(rhos[0]))
    d1 = observable(rhos[1]) - zero
    d2 = 2.0 * (observable(rhos[2]) - zero)
    return float(d1), float(d2)


# --- dark states ----------------------------------------------------------------


@dataclass
class DarkStateSet:
    """Dark vectors (columns of ``vectors``), their energies and term manifolds."""

    vectors: np.ndarray
    energies: np.ndarray
    manifolds: list = field(default_factory=list)

    def __len__(self):
        return self.vectors.shape[1]

    def count(self, manifold: str) -> int:
        return sum(1 for m in self.manifolds if m == manifold)


def _null(M, rtol):
    if M.size == 0:
        return np.eye(M.shape[1], dtype=complex)
    U, s, Vh = sla.svd(M)
    if s.size == 0 or s[0] == 0:
        return np.eye(M.shape[1], dtype=complex)
    rank = int(np.sum(s > rtol * s[0]))
    return Vh[rank:].conj().T


def dark_subspace(H: np.ndarray, couplings, rtol: float = 1e-10, scale: float | None = None):
    """Largest H-invariant subspace annihilated by every coupling operator.

    Returns ``(vectors, energies)``: orthonormal eigenvectors of H that lie
    in the joint kernel of ``couplings``.
    """
    H = np.asarray(H)
    dim = H.shape[0]
    if scale is None:
        scale = max(np.linalg.norm(H, 2), 1e-300)
    stack = [np.asarray(C) for C in couplings if np.any(C)]
    S = _null(np.vstack(stack), rtol) if stack else np.eye(dim, dtype=complex)
    while S.shape[1] > 0:
        HS = H @ S
        leak = HS - S @ (S.conj().T @ HS)
        if np.linalg.norm(leak, 2) <= rtol * scale:
            break
        U, s, Vh = sla.svd(leak)
        keep = Vh[int(np.sum(s > rtol * scale)):].conj().T
        if keep.shape[1] == S.shape[1]:
            break
        S = S @ keep
    if S.shape[1] == 0:
        return np.zeros((dim, 0), dtype=complex), np.zeros(0)
    E, U = np.linalg.eigh(S.conj().T @ H @ S)
    return S @ U, E


def _laser_components(basis: Basis, lasers):
    """Index arrays of the connected components of the laser graph over terms."""
    parent = {t.label: t.label for t in basis.terms}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for laser in lasers:
        if laser.enabled and laser.saturation > 0:
            parent[find(laser.channel.lower.label)] = find(laser.channel.upper.label)
    groups = {}
    for t in basis.terms:
        groups.setdefault(find(t.label), []).append(t.label)
    return [np.concatenate([np.arange(basis.dim)[basis.slice(lbl)] for lbl in labels]) for labels in groups.values()]


def dark_state_analysis(basis: Basis, lasers, B: FieldVector, constants=None, rtol=1e-10) -> DarkStateSet:
    """Dark states of the laser-dressed ion at field ``B``.

    Terms not linked by any laser have no meaningful relative energy in the
    rotating frame, so each connected component of the laser graph is
    searched on its own.  Terms no laser touches are skipped.
    """
    H = build_hamiltonian(basis, lasers, B, constants)
    # lasers act together: a state is dark when the summed drive annihilates it
    drive = np.zeros_like(H)
    for laser in lasers:
        if laser.enabled and laser.saturation > 0:
            V = coupling_operator(basis, laser.channel, laser.polarization)
            drive += laser.rabi * (V + V.conj().T)
    scale = np.linalg.norm(drive, 2) if np.any(drive) else 1.0

    blocks, energies = [], []
    for idx in _laser_components(basis, lasers):
        sub = drive[np.ix_(idx, idx)]
        if not np.any(sub):
            continue
        v, E = dark_subspace(H[np.ix_(idx, idx)], [sub], rtol, scale=scale)
        full = np.zeros((basis.dim, v.shape[1]), dtype=complex)
        full[idx] = v
        blocks.append(full)
        energies.append(E)
    vecs = np.hstack(blocks) if blocks else np.zeros((basis.dim, 0), dtype=complex)
    E = np.concatenate(energies) if energies else np.zeros(0)
    # drop SVD round-off so that a state built in one manifold has exactly
    # zero weight elsewhere
    vecs[np.abs(vecs) < 1e-14 * np.abs(vecs).max(initial=1.0)] = 0.0
    if vecs.shape[1]:
        vecs /= np.linalg.norm(vecs, axis=0)

    manifolds = []
    for j in range(vecs.shape[1]):
        w = {t.label: float(np.sum(np.abs(vecs[basis.slice(t.label), j]) ** 2)) for t in basis.terms}
        label = max(w, key=w.get)
        manifolds.append(label if w[label] > 1 - 1e-8 else "mixed")
    return DarkStateSet(vecs, E, manifolds)
