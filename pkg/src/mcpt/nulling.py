"""Three-axis coil nulling of the ambient field using the fluorescence dip.

The search is a cyclic coordinate descent in coil-current space: each axis
is scanned over a window, a parabola is fitted to the points around the
lowest reading, and the current moves to the parabola's vertex.  Windows
shrink from sweep to sweep.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .atomic import FieldVector
from .exceptions import DomainError, SearchFailure
from .observe import DetectionModel, fluorescence_rate
from .solve import steady_state

__all__ = [
    "CoilSystem",
    "MeasurementModel",
    "NullingProtocol",
    "NullResult",
    "field_from_currents",
    "expected_rate",
    "simulate_counts",
    "null_search",
    "axis_probe_models",
]


@dataclass(frozen=True)
class CoilSystem:
    """Coil calibration (G/A), the unknown ambient field and current step (A)."""

    calibration: np.ndarray = field(default_factory=lambda: np.eye(3))
    offset: FieldVector = field(default_factory=FieldVector)
    current_resolution: float = 1e-6

    def __post_init__(self):
        C = np.asarray(self.calibration, dtype=float)
        if C.shape != (3, 3) or not np.all(np.isfinite(C)):
            raise DomainError("calibration must be a finite 3x3 matrix")
        if not self.condition_number < 1.0 / np.finfo(float).eps:
            raise DomainError("calibration matrix is singular")
        if not self.current_resolution > 0:
            raise DomainError("current resolution must be positive")
        object.__setattr__(self, "calibration", C)

    @property
    def condition_number(self) -> float:
        return float(np.linalg.cond(np.asarray(self.calibration, dtype=float)))

    def null_currents(self) -> np.ndarray:
        """Currents that cancel the offset exactly (known only in simulation)."""
        return -np.linalg.solve(self.calibration, self.offset.as_array())


@dataclass(frozen=True)
class MeasurementModel:
    """Photon counting per scan point.

    ``integration_time = inf`` switches to noiseless readings: the expected
    count rate is used instead of a Poisson draw.
    """

    integration_time: float = 0.1
    rng_seed: int = 0
    dark_count_rate: float = 0.0

    def __post_init__(self):
        if not self.integration_time > 0:
            raise DomainError("integration time must be positive")
        if self.dark_count_rate < 0:
            raise DomainError("dark count rate must be non-negative")

    @property
    def noiseless(self) -> bool:
        return math.isinf(self.integration_time)


@dataclass(frozen=True)
class NullingProtocol:
    """Coordinate-descent settings.

    Parameters
    ----------
    half_widths : tuple of float
        Scan half-width (A) for successive sweeps; the last one repeats.
    points : int
        Currents per axis scan.
    fit_fraction : float
        Fraction of the window width, centred on the lowest reading, used
        for the parabola fit.
    max_sweeps : int
    tolerance : float
        Stop once no axis moved by more than this (A) in a sweep.
    current_limit : float
        Allowed currents are ``[-current_limit, current_limit]`` on each axis.
    max_recentre : int
        How often one axis scan may re-centre on an edge minimum before the
        dip counts as not bracketed.
    """

    half_widths: tuple = (1.0, 0.2, 0.1)
    points: int = 31
    fit_fraction: float = 0.3
    max_sweeps: int = 5
    tolerance: float = 1e-7
    current_limit: float = 5.0
    max_recentre: int = 4

    def __post_init__(self):
        if self.points < 5:
            raise DomainError("need at least 5 points per scan")
        if not 0 < self.fit_fraction <= 1:
            raise DomainError("fit_fraction must lie in (0, 1]")
        if not self.half_widths or min(self.half_widths) <= 0:
            raise DomainError("half widths must be positive")

    def half_width(self, sweep: int) -> float:
        return self.half_widths[min(sweep, len(self.half_widths) - 1)]


def field_from_currents(coils: CoilSystem, currents) -> FieldVector:
    """B = calibration . currents + offset."""
    i = np.asarray(currents, dtype=float)
    if i.shape != (3,) or not np.all(np.isfinite(i)):
        raise DomainError("currents must be three finite numbers")
    B = coils.calibration @ i + coils.offset.as_array()
    return FieldVector(*B)


def expected_rate(currents, coils: CoilSystem, model, detection: DetectionModel, meas: MeasurementModel) -> float:
    """Mean count rate (1/s) at the given coil currents, dark counts included."""
    B = field_from_currents(coils, currents)
    rho = steady_state(model.liouvillian(B), model.initial_state())
    return max(fluorescence_rate(rho, detection, model), 0.0) + meas.dark_count_rate


def axis_probe_models(model) -> tuple:
    """One laser setup per scan axis: every laser linearly polarized along
    the next axis (x scan -> y, y scan -> z, z scan -> x).

    Any fixed polarization leaves some field direction along which a
    stretched D sublevel stays dark at every field strength, so the
    fluorescence vanishes on whole lines through B = 0 and a coordinate
    search can settle anywhere on them.  Polarizing perpendicular to the
    scanned axis makes the count rate even in that field component, so each
    one-dimensional minimum sits at zero for that component.
    """
    out = []
    for axis in range(3):
        pol = tuple(float(k == (axis + 1) % 3) for k in range(3))
        out.append(model.replace(**{name: {"polarization": pol} for name in model.lasers}))
    return tuple(out)


def _generator(seed: int, key) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *key])))


def _current_key(currents) -> list:
    words = np.asarray(currents, dtype=np.float64).view(np.uint64)
    return [int(w) & 0xFFFFFFFF for w in words] + [int(w) >> 32 for w in words]


def simulate_counts(currents, coils, model, detection, meas: MeasurementModel, key=None, rate=None) -> int:
    """Poisson draw of the counts collected in one integration window.

    The stream is keyed on ``(rng_seed, key)``; by default ``key`` is built
    from the bit pattern of ``currents``, so repeating a measurement at the
    same currents repeats the draw.  ``rate`` is the mean count rate at
    ``currents`` if already known (see :func:`expected_rate`).
    """
    if meas.noiseless:
        raise DomainError("noiseless measurement has no finite count")
    if rate is None:
        rate = expected_rate(currents, coils, model, detection, meas)
    lam = rate * meas.integration_time
    if lam == 0:
        return 0
    rng = _generator(meas.rng_seed, _current_key(currents) if key is None else key)
    return int(rng.poisson(lam))


@dataclass
class NullResult:
    currents: np.ndarray
    residual_estimate: float
    residual_gauss: float
    iterations: int
    converged: bool
    scan_log: list
    residual_history: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "currents": [float(c) for c in self.currents],
                "residual_estimate_gauss": self.residual_estimate,
                "residual_gauss": self.residual_gauss,
                "sweeps": self.iterations,
                "converged": self.converged,
            },
            sort_keys=True,
        )

    def log_lines(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.scan_log)


def _fit_vertex(x, y, w):
    """Weighted parabola fit; returns (vertex, its standard error) or None."""
    xc = x.mean()
    X = np.vstack([(x - xc) ** 2, x - xc, np.ones_like(x)]).T
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    a, b, _ = coef
    if not a > 0:
        return None
    x0 = xc - b / (2 * a)
    resid = (y - X @ coef) * sw
    dof = max(len(x) - 3, 1)
    scale = max(float(resid @ resid) / dof, 1e-300)
    cov = np.linalg.pinv((X * w[:, None]).T @ X) * scale
    grad = np.array([b / (2 * a * a), -1 / (2 * a), 0.0])
    return float(x0), float(math.sqrt(max(grad @ cov @ grad, 0.0)))


def null_search(coils: CoilSystem, model, detection: DetectionModel, meas: MeasurementModel, protocol: NullingProtocol | None = None, start=None) -> NullResult:
    """Find the coil currents that cancel the ambient field.

    ``model`` is either one ion model used for all three axis scans or a
    sequence of three, one per scanned current axis (see
    :func:`axis_probe_models`).  Raises :class:`SearchFailure` (carrying the scan log) when an axis scan
    keeps finding its minimum at the edge of the allowed current range.
    """
    protocol = protocol or NullingProtocol()
    models = tuple(model) if isinstance(model, (tuple, list)) else (model,) * 3
    if len(models) != 3:
        raise DomainError("need one model or one per axis")
    lim = protocol.current_limit
    currents = np.zeros(3) if start is None else np.clip(np.asarray(start, dtype=float), -lim, lim)
    log = []
    clock = 0.0
    sigma = np.full(3, np.inf)
    converged = False
    sweeps = 0
    history = []

    def read(cur, sweep, axis, index):
        nonlocal clock
        if meas.noiseless:
            value = expected_rate(cur, coils, models[axis], detection, meas)
            return value, 1.0 / max(value, 1e-300)
        n = simulate_counts(cur, coils, models[axis], detection, meas, key=[sweep, axis, index])
        clock += meas.integration_time
        # counts/s and its Poisson variance
        return n / meas.integration_time, max(n, 1) / meas.integration_time**2

    for sweep in range(protocol.max_sweeps):
        sweeps = sweep + 1
        hw = protocol.half_width(sweep)
        moved = np.zeros(3)
        for axis in range(3):
            centre = currents[axis]
            for attempt in range(protocol.max_recentre + 1):
                lo, hi = max(centre - hw, -lim), min(centre + hw, lim)
                xs = np.linspace(lo, hi, protocol.points)
                xs = np.round(xs / coils.current_resolution) * coils.current_resolution
                xs = np.clip(xs, -lim, lim)
                ys, vs = [], []
                for k, x in enumerate(xs):
                    cur = currents.copy()
                    cur[axis] = x
                    y, v = read(cur, sweep, axis, attempt * protocol.points + k)
                    ys.append(y)
                    vs.append(v)
                    log.append({"sweep": sweep, "axis": axis, "current": float(x), "counts": y * (1.0 if meas.noiseless else meas.integration_time), "t": clock})
                ys, vs = np.array(ys), np.array(vs)
                j = int(np.argmin(ys))
                at_edge = (j == 0 and lo > -lim) or (j == len(xs) - 1 and hi < lim)
                if not at_edge:
                    break
                centre = xs[j]
            else:
                raise SearchFailure(f"axis {axis}: dip not bracketed after {protocol.max_recentre} re-centrings", log)
            if j == 0 or j == len(xs) - 1:
                raise SearchFailure(f"axis {axis}: minimum sits on the current limit", log)

            half_fit = 0.5 * protocol.fit_fraction * (hi - lo)
            sel = np.abs(xs - xs[j]) <= half_fit + 1e-15
            if sel.sum() < 5:
                sel = np.zeros_like(sel)
                sel[max(j - 2, 0): j + 3] = True
            fit = _fit_vertex(xs[sel], ys[sel], 1.0 / vs[sel])
            if fit is None or not (xs[sel].min() <= fit[0] <= xs[sel].max()):
                new, err = float(xs[j]), float(xs[1] - xs[0])
            else:
                new, err = fit
            new = float(np.clip(np.round(new / coils.current_resolution) * coils.current_resolution, -lim, lim))
            moved[axis] = abs(new - currents[axis])
            currents[axis] = new
            sigma[axis] = err
        history.append(field_from_currents(coils, currents).magnitude)
        if np.all(moved < protocol.tolerance):
            converged = True
            break

    residual = field_from_currents(coils, currents).magnitude
    estimate = float(np.linalg.norm(coils.calibration @ np.where(np.isfinite(sigma), sigma, 0.0)))
    return NullResult(currents, estimate, residual, sweeps, converged, log, history)
