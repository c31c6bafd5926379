"""Fluorescence observables, field scans, dip metrics and shot-noise sensitivity."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .atomic import FieldVector
from .exceptions import DomainError
from .solve import derivative_fluorescence, steady_state

__all__ = [
    "DetectionModel",
    "ScanResult",
    "DipMetrics",
    "Sensitivity",
    "DETECTION_TERMS",
    "DEFAULT_EFFICIENCY",
    "fluorescence_rate",
    "calibrate_efficiency",
    "scan_field",
    "dip_metrics",
    "sensitivity",
]

# detected photon -> (upper term, lower term) of the emitting channel
DETECTION_TERMS = {"455": ("P3/2", "S1/2"), "493": ("P1/2", "S1/2")}

# Net 455 nm counts of ~6e4 /s at the peak of the bundled model's field scan
# (paper lasers, z axis, 0..5 G); see calibrate_efficiency.
DEFAULT_EFFICIENCY = 0.0327

PT_PER_GAUSS = 1.0e8


@dataclass(frozen=True)
class DetectionModel:
    """Which P->S photon is counted and how.

    Parameters
    ----------
    channel : {"455", "493"}
    efficiency : float
        Counts per emitted photon, in (0, 1].
    background : float
        Additive count rate (1/s).
    noise_variance : float
        Variance of the count rate in a 1 s bin, (counts/s).
    """

    channel: str = "455"
    efficiency: float = DEFAULT_EFFICIENCY
    background: float = 0.0
    noise_variance: float = 60.0

    def __post_init__(self):
        if self.channel not in DETECTION_TERMS:
            raise DomainError(f"detection channel must be one of {sorted(DETECTION_TERMS)}")
        if not 0.0 < self.efficiency <= 1.0:
            raise DomainError("efficiency must lie in (0, 1]")
        if self.background < 0 or self.noise_variance < 0:
            raise DomainError("background and noise variance must be non-negative")

    @property
    def terms(self) -> tuple[str, str]:
        return DETECTION_TERMS[self.channel]


def fluorescence_rate(rho: np.ndarray, detection: DetectionModel, model) -> float:
    """Detected count rate eta * Gamma(P->S) * pop(P) + background.

    ``model`` supplies the basis and the partial decay rate of the detected
    channel (an :class:`~mcpt.model.IonModel`).
    """
    upper, lower = detection.terms
    gamma = model.data.partial_rate(upper, lower)
    s = model.basis.slice(upper)
    # rounding can leave a population of -1e-17 in a dark state
    pop = max(float(np.real(np.trace(rho[s, s]))), 0.0)
    return detection.efficiency * gamma * pop + detection.background


def _observable(detection: DetectionModel, model):
    # photon emission rate without efficiency or background; affine in rho
    upper, lower = detection.terms
    gamma = model.data.partial_rate(upper, lower)
    s = model.basis.slice(upper)
    return lambda rho: gamma * float(np.real(np.trace(rho[s, s])))


def calibrate_efficiency(model, B_grid, target_net: float = 6.0e4, axis=(0.0, 0.0, 1.0), channel: str = "455") -> float:
    """Efficiency that puts the scan maximum at ``target_net`` counts/s."""
    obs = _observable(DetectionModel(channel=channel), model)
    rho0 = model.initial_state()
    peak = max(obs(steady_state(model.liouvillian(FieldVector.along(axis, B)), rho0)) for B in B_grid)
    if peak <= 0:
        raise DomainError("no fluorescence anywhere on the calibration grid")
    return min(1.0, target_net / peak)


@dataclass
class ScanResult:
    """Fluorescence along one field axis.

    ``derivative`` is None when it was not requested.  ``params`` holds the
    configuration snapshot the scan was run with.
    """

    axis: tuple
    B_values: np.ndarray
    rate: np.ndarray
    derivative: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.B_values = np.asarray(self.B_values, dtype=float)
        self.rate = np.asarray(self.rate, dtype=float)
        if self.derivative is not None:
            self.derivative = np.asarray(self.derivative, dtype=float)
            if self.derivative.shape != self.B_values.shape:
                raise DomainError("derivative column length differs from the grid")
        if self.rate.shape != self.B_values.shape:
            raise DomainError("rate column length differs from the grid")
        steps = np.diff(self.B_values)
        if not (np.all(steps > 0) or np.all(steps < 0)):
            raise DomainError("B values must be strictly monotonic")

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["B_gauss", "rate_counts_per_s", "derivative_counts_per_s_per_gauss"])
        deriv = self.derivative if self.derivative is not None else [None] * len(self.B_values)
        for B, r, d in zip(self.B_values, self.rate, deriv):
            w.writerow([repr(float(B)), repr(float(r)), "" if d is None else repr(float(d))])
        return out.getvalue()

    def to_dict(self) -> dict:
        return {
            "axis": [float(a) for a in self.axis],
            "B_values": self.B_values.tolist(),
            "rate": self.rate.tolist(),
            "derivative": None if self.derivative is None else self.derivative.tolist(),
            "params": self.params,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def scan_field(model, axis, B_grid, detection: DetectionModel, derivative: bool = True, threads: int = 1, params=None) -> ScanResult:
    """Steady-state count rate at every field value along ``axis``.

    With ``derivative`` set, the derivative column uses central differences
    on the grid (``numpy.gradient``) and the perturbative value at B = 0.
    """
    B_grid = np.asarray(B_grid, dtype=float)
    if B_grid.ndim != 1 or B_grid.size < 2:
        raise DomainError("field grid needs at least two points")
    axis = tuple(float(a) for a in axis)
    rho0 = model.initial_state()
    L0 = model.L0
    Lk = [model.zeeman_superoperator(axis)]

    def one(B):
        rho = steady_state(L0 + B * Lk[0], rho0)
        return fluorescence_rate(rho, detection, model)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rates = list(pool.map(one, B_grid))
    else:
        rates = [one(B) for B in B_grid]
    rates = np.array(rates)

    deriv = None
    if derivative:
        deriv = np.gradient(rates, B_grid)
        zero = np.flatnonzero(B_grid == 0.0)
        if zero.size:
            d1, _ = derivative_fluorescence(model, axis, _observable(detection, model))
            deriv[zero] = detection.efficiency * d1
    return ScanResult(axis, B_grid, rates, deriv, dict(params or {}))


@dataclass(frozen=True)
class DipMetrics:
    fwhm: float
    min_rate: float
    max_slope: float
    max_slope_B: float


def _crossing(B, I, inner, outer, level):
    # interpolate from the point inside the dip outwards so that a mirrored
    # scan gives the mirrored crossing bit for bit
    t = (level - I[inner]) / (I[outer] - I[inner])
    return B[inner] + (B[outer] - B[inner]) * t


def dip_metrics(scan: ScanResult) -> DipMetrics:
    """FWHM, depth and steepest slope of the dip in ``scan``.

    The half-depth level sits halfway between the minimum and the lower of
    the two shoulder maxima.  Raises :class:`DomainError` if the rate does not
    climb back over that level on both sides of the minimum.
    """
    order = np.argsort(scan.B_values)
    B = scan.B_values[order]
    I = scan.rate[order]
    i0 = int(np.argmin(I))
    if i0 == 0 or i0 == len(I) - 1:
        raise DomainError("dip minimum lies on the edge of the scan")
    top = min(I[:i0].max(), I[i0 + 1:].max())
    level = I[i0] + 0.5 * (top - I[i0])
    if not top > I[i0]:
        raise DomainError("scan shows no dip")

    right = next(i for i in range(i0 + 1, len(I)) if I[i] >= level)
    left = next(i for i in range(i0 - 1, -1, -1) if I[i] >= level)
    fwhm = _crossing(B, I, right - 1, right, level) - _crossing(B, I, left + 1, left, level)

    slope = scan.derivative[order] if scan.derivative is not None else np.gradient(I, B)
    j = int(np.argmax(np.abs(slope)))
    return DipMetrics(float(fwhm), float(I[i0]), float(abs(slope[j])), float(B[j]))


@dataclass(frozen=True)
class Sensitivity:
    gauss_per_rthz: float

    @property
    def tesla_per_rthz(self) -> float:
        return self.gauss_per_rthz * 1e-4

    @property
    def pT_per_rthz(self) -> float:
        return self.gauss_per_rthz * PT_PER_GAUSS


def sensitivity(max_slope: float, noise_sigma: float) -> Sensitivity:
    """Shot-noise limited field resolution sigma(N) / (dN/dB).

    Parameters
    ----------
    max_slope : float
        Steepest count-rate slope, counts/s/G.
    noise_sigma : float
        Standard deviation of the count rate in a 1 s bin.

    >>> round(sensitivity(1.61e6, math.sqrt(60)).pT_per_rthz)
    481
    """
    if not max_slope > 0:
        raise DomainError("slope must be positive")
    if noise_sigma < 0:
        raise DomainError("noise must be non-negative")
    if math.isinf(max_slope):
        return Sensitivity(0.0)
    return Sensitivity(noise_sigma / max_slope)
