"""Magnetically induced dark states of a trapped 138Ba+ ion.

Optical Bloch equations for the 18 Zeeman sublevels of S1/2, P1/2, D3/2,
P3/2 and D5/2 under 455, 493, 614 and 650 nm lasers; steady states,
Liouvillian spectra and perturbation theory in the field; fluorescence
scans and shot-noise sensitivity; a four-level toy model; and a simulated
three-axis coil nulling search.
"""

from importlib.metadata import PackageNotFoundError, version

from .atomic import FieldVector, ba138_basis
from .config import ExperimentConfig, load_config
from .exceptions import (
    ConfigError,
    DegenerateExpansionError,
    DomainError,
    MCPTError,
    SearchFailure,
    SolverError,
    UnsupportedConfigurationError,
)
from .model import IonModel, LaserSettings, paper_laser_settings
from .nulling import CoilSystem, MeasurementModel, NullingProtocol, null_search
from .observe import DetectionModel, ScanResult, dip_metrics, scan_field, sensitivity
from .solve import (
    dark_state_analysis,
    decay_rate_vs_field,
    derivative_fluorescence,
    evolve,
    liouvillian_spectrum,
    perturbative_expansion,
    slowest_bright_mode,
    steady_state,
)
from .toymodel import ToyParams, toy_dark_states, toy_fluorescence_vs_delta

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover
    __version__ = "0.0.0"

__all__ = [
    "FieldVector",
    "ba138_basis",
    "ExperimentConfig",
    "load_config",
    "MCPTError",
    "DomainError",
    "ConfigError",
    "SolverError",
    "DegenerateExpansionError",
    "SearchFailure",
    "UnsupportedConfigurationError",
    "IonModel",
    "LaserSettings",
    "paper_laser_settings",
    "CoilSystem",
    "MeasurementModel",
    "NullingProtocol",
    "null_search",
    "DetectionModel",
    "ScanResult",
    "dip_metrics",
    "scan_field",
    "sensitivity",
    "dark_state_analysis",
    "decay_rate_vs_field",
    "derivative_fluorescence",
    "evolve",
    "liouvillian_spectrum",
    "perturbative_expansion",
    "slowest_bright_mode",
    "steady_state",
    "ToyParams",
    "toy_dark_states",
    "toy_fluorescence_vs_delta",
]
