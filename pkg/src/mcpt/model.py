"""The driven 18-level Ba+ ion as a reusable object.

:class:`IonModel` caches the field-independent part of the Liouvillian so a
field scan only adds the (linear) Zeeman commutator per point.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .atomic import (
    LASER_CHANNELS,
    Basis,
    FieldVector,
    ba138_basis,
    ba138_channels,
    jump_operators,
    polarization_from_cartesian,
    zeeman_hamiltonian,
)
from .constants import AtomicData, PhysicalConstants, load_atomic_data
from .exceptions import ConfigError
from .liouville import (
    LaserDrive,
    commutator_superoperator,
    dephasing_dissipator,
    dissipator,
    drive_hamiltonian,
    rotating_frame_shifts,
)

DEFAULT_LINEWIDTH_MHZ = 0.5

# name -> (detuning MHz, saturation, enabled); the 493 nm laser is off in
# the background-free measurements.
PAPER_LASERS = {
    "455": (-10.0, 0.5, True),
    "614": (-50.0, 15.0, True),
    "650": (-40.0, 40.0, True),
    "493": (-20.0, 5.0, False),
}


@dataclass(frozen=True)
class LaserSettings:
    """User-facing laser parameters in MHz, before conversion to a drive."""

    detuning_mhz: float
    saturation: float
    linewidth_mhz: float = DEFAULT_LINEWIDTH_MHZ
    polarization: tuple = (1.0, 0.0, 0.0)
    enabled: bool = True

    def spherical_polarization(self) -> np.ndarray:
        return polarization_from_cartesian(self.polarization)


def paper_laser_settings(with_493: bool = False, **overrides) -> dict:
    """Laser settings quoted for the experiment; ``overrides`` replace fields per laser.

    >>> paper_laser_settings(**{"614": {"saturation": 5.0}})["614"].saturation
    5.0
    """
    out = {}
    for name, (det, sat, on) in PAPER_LASERS.items():
        out[name] = LaserSettings(det, sat, enabled=on or (name == "493" and with_493))
    for name, changes in overrides.items():
        out[name] = dataclasses.replace(out[name], **changes)
    return out


@dataclass
class IonModel:
    """18-level Ba+ under up to four lasers.

    Parameters
    ----------
    lasers : dict
        Laser name (``"455"``, ``"493"``, ``"614"``, ``"650"``) to
        :class:`LaserSettings`.
    data : AtomicData, optional
        Decay rates and branchings; defaults to the bundled constants file.
    dephasing : bool
        Include laser-linewidth dephasing.
    saturation_reference : {"partial", "total"}
        Decay rate the saturation parameters refer to: the partial rate of
        the driven channel (default) or the total rate of its upper term.
    initial : {"s_mixture", "s_down", "s_up"}
        Initial state used to pick the asymptotic state when the stationary
        state is not unique.
    """

    lasers: dict = field(default_factory=paper_laser_settings)
    data: AtomicData = field(default_factory=load_atomic_data)
    dephasing: bool = True
    saturation_reference: str = "partial"
    initial: str = "s_mixture"

    def __post_init__(self):
        unknown = set(self.lasers) - set(LASER_CHANNELS)
        if unknown:
            raise ConfigError(f"unknown lasers: {sorted(unknown)}")
        if self.saturation_reference not in ("partial", "total"):
            raise ConfigError("saturation_reference must be 'partial' or 'total'")
        if self.initial not in ("s_mixture", "s_down", "s_up"):
            raise ConfigError("initial must be 's_mixture', 's_down' or 's_up'")

    @cached_property
    def constants(self) -> PhysicalConstants:
        return self.data.constants()

    @cached_property
    def basis(self) -> Basis:
        return ba138_basis(self.data)

    @cached_property
    def channels(self) -> dict:
        return ba138_channels(self.basis, self.data)

    @property
    def dim(self) -> int:
        return self.basis.dim

    def saturation_rate(self, lower: str, upper: str) -> float:
        if self.saturation_reference == "total":
            return self.data.gamma[upper]
        return self.data.partial_rate(upper, lower)

    @cached_property
    def drives(self) -> list[LaserDrive]:
        c = self.constants
        out = []
        for name, st in sorted(self.lasers.items()):
            lower, upper = LASER_CHANNELS[name]
            out.append(
                LaserDrive(
                    channel=self.channels[(lower, upper)],
                    detuning=c.mhz_to_rad(st.detuning_mhz),
                    saturation=st.saturation,
                    saturation_rate=self.saturation_rate(lower, upper),
                    polarization=st.spherical_polarization(),
                    linewidth=c.mhz_to_rad(st.linewidth_mhz),
                    enabled=st.enabled,
                    name=name,
                )
            )
        return out

    @property
    def enabled_drives(self) -> list[LaserDrive]:
        return [d for d in self.drives if d.enabled and d.saturation > 0]

    @cached_property
    def jumps(self) -> list[np.ndarray]:
        ops = []
        for ch in self.channels.values():
            ops.extend(jump_operators(self.basis, ch))
        return ops

    def hamiltonian(self, B: FieldVector | None = None) -> np.ndarray:
        H = self._h0.copy()
        if B is not None:
            H += zeeman_hamiltonian(self.basis, B, self.constants)
        return H

    @cached_property
    def _h0(self) -> np.ndarray:
        frame = rotating_frame_shifts(self.drives, self.basis)
        return np.diag(frame.diagonal(self.basis)).astype(complex) + drive_hamiltonian(
            self.basis, self.drives
        )

    @cached_property
    def dissipative_part(self) -> np.ndarray:
        D = dissipator(self.jumps, self.dim)
        if self.dephasing:
            for drive in self.enabled_drives:
                if drive.linewidth > 0:
                    D = D + dephasing_dissipator(drive.linewidth, drive.channel, self.basis)
        return D

    @cached_property
    def L0(self) -> np.ndarray:
        """Liouvillian at zero field."""
        return commutator_superoperator(self._h0) + self.dissipative_part

    def zeeman_superoperator(self, axis) -> np.ndarray:
        """dL/dB along ``axis`` (per gauss); L is exactly linear in B."""
        B = FieldVector.along(axis, 1.0)
        return commutator_superoperator(zeeman_hamiltonian(self.basis, B, self.constants))

    @cached_property
    def _zeeman_xyz(self) -> tuple:
        return tuple(self.zeeman_superoperator(a) for a in np.eye(3))

    def liouvillian(self, B: FieldVector | None = None) -> np.ndarray:
        L = self.L0.copy()
        if B is not None:
            for comp, Lk in zip(B.as_array(), self._zeeman_xyz):
                if comp != 0.0:
                    L += comp * Lk
        return L

    def initial_state(self) -> np.ndarray:
        """Diagonal state in S1/2: equal mixture, or all in m = -1/2 or +1/2."""
        rho = np.zeros((self.dim, self.dim), dtype=complex)
        s = self.basis.slice("S1/2")
        rho[s, s] = np.diag({"s_mixture": [0.5, 0.5], "s_down": [1.0, 0.0], "s_up": [0.0, 1.0]}[self.initial])
        return rho

    def population(self, rho: np.ndarray, label: str) -> float:
        s = self.basis.slice(label)
        return float(np.real(np.trace(rho[s, s])))

    def replace(self, **changes) -> "IonModel":
        """Copy with laser fields replaced, e.g. ``replace(**{"614": {"saturation": 5}})``."""
        lasers = dict(self.lasers)
        for name, upd in changes.items():
            lasers[name] = dataclasses.replace(lasers[name], **upd)
        return dataclasses.replace(self, lasers=lasers)
