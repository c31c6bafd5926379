"""Physical constants, unit conversions and the bundled Ba+ atomic data file.

Internal units are angular frequency (rad/s) for every energy and rate and
gauss for magnetic fields.  Configuration values given in MHz or gauss are
converted here and nowhere else.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

TWO_PI = 2.0 * math.pi
GAUSS_PER_TESLA = 1.0e4


@dataclass(frozen=True)
class PhysicalConstants:
    """Conversion factors shared by every module.

    Parameters
    ----------
    mu_B_over_h : float
        Bohr magneton over Planck's constant in MHz/G.
    """

    mu_B_over_h: float = 1.3996245

    def __post_init__(self):
        if not (self.mu_B_over_h > 0 and math.isfinite(self.mu_B_over_h)):
            raise ValueError("mu_B_over_h must be finite and positive")

    @property
    def mu_B_over_hbar(self) -> float:
        """Bohr magneton over hbar in rad/s per gauss."""
        return TWO_PI * self.mu_B_over_h * 1e6

    @staticmethod
    def mhz_to_rad(value_mhz: float) -> float:
        return TWO_PI * value_mhz * 1e6

    @staticmethod
    def rad_to_mhz(value_rad: float) -> float:
        return value_rad / (TWO_PI * 1e6)

    @staticmethod
    def hz_to_rad(value_hz: float) -> float:
        return TWO_PI * value_hz

    @staticmethod
    def rad_to_hz(value_rad: float) -> float:
        return value_rad / TWO_PI

    @staticmethod
    def gauss_to_tesla(value_g: float) -> float:
        return value_g / GAUSS_PER_TESLA

    @staticmethod
    def tesla_to_gauss(value_t: float) -> float:
        return value_t * GAUSS_PER_TESLA


@dataclass(frozen=True)
class AtomicData:
    """Contents of a constants file.

    ``gamma`` maps an upper term label to its total decay rate (1/s),
    ``branching`` maps ``(upper, lower)`` to the branching fraction,
    ``energy_cm`` maps term labels to level energies in cm^-1,
    ``g_override`` holds optional Lande factor overrides.
    """

    gamma: dict
    branching: dict
    energy_cm: dict = field(default_factory=dict)
    g_override: dict = field(default_factory=dict)
    wavelength_nm: dict = field(default_factory=dict)
    mu_B_over_h: float = 1.3996245

    def partial_rate(self, upper: str, lower: str) -> float:
        return self.gamma.get(upper, 0.0) * self.branching.get((upper, lower), 0.0)

    def constants(self) -> PhysicalConstants:
        return PhysicalConstants(mu_B_over_h=self.mu_B_over_h)


DEFAULT_CONSTANTS_FILE = "ba138.constants"


def _parse_pair(key: str) -> tuple[str, str]:
    upper, sep, lower = key.partition("->")
    if not sep:
        raise ValueError(f"expected 'upper->lower' key, got {key!r}")
    return upper.strip(), lower.strip()


def load_atomic_data(path: str | Path | None = None) -> AtomicData:
    """Read a constants file (INI-style key/value sections).

    Sections: ``[decay]`` total rates, ``[branching]`` fractions keyed
    ``upper->lower``, ``[energy]`` in cm^-1, ``[lande]`` g-factor overrides,
    ``[wavelength]`` in nm keyed ``lower->upper``, ``[physics]`` with
    ``mu_B_over_h`` in MHz/G.  Branching fractions of each upper term must sum
    to one.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    if path is None:
        text = resources.files("mcpt.data").joinpath(DEFAULT_CONSTANTS_FILE).read_text()
        parser.read_string(text)
    else:
        with open(path) as fh:
            parser.read_file(fh)

    known = {"decay", "branching", "energy", "lande", "wavelength", "physics"}
    unknown = set(parser.sections()) - known
    if unknown:
        raise ValueError(f"unknown sections in constants file: {sorted(unknown)}")

    gamma = {k: float(v) for k, v in parser["decay"].items()} if parser.has_section("decay") else {}
    branching = {}
    if parser.has_section("branching"):
        for k, v in parser["branching"].items():
            branching[_parse_pair(k)] = float(v)
    for upper in gamma:
        total = sum(f for (u, _), f in branching.items() if u == upper)
        if not math.isclose(total, 1.0, abs_tol=1e-9):
            raise ValueError(f"branching fractions of {upper} sum to {total}, not 1")
    if any(v < 0 for v in gamma.values()) or any(v < 0 for v in branching.values()):
        raise ValueError("decay rates and branching fractions must be non-negative")

    energy = {k: float(v) for k, v in parser["energy"].items()} if parser.has_section("energy") else {}
    lande = {k: float(v) for k, v in parser["lande"].items()} if parser.has_section("lande") else {}
    wavelength = {}
    if parser.has_section("wavelength"):
        wavelength = {_parse_pair(k): float(v) for k, v in parser["wavelength"].items()}
    mu = 1.3996245
    if parser.has_section("physics"):
        mu = parser["physics"].getfloat("mu_B_over_h", mu)
    return AtomicData(gamma, branching, energy, lande, wavelength, mu)
