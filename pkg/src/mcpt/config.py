"""Experiment configuration files.

Configurations are INI files (``configparser``) with one section per
subject.  Every key has a typed default, so an empty file is a valid
configuration describing the paper-like default experiment.  Unknown
sections or keys are rejected.  Lasers live in ``[laser.455]``,
``[laser.493]``, ``[laser.614]`` and ``[laser.650]``.

Values are parsed as follows: floats and ints as usual, booleans by
``configparser`` rules, vectors as comma-separated numbers (complex
numbers allowed for polarizations, e.g. ``1, 0.5j, 0``).
"""

from __future__ import annotations

import configparser
import copy
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .exceptions import ConfigError

__all__ = [
    "ExperimentConfig",
    "SCHEMA",
    "CONFIG_DIR_ENV",
    "load_config",
    "parse_config",
    "resolve_config_path",
    "bundled_presets",
]

CONFIG_DIR_ENV = "MCPT_CONFIG_DIR"


def _float(text):
    value = float(text)
    if not math.isfinite(value) and value != math.inf:
        raise ValueError(f"not a finite number: {text}")
    return value


def _bool(text):
    key = str(text).strip().lower()
    if key not in configparser.ConfigParser.BOOLEAN_STATES:
        raise ValueError(f"not a boolean: {text}")
    return configparser.ConfigParser.BOOLEAN_STATES[key]


def _vector(n, kind=float):
    def parse(text):
        if isinstance(text, (list, tuple)):
            parts = list(text)
        else:
            parts = [p.strip() for p in str(text).split(",") if p.strip()]
        if len(parts) != n:
            raise ValueError(f"expected {n} comma-separated values")
        return tuple(kind(p) for p in parts)

    return parse


def _floats(text):
    if isinstance(text, (list, tuple)):
        return tuple(float(t) for t in text)
    parts = [p.strip() for p in str(text).split(",") if p.strip()]
    if not parts:
        raise ValueError("expected at least one value")
    return tuple(float(p) for p in parts)


def _axis(text):
    named = {"x": (1.0, 0.0, 0.0), "y": (0.0, 1.0, 0.0), "z": (0.0, 0.0, 1.0)}
    if isinstance(text, str) and text.strip().lower() in named:
        return named[text.strip().lower()]
    v = np.array(_vector(3)(text), dtype=float)
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("axis must be non-zero")
    return tuple(float(c) for c in v / n)


def _choice(*options):
    def parse(text):
        value = str(text).strip()
        if value not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return value

    return parse


def _optional_path(text):
    text = str(text).strip()
    return text or ""


def _laser_schema(det, sat, on):
    return {
        "detuning_mhz": (_float, det),
        "saturation": (_float, sat),
        "linewidth_mhz": (_float, 0.5),
        "polarization": (_vector(3, complex), (1 + 0j, 0j, 0j)),
        "enabled": (_bool, on),
    }


# section -> key -> (parser, default)
SCHEMA = {
    "model": {
        "constants_file": (_optional_path, ""),
        "dephasing": (_bool, True),
        "saturation_reference": (_choice("partial", "total"), "partial"),
        "initial_state": (_choice("s_mixture", "s_down", "s_up"), "s_mixture"),
    },
    "laser.455": _laser_schema(-10.0, 0.5, True),
    "laser.493": _laser_schema(-20.0, 5.0, False),
    "laser.614": _laser_schema(-50.0, 15.0, True),
    "laser.650": _laser_schema(-40.0, 40.0, True),
    "field": {
        "axis": (_axis, (0.0, 0.0, 1.0)),
        "from": (_float, -1.0),
        "to": (_float, 1.0),
        "points": (int, 201),
        "vector": (_vector(3), (0.0, 0.0, 0.0)),
    },
    "detection": {
        "channel": (_choice("455", "493"), "455"),
        "efficiency": (_float, 0.0327),
        "background": (_float, 0.0),
        "noise_variance": (_float, 60.0),
    },
    "solver": {
        "tol": (_float, 1e-12),
        "dark_tol": (_float, 1e-6),
        "cluster_tol": (_float, 1e-10),
    },
    "spectrum": {
        "decay_from": (_float, 0.0),
        "decay_to": (_float, 0.05),
        "decay_points": (int, 26),
        "fit_from": (_float, 1e-3),
        "fit_to": (_float, 1e-2),
    },
    "evolve": {
        "t_max": (_float, 50e-6),
        "points": (int, 101),
    },
    "nulling": {
        "calibration": (_vector(9), (0.5, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.5)),
        "offset": (_vector(3), (0.12, -0.25, 0.31)),
        "current_resolution": (_float, 1e-6),
        "integration_time": (_float, 0.1),
        "seed": (int, 0),
        "dark_count_rate": (_float, 0.0),
        "half_widths": (_floats, (1.0, 0.2, 0.1)),
        "points": (int, 31),
        "fit_fraction": (_float, 0.3),
        "max_sweeps": (int, 5),
        "tolerance": (_float, 1e-7),
        "current_limit": (_float, 5.0),
        "probe_polarization": (_choice("per_axis", "fixed"), "per_axis"),
    },
    "toy": {
        "delta_L": (_float, -1.0),
        "delta_P": (_float, -3.0),
        "omega_L": (_float, 0.5),
        "omega_P": (_float, 0.5),
        "gamma": (_float, 1.0),
        "branching": (_vector(3), (1 / 3, 1 / 3, 1 / 3)),
        "delta_from": (_float, -2.0),
        "delta_to": (_float, 2.0),
        "points": (int, 201),
    },
}


def _jsonable(value):
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, tuple):
        return [_jsonable(v) for v in value]
    return value


@dataclass
class ExperimentConfig:
    """Resolved, typed configuration: ``values[section][key]``."""

    values: dict = field(default_factory=lambda: {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()})
    source: str = "<defaults>"

    def __getitem__(self, section):
        return self.values[section]

    def to_dict(self) -> dict:
        return {s: {k: _jsonable(v) for k, v in sorted(keys.items())} for s, keys in sorted(self.values.items())}

    @property
    def hash(self) -> str:
        """SHA-256 of the canonical JSON form of the resolved values."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, assignments) -> "ExperimentConfig":
        """Copy with ``section.key=value`` strings applied."""
        new = ExperimentConfig(copy.deepcopy(self.values), self.source)
        for item in assignments or ():
            if "=" not in item:
                raise ConfigError(f"override '{item}' is not of the form section.key=value")
            lhs, value = item.split("=", 1)
            if "." not in lhs:
                raise ConfigError(f"override '{item}' lacks a section")
            section, key = lhs.strip().rsplit(".", 1)
            new._set(section, key, value.strip())
        return new

    def _set(self, section, key, raw):
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key '{key}' in [{section}]")
        parser, _ = SCHEMA[section][key]
        try:
            self.values[section][key] = parser(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from None
        self._check(section, key)

    def _check(self, section, key):
        v = self.values[section][key]
        positive = {
            ("field", "points"),
            ("evolve", "points"),
            ("evolve", "t_max"),
            ("spectrum", "decay_points"),
            ("nulling", "integration_time"),
            ("nulling", "current_resolution"),
            ("nulling", "points"),
            ("nulling", "max_sweeps"),
            ("nulling", "current_limit"),
            ("toy", "gamma"),
            ("toy", "points"),
            ("solver", "tol"),
        }
        if (section, key) in positive and not v > 0:
            raise ConfigError(f"[{section}] {key} must be positive")
        if section.startswith("laser.") and key in ("saturation", "linewidth_mhz") and v < 0:
            raise ConfigError(f"[{section}] {key} must be non-negative")
        if (section, key) in {("detection", "background"), ("detection", "noise_variance"), ("nulling", "dark_count_rate")} and v < 0:
            raise ConfigError(f"[{section}] {key} must be non-negative")
        if (section, key) == ("detection", "efficiency") and not 0 < v <= 1:
            raise ConfigError("[detection] efficiency must lie in (0, 1]")

    # -- builders ----------------------------------------------------------

    def ion_model(self):
        from .constants import load_atomic_data
        from .model import IonModel, LaserSettings

        lasers = {}
        for name in ("455", "493", "614", "650"):
            sec = self.values[f"laser.{name}"]
            lasers[name] = LaserSettings(
                detuning_mhz=sec["detuning_mhz"],
                saturation=sec["saturation"],
                linewidth_mhz=sec["linewidth_mhz"],
                polarization=tuple(sec["polarization"]),
                enabled=sec["enabled"],
            )
        path = self.values["model"]["constants_file"] or None
        if path is not None and not Path(path).is_absolute() and Path(self.source).is_file():
            path = str(Path(self.source).parent / path)
        try:
            data = load_atomic_data(path)
        except OSError as exc:
            raise ConfigError(f"cannot read constants file: {exc}") from None
        return IonModel(
            lasers=lasers,
            data=data,
            dephasing=self.values["model"]["dephasing"],
            saturation_reference=self.values["model"]["saturation_reference"],
            initial=self.values["model"]["initial_state"],
        )

    def detection(self):
        from .observe import DetectionModel

        d = self.values["detection"]
        return DetectionModel(d["channel"], d["efficiency"], d["background"], d["noise_variance"])

    def field_grid(self) -> np.ndarray:
        f = self.values["field"]
        return np.linspace(f["from"], f["to"], f["points"])


def parse_config(text: str, source: str = "<text>") -> ExperimentConfig:
    """Parse INI text against :data:`SCHEMA`."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    cfg = ExperimentConfig(source=source)
    for section in cp.sections():
        for key, raw in cp.items(section):
            cfg._set(section, key, raw)
    return cfg


def bundled_presets() -> dict:
    """Name -> path of the presets shipped with the package."""
    root = resources.files("mcpt") / "data" / "presets"
    return {p.name[: -len(".cfg")]: Path(str(p)) for p in root.iterdir() if p.name.endswith(".cfg")}


def resolve_config_path(name: str) -> Path:
    """Find a config by path, then in ``$MCPT_CONFIG_DIR``, then among the presets."""
    p = Path(name)
    if p.is_file():
        return p
    candidates = []
    env = os.environ.get(CONFIG_DIR_ENV)
    if env:
        candidates += [Path(env) / name, Path(env) / f"{name}.cfg"]
    presets = bundled_presets()
    stem = name[:-4] if name.endswith(".cfg") else name
    if stem in presets:
        candidates.append(presets[stem])
    for c in candidates:
        if c.is_file():
            return c
    raise ConfigError(f"config '{name}' not found")


def load_config(name: str | None = None) -> ExperimentConfig:
    """Load a config file (see :func:`resolve_config_path`) or the defaults."""
    if name is None:
        env = os.environ.get(CONFIG_DIR_ENV)
        if env and (Path(env) / "default.cfg").is_file():
            name = str(Path(env) / "default.cfg")
        else:
            return ExperimentConfig()
    path = resolve_config_path(name)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text, source=str(path))

