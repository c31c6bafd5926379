"""Command-line front end.

Every subcommand reads an INI configuration (``--config``; bundled presets
can be named without path), applies ``--set section.key=value`` overrides
and writes plain CSV or JSON.  CSV files start with a ``# config_sha256=``
comment line; JSON files carry the hash and the resolved configuration.

Exit status: 0 on success, 1 for physics or solver failures, 2 for
configuration and usage errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .atomic import FieldVector
from .config import ExperimentConfig, load_config
from .exceptions import ConfigError, DomainError, MCPTError
from .nulling import CoilSystem, MeasurementModel, NullingProtocol, axis_probe_models, null_search
from .observe import dip_metrics, scan_field, sensitivity
from .solve import decay_rate_vs_field, evolve, liouvillian_spectrum, slowest_bright_mode, spectrum_csv
from .toymodel import ToyParams, toy_fluorescence_vs_delta

EXIT_OK, EXIT_PHYSICS, EXIT_CONFIG = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _emit(text: str, path: str | None):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _csv(cfg: ExperimentConfig, body: str) -> str:
    return f"# config_sha256={cfg.hash}\n" + body


def _json(cfg: ExperimentConfig, payload: dict) -> str:
    doc = {"config_sha256": cfg.hash, "config": cfg.to_dict(), **payload}
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def _sidecar(out: str | None, suffix: str) -> str | None:
    if out is None or out == "-":
        return None
    return str(Path(out).with_suffix(suffix))


def _axis_arg(text):
    named = {"x": (1.0, 0.0, 0.0), "y": (0.0, 1.0, 0.0), "z": (0.0, 0.0, 1.0)}
    if text in named:
        return named[text]
    raise argparse.ArgumentTypeError("axis must be x, y or z")


def _field(cfg: ExperimentConfig, B: float | None) -> FieldVector:
    if B is None:
        return FieldVector(*cfg["field"]["vector"])
    return FieldVector.along(cfg["field"]["axis"], B)


# -- subcommands -------------------------------------------------------------


def cmd_scan(cfg: ExperimentConfig, args) -> int:
    if args.detect:
        cfg = cfg.with_overrides([f"detection.channel={args.detect}"])
    f = cfg["field"]
    lo = f["from"] if args.from_ is None else args.from_
    hi = f["to"] if args.to is None else args.to
    n = f["points"] if args.points is None else args.points
    if n < 2 or not hi > lo:
        raise _UsageError("scan needs --to > --from and at least two points")
    axis = f["axis"] if args.axis is None else args.axis
    grid = np.linspace(lo, hi, n)
    scan = scan_field(cfg.ion_model(), axis, grid, cfg.detection(), derivative=not args.no_derivative, threads=args.threads, params=cfg.to_dict())
    _emit(_csv(cfg, scan.to_csv()), args.out)
    side = _sidecar(args.out, ".json")
    if side:
        payload = scan.to_dict()
        payload.pop("params")
        try:
            m = dip_metrics(scan)
            payload["dip"] = {"fwhm_gauss": m.fwhm, "min_rate": m.min_rate, "max_slope": m.max_slope, "max_slope_B": m.max_slope_B}
        except DomainError as exc:
            payload["dip"] = {"error": str(exc)}
        Path(side).write_text(_json(cfg, payload))
    return EXIT_OK


def cmd_spectrum(cfg: ExperimentConfig, args) -> int:
    model = cfg.ion_model()
    B = _field(cfg, args.B)
    modes = liouvillian_spectrum(model.liouvillian(B), model.initial_state(), cfg["solver"]["cluster_tol"])
    _emit(_csv(cfg, spectrum_csv(modes, model.basis)), args.out)
    side = _sidecar(args.out, ".json")
    if side:
        dark_tol = cfg["solver"]["dark_tol"] * model.data.gamma["P1/2"]
        bright = slowest_bright_mode(modes, dark_tol, model.basis)
        payload = {
            "field_gauss": B.as_array().tolist(),
            "dark_modes": sum(abs(m.eigenvalue.real) <= dark_tol for m in modes),
            "slowest_bright": {"lifetime_s": bright.lifetime, "weights": bright.weights},
        }
        if args.decay:
            s = cfg["spectrum"]
            grid = np.linspace(s["decay_from"], s["decay_to"], s["decay_points"])
            grid = np.union1d(grid, np.geomspace(s["fit_from"], s["fit_to"], 6))
            curve = decay_rate_vs_field(model, grid, cfg["field"]["axis"], dark_tol, (s["fit_from"], s["fit_to"]))
            payload["decay"] = {"B_gauss": curve.B.tolist(), "rate_per_s": curve.rate.tolist(), "exponent": curve.exponent}
        Path(side).write_text(_json(cfg, payload))
    return EXIT_OK


def cmd_evolve(cfg: ExperimentConfig, args) -> int:
    model = cfg.ion_model()
    e = cfg["evolve"]
    t_max = e["t_max"] if args.t_max is None else args.t_max
    times = np.linspace(0.0, t_max, e["points"] if args.points is None else args.points)
    B = _field(cfg, args.B)
    ev = evolve(model.liouvillian(B), model.initial_state(), times)
    labels = [t.label for t in model.basis.terms]
    lines = ["t_s," + ",".join(f"pop_{lbl.replace('/', '')}" for lbl in labels)]
    for t, rho in zip(ev.times, ev.states):
        lines.append(repr(float(t)) + "," + ",".join(repr(model.population(rho, lbl)) for lbl in labels))
    _emit(_csv(cfg, "\n".join(lines) + "\n"), args.out)
    side = _sidecar(args.out, ".json")
    if side:
        Path(side).write_text(_json(cfg, {"field_gauss": B.as_array().tolist(), "used_expm": ev.used_expm}))
    return EXIT_OK


def cmd_sensitivity(cfg: ExperimentConfig, args) -> int:
    sigma_sq = cfg["detection"]["noise_variance"] if args.sigma_sq is None else args.sigma_sq
    if sigma_sq < 0:
        raise _UsageError("--sigma-sq must be non-negative")
    slope = args.slope
    source = "argument"
    if slope is None:
        f = cfg["field"]
        scan = scan_field(cfg.ion_model(), f["axis"], cfg.field_grid(), cfg.detection(), threads=args.threads)
        slope = dip_metrics(scan).max_slope
        source = "scan"
    res = sensitivity(slope, math.sqrt(sigma_sq))
    payload = {
        "sigma_sq": sigma_sq,
        "slope_counts_per_s_per_gauss": slope,
        "slope_source": source,
        "gauss_per_rthz": res.gauss_per_rthz,
        "pT_per_rthz": res.pT_per_rthz,
    }
    text = f"sensitivity: {res.pT_per_rthz:.1f} pT/sqrt(Hz) = {res.gauss_per_rthz:.4g} G/sqrt(Hz) (slope {slope:.4g} counts/s/G, sigma^2 {sigma_sq:g})\n"
    if args.out:
        Path(args.out).write_text(_json(cfg, payload))
    sys.stdout.write(text)
    return EXIT_OK


def cmd_null(cfg: ExperimentConfig, args) -> int:
    n = cfg["nulling"]
    seed = n["seed"] if args.seed is None else args.seed
    coils = CoilSystem(np.array(n["calibration"]).reshape(3, 3), FieldVector(*n["offset"]), n["current_resolution"])
    meas = MeasurementModel(n["integration_time"], seed, n["dark_count_rate"])
    protocol = NullingProtocol(tuple(n["half_widths"]), n["points"], n["fit_fraction"], n["max_sweeps"], n["tolerance"], n["current_limit"])
    model = cfg.ion_model()
    if n["probe_polarization"] == "per_axis":
        model = axis_probe_models(model)
    res = null_search(coils, model, cfg.detection(), meas, protocol)
    result = json.loads(res.to_json())
    result["residual_history_gauss"] = res.residual_history
    if args.log:
        Path(args.log).write_text(res.log_lines())
    _emit(_json(cfg, {"seed": seed, "result": result}), args.out)
    return EXIT_OK


def cmd_toy(cfg: ExperimentConfig, args) -> int:
    t = cfg["toy"]
    p = ToyParams(t["delta_L"], t["delta_P"], 0.0, t["omega_L"], t["omega_P"], t["gamma"], tuple(t["branching"]))
    grid = np.linspace(t["delta_from"], t["delta_to"], t["points"])
    if t["points"] % 2 == 1 or 0.0 not in grid:
        grid = np.union1d(grid, [0.0])
    curve = toy_fluorescence_vs_delta(p, grid)
    _emit(_csv(cfg, curve.to_csv()), args.out)
    return EXIT_OK


def cmd_validate(cfg: ExperimentConfig, args) -> int:
    cfg.ion_model()
    cfg.detection()
    sys.stdout.write(f"ok {cfg.source} config_sha256={cfg.hash}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file or bundled preset name")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override one config value")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--seed", type=int, help="random seed for simulated counts")
    common.add_argument("--threads", type=int, default=1)

    parser = _Parser(prog="mcpt", description="Magnetically induced dark-state simulations of a trapped Ba+ ion.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("scan", parents=[common], help="fluorescence against field")
    p.add_argument("--detect", choices=("455", "493"))
    p.add_argument("--axis", type=_axis_arg)
    p.add_argument("--from", dest="from_", type=float)
    p.add_argument("--to", type=float)
    p.add_argument("--points", type=int)
    p.add_argument("--no-derivative", action="store_true")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("spectrum", parents=[common], help="Liouvillian spectrum table")
    p.add_argument("--B", type=float, help="field magnitude along the config axis (G)")
    p.add_argument("--decay", action="store_true", help="add the bright-mode decay curve to the JSON side file")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("evolve", parents=[common], help="term populations against time")
    p.add_argument("--B", type=float)
    p.add_argument("--t-max", type=float)
    p.add_argument("--points", type=int)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("sensitivity", parents=[common], help="shot-noise limited field resolution")
    p.add_argument("--sigma-sq", type=float)
    p.add_argument("--slope", type=float)
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("null", parents=[common], help="simulate three-axis field nulling")
    p.add_argument("--log", help="JSON-lines scan log")
    p.set_defaults(func=cmd_null)

    p = sub.add_parser("toy", parents=[common], help="four-level model scan")
    p.set_defaults(func=cmd_toy)

    p = sub.add_parser("validate-config", parents=[common], help="check a config file")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config).with_overrides(args.set)
        return args.func(cfg, args)
    except (ConfigError, _UsageError) as exc:
        sys.stderr.write(f"mcpt: configuration error: {exc}\n")
        return EXIT_CONFIG
    except MCPTError as exc:
        diag = getattr(exc, "diagnostics", None)
        sys.stderr.write(f"mcpt: {type(exc).__name__}: {exc}\n")
        if diag:
            sys.stderr.write(f"mcpt: diagnostics: {json.dumps(diag, default=str)}\n")
        return EXIT_PHYSICS


if __name__ == "__main__":
    sys.exit(main())
