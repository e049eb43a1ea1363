"""Command-line front end.

    geophase charge --builtin chebyshev_contact --param n=4 --radius 0.4
    geophase classify --builtin diabolical
    geophase field --config run.json --output field.csv

Reports are JSON with sorted keys and floats printed as %.12e, so identical
inputs give byte-identical files.  Exit codes: 0 success, 1 usage or config
error, 2 numerical or I/O failure; errors go to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from typing import Any

import jsonschema
import numpy as np

from . import __version__
from .errors import ConfigError, GeophaseError, NumericalError, UsageError
from .integrate import QuadratureSettings, charge_from_flux, circle_loop, circulation, axis_vector
from .model import BUILTINS, EFieldModel, classify_contact, eval_e_jacobian, eval_s, model_from_spec
from .spectral import EPS_D, EPS_M, _connection, _curvature
from .strings import charge_from_windings, full_report

COMMANDS = ("charge", "flux", "windings", "circulate", "field", "classify", "list-models")
CSV_COLUMNS = ("x", "y", "z", "Ax", "Ay", "Az", "Bx", "By", "Bz", "E_minus", "E_plus", "skipped")


def _schema(name: str) -> dict:
    text = resources.files("geophase").joinpath("schemas", name).read_text(encoding="utf-8")
    return json.loads(text)


CONFIG_SCHEMA = _schema("config.schema.json")
REPORT_SCHEMA = _schema("report.schema.json")


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------

@dataclass
class RunConfig:
    model: dict
    radius: float = 0.5
    center: tuple = (0.0, 0.0, 0.0)
    settings: QuadratureSettings = field(default_factory=QuadratureSettings)
    grid_n: int = 128
    loop: dict = field(default_factory=lambda: {"delta": 0.1, "z0": 0.0, "axis": "z",
                                                "orientation": -1})
    field: dict = field(default_factory=lambda: {"min": -1.0, "max": 1.0, "steps": 5})
    output: str | None = None

    def build_model(self) -> EFieldModel:
        return model_from_spec(self.model)


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path)


def validate_config(data: Any) -> None:
    """Raise ConfigError at the JSON pointer of the first schema violation."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: (list(e.absolute_path), e.message))
    if not errors:
        return
    err = errors[0]
    pointer = _pointer(err.absolute_path)
    if err.validator == "required":
        missing = [k for k in err.validator_value if k not in err.instance]
        if missing:
            pointer += f"/{missing[0]}"
            raise ConfigError(f"missing required key {missing[0]!r}", pointer)
    raise ConfigError(err.message, pointer)


def _config_from_dict(data: dict, output=None) -> RunConfig:
    validate_config(data)
    settings = QuadratureSettings(
        abs_tol=data.get("abs_tol", 1e-6),
        rel_tol=data.get("rel_tol", 1e-8),
        max_depth=data.get("max_depth", 12),
        initial_panels=data.get("initial_panels", 8),
        workers=data.get("threads", 1),
    )
    cfg = RunConfig(model=data["model"], settings=settings, output=output)
    cfg.radius = float(data.get("radius", cfg.radius))
    cfg.center = tuple(float(c) for c in data.get("center", cfg.center))
    cfg.grid_n = int(data.get("grid_n", cfg.grid_n))
    cfg.loop = {**cfg.loop, **data.get("loop", {})}
    cfg.field = {**cfg.field, **data.get("field", {})}
    return cfg


def _read_raw(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"invalid JSON in {path}: {err}") from None
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    validate_config(data)  # the file must be valid on its own, before flag overrides
    return data


def load_config(path: str) -> RunConfig:
    """Validated RunConfig from a JSON file, defaults filled in."""
    return _config_from_dict(_read_raw(path))


def _parse_param(text: str):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise UsageError(f"--param expects key=value, got {text!r}")
    try:
        number = float(value)
    except ValueError:
        raise UsageError(f"--param {key}: {value!r} is not a number") from None
    return key.strip(), int(number) if number.is_integer() else number


def _triple(text: str):
    parts = [float(p) for p in text.split(",")]
    if len(parts) == 1:
        return parts[0]
    if len(parts) != 3:
        raise UsageError(f"expected one number or three comma-separated numbers, got {text!r}")
    return parts


def _axis_arg(text: str):
    if text in ("x", "y", "z"):
        return text
    parts = _triple(text)
    if not isinstance(parts, list):
        raise UsageError(f"axis must be x, y, z or three numbers, got {text!r}")
    return parts


def config_from_args(args) -> RunConfig:
    """Config file (if any) overlaid with command-line flags, then validated."""
    data = _read_raw(args.config) if args.config else {}
    exprs = {k: getattr(args, k) for k in ("ex", "ey", "ez", "s") if getattr(args, k) is not None}
    if args.builtin and exprs:
        raise UsageError("--builtin cannot be combined with --ex/--ey/--ez/--s")
    if args.builtin:
        data["model"] = {"builtin": args.builtin}
    elif exprs:
        base = data.get("model", {})
        data["model"] = {**({} if "builtin" in base else base), **exprs}
    if args.param:
        model = data.setdefault("model", {})
        model["params"] = {**model.get("params", {}), **dict(_parse_param(p) for p in args.param)}
    if "model" not in data:
        raise UsageError("no model given: use --builtin, --ex/--ey/--ez or --config")
    flags = {
        "radius": args.radius, "abs_tol": args.abs_tol, "rel_tol": args.rel_tol,
        "max_depth": args.max_depth, "initial_panels": args.initial_panels,
        "grid_n": args.grid_n, "threads": args.threads,
    }
    data.update({k: v for k, v in flags.items() if v is not None})
    loop = {k: getattr(args, k, None) for k in ("delta", "z0", "axis", "orientation")}
    loop = {k: v for k, v in loop.items() if v is not None}
    if loop:
        data["loop"] = {**data.get("loop", {}), **loop}
    grid = {"min": getattr(args, "min", None), "max": getattr(args, "max", None),
            "steps": getattr(args, "steps", None)}
    grid = {k: v for k, v in grid.items() if v is not None}
    if grid:
        data["field"] = {**data.get("field", {}), **grid}
    return _config_from_dict(data, output=args.output)


# --------------------------------------------------------------------------
# Output
# --------------------------------------------------------------------------

def _fmt_float(v: float) -> str:
    if not math.isfinite(v):
        return "null"
    return "%.12e" % v


def to_json(obj, indent: int = 2, _level: int = 0) -> str:
    """Deterministic JSON: sorted keys, floats as %.12e, integers verbatim."""
    pad, inner = " " * (indent * _level), " " * (indent * (_level + 1))
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {to_json(obj[k], indent, _level + 1)}"
                 for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [inner + to_json(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def emit_report(report, fmt: str = "json", destination=None) -> str:
    """Render ``report`` (dict for json, rows for csv) and write it to ``destination``."""
    if fmt == "json":
        text = to_json(report) + "\n"
    elif fmt == "csv":
        text = report
    else:
        raise UsageError(f"unknown report format {fmt!r}")
    if destination is None:
        sys.stdout.write(text)
    else:
        with open(destination, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def field_csv(model: EFieldModel, lo, hi, steps, eps_d: float = EPS_D) -> str:
    """A, B and both energies on a box grid; on-string rows keep their place, marked skipped."""
    lo, hi = np.broadcast_to(lo, 3).astype(float), np.broadcast_to(hi, 3).astype(float)
    steps = np.broadcast_to(steps, 3).astype(int)
    axes = [np.linspace(lo[i], hi[i], steps[i]) for i in range(3)]
    r = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    e, J = eval_e_jacobian(model, r)
    s = eval_s(model, r)
    norm = np.linalg.norm(e, axis=-1)
    rho2 = e[:, 0] ** 2 + e[:, 1] ** 2
    regular = norm > EPS_M
    off_string = regular & (rho2 > eps_d ** 2 * norm ** 2)
    A = np.full_like(r, np.nan)
    B = np.full_like(r, np.nan)
    if off_string.any():
        A[off_string] = _connection(e[off_string], J[off_string], eps_d)
    if regular.any():
        B[regular] = _curvature(e[regular], J[regular])
    rows = np.column_stack([r, A, B, s - norm, s + norm])
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for row, skip in zip(rows, ~off_string):
        buf.write(",".join("%.12e" % v for v in row) + f",{int(skip)}\n")
    return buf.getvalue()


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def _base(command: str, model: EFieldModel | None = None) -> dict:
    out = {"command": command, "version": __version__}
    if model is not None:
        out["model_echo"] = model.echo()
    return out


def cmd_charge(cfg: RunConfig) -> dict:
    model = cfg.build_model()
    report = full_report(model, cfg.radius, cfg.settings, cfg.grid_n, cfg.center)
    return {**_base("charge", model), **report.to_dict()}


def cmd_flux(cfg: RunConfig) -> dict:
    model = cfg.build_model()
    res = charge_from_flux(model, cfg.radius, cfg.settings, cfg.center)
    return {
        **_base("flux", model),
        "g_flux": res.charge,
        "flux": res.flux,
        "flux_error": res.error,
        "quantization_residual": res.quantization_residual,
        "tiles": res.tiles,
        "min_norm": res.min_norm,
        "settings": {**cfg.settings.echo(), "radius": cfg.radius, "center": list(cfg.center)},
    }


def cmd_windings(cfg: RunConfig) -> dict:
    model = cfg.build_model()
    res = charge_from_windings(model, cfg.radius, cfg.grid_n, cfg.center,
                               workers=cfg.settings.workers)
    return {
        **_base("windings", model),
        "g_winding": str(res.g),
        "g_winding_float": float(res.g),
        "piercings": [p.to_dict() for p in res.piercings],
        "diagnostics": res.diagnostics,
        "settings": {"radius": cfg.radius, "grid_n": cfg.grid_n, "center": list(cfg.center)},
    }


def cmd_circulate(cfg: RunConfig) -> dict:
    model = cfg.build_model()
    lp = cfg.loop
    loop = circle_loop(float(lp["delta"]), float(lp["z0"]), lp["axis"], int(lp["orientation"]))
    res = circulation(model, loop, cfg.settings)
    return {
        **_base("circulate", model),
        "delta_phi": res.value,
        "delta_phi_over_2pi": res.value / (2 * math.pi),
        "error": res.error,
        "min_string_proxy": res.min_string_proxy,
        "loop": {"delta": float(lp["delta"]), "z0": float(lp["z0"]),
                 "axis": [float(a) for a in axis_vector(lp["axis"])],
                 "orientation": int(lp["orientation"])},
        "settings": cfg.settings.echo(),
    }


def cmd_classify(cfg: RunConfig) -> dict:
    model = cfg.build_model()
    lam, verdict = classify_contact(model)
    return {**_base("classify", model), "lambda": lam, "class": verdict}


def cmd_list_models() -> dict:
    return {**_base("list-models"), "models": BUILTINS}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="geophase", description="Berry curvature, phases and monopole charges "
                     "of two-level Hamiltonians s + e.sigma")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    common = _Parser(add_help=False)
    g = common.add_argument_group("model")
    g.add_argument("--config", help="JSON run configuration; flags override its values")
    g.add_argument("--builtin", help="built-in family name (see list-models)")
    g.add_argument("--param", action="append", metavar="KEY=VALUE", help="model parameter")
    for name in ("ex", "ey", "ez", "s"):
        g.add_argument(f"--{name}", help=f"expression for {name}")
    n = common.add_argument_group("numerics")
    n.add_argument("--radius", type=float, help="sphere radius (default 0.5)")
    n.add_argument("--abs-tol", type=float)
    n.add_argument("--rel-tol", type=float)
    n.add_argument("--max-depth", type=int)
    n.add_argument("--initial-panels", type=int)
    n.add_argument("--grid-n", type=int, help="piercing scan resolution (default 128)")
    n.add_argument("--threads", type=int, help="worker threads; results do not depend on it")
    common.add_argument("--output", "-o", help="output file (default stdout)")

    helps = {
        "charge": "charge by surface flux and by winding sum",
        "flux": "curvature flux through the sphere",
        "windings": "string piercings and their winding numbers",
        "circulate": "geometric phase around a circle",
        "field": "CSV dump of A, B and energies on a grid",
        "classify": "contact determinant and generic/constrained verdict",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, parents=[common], help=text)
        if name == "circulate":
            p.add_argument("--delta", type=float, help="circle radius (default 0.1)")
            p.add_argument("--z0", type=float, help="centre along the axis (default 0)")
            p.add_argument("--axis", type=_axis_arg, help="x, y, z or ax,ay,az (default z)")
            p.add_argument("--orientation", type=int, choices=(-1, 1),
                           help="+1 counterclockwise seen from the axis tip (default -1)")
        if name == "field":
            p.add_argument("--min", type=_triple, help="lower corner, v or x,y,z (default -1)")
            p.add_argument("--max", type=_triple, help="upper corner (default 1)")
            p.add_argument("--steps", type=int, help="grid points per axis (default 5)")
    sub.add_parser("list-models", help="built-in model catalog")
    return parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _error_exit(err: Exception, code: int) -> int:
    payload = err.to_dict() if isinstance(err, GeophaseError) else {
        "error": "io_error", "message": str(err)}
    payload["exit_code"] = code
    sys.stderr.write(to_json(payload) + "\n")
    return code


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "list-models":
            emit_report(cmd_list_models())
            return 0
        cfg = config_from_args(args)
        if args.command == "field":
            fd = cfg.field
            text = field_csv(cfg.build_model(), fd["min"], fd["max"], fd["steps"])
            emit_report(text, "csv", cfg.output)
            return 0
        handler = {"charge": cmd_charge, "flux": cmd_flux, "windings": cmd_windings,
                   "circulate": cmd_circulate, "classify": cmd_classify}[args.command]
        emit_report(handler(cfg), "json", cfg.output)
        return 0
    except UsageError as err:
        return _error_exit(err, 1)
    except (NumericalError, OSError) as err:
        return _error_exit(err, 2)


def main() -> None:
    sys.exit(run())
