"""Command-line entry point.

Commands: ``kernel``, ``simulate``, ``converge``, ``universality``,
``tightness``. Settings come from a JSON config file, and command-line flags
override file keys. Exit codes: 0 success, 1 configuration error, 2 numerical
failure, 3 I/O failure.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import jsonschema

from . import __version__
from .distributions import WeightDistribution
from .errors import ConfigError, InsufficientDataError, MissingLayerError, NumericalError, ResourceError
from .experiments import (
    ExperimentGrid,
    WidthLadder,
    convergence_study,
    kernel_report,
    tightness_study,
    universality_study,
)
from .network import InputSet, NetworkConfig, default_inputs, sample_ensemble
from .nonlinearity import get as get_nonlinearity
from .reporting import rows_to_csv, kernels_to_csv, write_kernels, write_report

log = logging.getLogger("nngp_limit")

COMMANDS = ("kernel", "simulate", "converge", "universality", "tightness")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3

_positive_int = {"type": "integer", "minimum": 1}
_int_list = {"type": "array", "items": _positive_int, "minItems": 1}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["L", "dims"],
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "L": _positive_int,
        "dims": _int_list,
        "C_W": {"type": "number"},
        "C_b": {"type": "number"},
        "nonlinearity": {"type": "string"},
        "nonlinearity_params": {"type": "object", "additionalProperties": {"type": "number"}},
        "weights": {
            "oneOf": [
                {"type": "string"},
                {"type": "object", "additionalProperties": False,
                 "properties": {"first": {"type": "string"}, "rest": {"type": "string"}}},
            ]
        },
        "inputs": {
            "oneOf": [
                {"type": "string"},
                {"type": "array", "minItems": 1, "items": {"type": "array", "items": {"type": "number"}}},
                {"type": "object", "additionalProperties": False, "required": ["points"],
                 "properties": {"points": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
                                "labels": {"type": "array", "items": {"type": "string"}}}},
            ]
        },
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "threads": _positive_int,
        "quad_order": {"type": "integer", "minimum": 2},
        "out": {"type": "string"},
        "study": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "widths": _int_list,
                "trials": {"oneOf": [_positive_int, _int_list]},
                "n_probes": _positive_int,
                "mc_trials": {"type": "integer", "minimum": 100},
                "cross_fn": {"enum": ["identity", "square", "tanh", "abs"]},
                "dists": {"type": "array", "items": {"type": "string"}, "minItems": 2},
                "test_functions": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                "inner_draws": _positive_int,
                "draws_per_width": _positive_int,
                "bootstrap": _positive_int,
                "layers": _int_list,
                "grid": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"enum": ["circle", "box"]},
                        "points": _positive_int,
                        "radius": {"type": "number", "exclusiveMinimum": 0},
                        "lower": {"type": "array", "items": {"type": "number"}},
                        "upper": {"type": "array", "items": {"type": "number"}},
                        "resolution": _positive_int,
                    },
                },
            },
        },
    },
}

DEFAULTS = {
    "C_W": 1.0,
    "C_b": 0.0,
    "nonlinearity": "relu",
    "nonlinearity_params": {},
    "weights": {"first": "gaussian", "rest": "gaussian"},
    "seed": 0,
    "quad_order": 64,
}

STUDY_DEFAULTS = {
    "widths": [32, 64, 128, 256, 512],
    "trials": 2000,
    "n_probes": 32,
    "mc_trials": 2000,
    "cross_fn": "square",
    "dists": ["gaussian", "rademacher", "uniform"],
    "test_functions": ["gauss_bump", "tanh_product"],
    "inner_draws": 8,
    "draws_per_width": 200,
    "bootstrap": 200,
    "grid": {"kind": "circle", "points": 50, "radius": 1.0},
}


@dataclass
class RunConfig:
    """A fully validated run. ``resolved`` is the config with every default filled in;
    written to the report sidecar it reproduces the run."""

    command: Optional[str]
    network: NetworkConfig
    inputs: InputSet
    study: dict
    seed: int
    threads: int
    quad_order: int
    out: Optional[str]
    resolved: dict = field(default_factory=dict)


def _schema_error_message(err: jsonschema.ValidationError) -> str:
    where = ".".join(str(p) for p in err.absolute_path) or "<root>"
    if err.validator == "additionalProperties":
        extra = set(err.instance) - set(err.schema.get("properties", {}))
        return f"unknown key(s) {sorted(extra)} at {where}"
    return f"invalid value at {where}: {err.message}"


def load_config_dict(path) -> dict:
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: JSON parse error: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return raw


def resolve_config(raw: dict, base_dir: Optional[Path] = None) -> RunConfig:
    """Validate a config dictionary, fill defaults, and build the run objects."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigError("; ".join(_schema_error_message(e) for e in errors))
    cfg = copy.deepcopy(DEFAULTS)
    cfg.update(copy.deepcopy(raw))
    if isinstance(cfg["weights"], str):
        cfg["weights"] = {"first": cfg["weights"], "rest": cfg["weights"]}
    cfg["weights"] = {**DEFAULTS["weights"], **cfg["weights"]}
    cfg["study"] = {**STUDY_DEFAULTS, **cfg.get("study", {})}
    cfg.setdefault("threads", os.cpu_count() or 1)

    if cfg["C_W"] <= 0:
        raise ConfigError("C_W must be positive")
    if cfg["C_b"] < 0:
        raise ConfigError("C_b must be non-negative")
    if len(cfg["dims"]) != cfg["L"] + 2:
        raise ConfigError(f"dims must have length L+2 = {cfg['L'] + 2}, got {len(cfg['dims'])}")
    nl = get_nonlinearity(cfg["nonlinearity"], **cfg["nonlinearity_params"])
    network = NetworkConfig(
        cfg["L"], tuple(cfg["dims"]), float(cfg["C_W"]), float(cfg["C_b"]), nl,
        WeightDistribution.from_name(cfg["weights"]["first"]),
        WeightDistribution.from_name(cfg["weights"]["rest"]),
    )
    for name in cfg["study"]["dists"]:
        WeightDistribution.from_name(name)

    inputs = _resolve_inputs(cfg.get("inputs"), base_dir)
    if inputs.dim != network.n_in:
        raise ConfigError(f"inputs have dimension {inputs.dim} but dims[0] = {network.n_in}")
    # echo inputs explicitly so the resolved config does not depend on external files
    cfg["inputs"] = {"points": inputs.points.tolist(), "labels": list(inputs.labels)}
    return RunConfig(cfg.get("command"), network, inputs, cfg["study"], int(cfg["seed"]),
                     int(cfg["threads"]), int(cfg["quad_order"]), cfg.get("out"), cfg)


def _resolve_inputs(value, base_dir: Optional[Path]) -> InputSet:
    if value is None:
        return default_inputs()
    if isinstance(value, str):
        path = Path(value)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            raise ConfigError(f"inputs file not found: {path}")
        return InputSet.from_csv(path)
    if isinstance(value, dict):
        return InputSet(value["points"], value.get("labels"))
    return InputSet(value)


def parse_config(path, overrides: Optional[dict] = None) -> RunConfig:
    """Read, merge (``overrides`` win over file keys), validate and resolve a JSON config."""
    raw = load_config_dict(path)
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return resolve_config(raw, Path(path).parent)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nngp-limit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "kernel": "compute the limiting kernels K^(2)..K^(L+1)",
        "simulate": "sample finite-width networks and store pre-activations",
        "converge": "width-ladder convergence study",
        "universality": "compare weight distributions in layers >= 2",
        "tightness": "empirical Lipschitz ratio and sup norm over a grid",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--inputs", help="CSV of input points (overrides the config)")
        p.add_argument("--out", help="output path (CSV to stdout if omitted)")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--threads", type=int, help="worker threads")
        p.add_argument("--quad-order", type=int, dest="quad_order", help="Gauss-Hermite order")
        p.add_argument("-q", "--quiet", action="store_true", help="log warnings only")
    return parser


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)


def execute(rc: RunConfig, command: str) -> None:
    net, study, out = rc.network, rc.study, rc.out
    resolved = {**rc.resolved, "command": command}
    if command == "kernel":
        kernels = kernel_report(net, rc.inputs, rc.quad_order, rc.seed, study["mc_trials"])
        if out:
            write_kernels(kernels, out, resolved, rc.seed, net.config_hash())
        _emit(kernels_to_csv(kernels), out)
        return
    if command == "simulate":
        if not out:
            raise ConfigError("simulate needs --out for the binary ensemble file")
        M = study["trials"] if isinstance(study["trials"], int) else study["trials"][0]
        layers = study.get("layers", list(range(1, net.depth + 2)))
        ens = sample_ensemble(net, rc.inputs, M, layers, rc.seed, rc.threads)
        ens.save(out)
        meta_path = Path(out).with_name(Path(out).name + ".json")
        meta = json.loads(meta_path.read_text())
        meta["run_config"] = resolved
        meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return
    ladder = None
    if command in ("converge", "universality"):
        ladder = WidthLadder(tuple(study["widths"]), study["trials"] if isinstance(study["trials"], int)
                             else tuple(study["trials"]))
    if command == "converge":
        report = convergence_study(net, rc.inputs, ladder, rc.seed, rc.quad_order, study["n_probes"],
                                   study["mc_trials"], study["cross_fn"], threads=rc.threads)
    elif command == "universality":
        dists = [WeightDistribution.from_name(d) for d in study["dists"]]
        report = universality_study(net, dists, rc.inputs, ladder, rc.seed, study["test_functions"],
                                    study["inner_draws"], rc.threads)
    else:
        g = study["grid"]
        if g["kind"] == "circle":
            grid = ExperimentGrid.circle(g.get("points", 50), g.get("radius", 1.0))
        else:
            if not {"lower", "upper", "resolution"} <= set(g):
                raise ConfigError("box grid needs lower, upper and resolution")
            grid = ExperimentGrid.box(g["lower"], g["upper"], g["resolution"])
        if grid.points.shape[1] != net.n_in:
            raise ConfigError(f"grid dimension {grid.points.shape[1]} does not match dims[0] = {net.n_in}")
        report = tightness_study(net, grid, study["widths"], study["draws_per_width"], rc.seed,
                                 study["bootstrap"], rc.threads)
    if out:
        write_report(report, out, resolved)
    _emit(rows_to_csv(report.rows()), out)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {"inputs": args.inputs, "out": args.out, "seed": args.seed,
                 "threads": args.threads, "quad_order": args.quad_order}
    try:
        if args.inputs is not None:
            overrides["inputs"] = str(Path(args.inputs).resolve())
        rc = parse_config(args.config, overrides)
        if rc.command is not None and rc.command != args.command:
            log.info("config names command %r; running %r from the command line", rc.command, args.command)
        log.info("resolved config: %s", json.dumps(rc.resolved, sort_keys=True))
        execute(rc, args.command)
    except (ConfigError, InsufficientDataError, MissingLayerError, ResourceError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return EXIT_IO
    return EXIT_OK


def main() -> None:
    sys.exit(run())
