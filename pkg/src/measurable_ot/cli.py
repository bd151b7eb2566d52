"""measurable-ot: solve | psi | dyadic | couple | gen.

Exit codes: 0 success, 2 config error, 3 instance or solver error,
4 a checked bound failed.
"""
from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

import jsonschema
import numpy as np

from . import coupling, dyadic, ot, serialize
from .measures import SAMPLERS, MeasureError, ParamFamily, as_fraction, make_discrete, sample_cloud

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_ASSERT = 0, 2, 3, 4


class ConfigError(Exception):
    pass


_REF = {"oneOf": [{"type": "string"}, serialize.MEASURE_SCHEMA]}

SOLVE_SCHEMA = {
    "type": "object",
    "properties": {"mu": _REF, "nu": _REF, "p": {"type": "number", "exclusiveMinimum": 0}},
    "required": ["mu", "nu", "p"],
    "additionalProperties": False,
}

DYADIC_SCHEMA = {
    "type": "object",
    "properties": {
        "family": {"oneOf": [{"type": "string"}, serialize.FAMILY_SCHEMA]},
        "K": {"type": "integer", "minimum": 0, "maximum": dyadic.MAX_LEVEL},
    },
    "required": ["family", "K"],
    "additionalProperties": False,
}

_DIST = {
    "type": "object",
    "properties": {
        "type": {"enum": list(SAMPLERS)},
        "low": {"type": "array", "items": {"type": "number"}},
        "high": {"type": "array", "items": {"type": "number"}},
        "mean": {"type": "array", "items": {"type": "number"}},
        "std": {"type": ["number", "array"]},
        "centers": {"type": "array"},
        "weight": {"type": "number", "minimum": 0, "maximum": 1},
    },
    "required": ["type"],
    "additionalProperties": False,
}

_RANGE = {
    "type": "object",
    "properties": {"low": {"type": "number"}, "high": {"type": "number"}},
    "required": ["low", "high"],
    "additionalProperties": False,
}

GEN_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "kind": {"const": "measure"},
                "dist": _DIST,
                "n": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
            },
            "required": ["kind", "dist", "n", "seed"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "family"},
                "dist": _DIST,
                "n": {"type": "integer", "minimum": 1},
                "params": {"type": "integer", "minimum": 1, "maximum": 64},
                "mE": {"type": ["number", "string"]},
                "masses": {"type": "array", "items": {"type": ["number", "string"]}},
                "target": {"enum": ["affine", "independent"]},
                "shift": _RANGE,
                "scale": _RANGE,
                "p": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer", "minimum": 0},
            },
            "required": ["kind", "dist", "n", "params", "seed"],
            "additionalProperties": False,
        },
    ]
}


# --- helpers ----------------------------------------------------------------------


def _load_config(path: str, schema: dict) -> tuple[dict, Path]:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        jsonschema.validate(cfg, schema)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config {path} invalid: {exc.message}") from exc
    return cfg, Path(path).resolve().parent


def _resolve(ref, base: Path, schema: dict) -> dict:
    if isinstance(ref, dict):
        return ref
    return _load_config(str(base / ref), schema)[0]


def _measure(ref, base: Path):
    try:
        return serialize.measure_from_dict(_resolve(ref, base, serialize.MEASURE_SCHEMA))
    except (MeasureError, KeyError) as exc:
        raise ConfigError(f"invalid measure: {exc}") from exc


def _write(out: Path, name: str, text: str):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / name, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _wants(args, kind: str) -> bool:
    return args.format in (kind, "both")


# --- commands -------------------------------------------------------------------


def cmd_solve(args) -> int:
    cfg, base = _load_config(args.config, SOLVE_SCHEMA)
    mu, nu = _measure(cfg["mu"], base), _measure(cfg["nu"], base)
    try:
        res = ot.analyse(mu, nu, cfg["p"], args.rational)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.out)
    if _wants(args, "json"):
        _write(out, "plan.json", _dumps(serialize.plan_to_dict(res.plan)))
    if _wants(args, "csv"):
        _write(out, "plan.csv", serialize.plan_to_csv(res.plan))
    print(f"value={res.plan.value} unique={str(res.unique).lower()} map={str(res.plan.is_map()).lower()}")
    return EXIT_OK


def cmd_psi(args) -> int:
    cfg, base = _load_config(args.config, SOLVE_SCHEMA)
    mu, nu = _measure(cfg["mu"], base), _measure(cfg["nu"], base)
    try:
        res = ot.analyse(mu, nu, cfg["p"], args.rational)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.out)
    edges = serialize.edges_to_list(res.psi)
    if _wants(args, "json"):
        _write(out, "psi.json", _dumps({"edges": edges, "unique": res.unique}))
    if _wants(args, "csv"):
        _write(out, "psi.csv", "i,j\n" + "".join(f"{i},{j}\n" for i, j in edges))
    print(f"edges={len(edges)} unique={str(res.unique).lower()}")
    return EXIT_OK


def cmd_dyadic(args) -> int:
    cfg, base = _load_config(args.config, DYADIC_SCHEMA)
    try:
        family = serialize.family_from_dict(_resolve(cfg["family"], base, serialize.FAMILY_SCHEMA))
    except (MeasureError, KeyError) as exc:
        raise ConfigError(f"invalid family: {exc}") from exc
    rep = dyadic.approximation_report(
        family, cfg["K"], allow_nonunique=args.allow_nonunique, rational=args.rational, threads=args.threads
    )
    out = Path(args.out)
    if _wants(args, "json"):
        _write(out, "dyadic_report.json", rep.to_json())
    if _wants(args, "csv"):
        _write(out, "dyadic_report.csv", rep.to_csv())
    if rep.flagged:
        print(f"WARNING: non-unique parameters used solver vertex: {', '.join(rep.flagged)}", file=sys.stderr)
    last = rep.errors[-1]
    print(
        f"K={rep.K} pushforward={rep.pushforward_ok} cauchy={rep.gaps_ok} "
        f"error_bound={rep.errors_ok} error_monotone={rep.monotone} error(K)={last['error']!r}"
    )
    return EXIT_OK if rep.bounds_ok else EXIT_ASSERT


def cmd_couple(args) -> int:
    cfg, _ = _load_config(args.config, serialize.COUPLING_SCHEMA)
    try:
        config = serialize.coupling_config_from_dict(cfg, threads=args.threads)
    except (MeasureError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    maps = coupling.transport_process(config.cov, 2.0, args.rational)
    rep = coupling.run_experiment(config, maps)
    out = Path(args.out)
    if _wants(args, "json"):
        _write(out, "coupling_report.json", rep.to_json())
    if _wants(args, "csv"):
        _write(out, "coupling_report.csv", rep.to_csv())
    print(
        f"lhs_terminal={rep.lhs_terminal:.6g}±{rep.lhs_terminal_se:.2g} lhs_sup={rep.lhs_sup:.6g} "
        f"rhs={rep.rhs:.6g} literal_bound_held={str(rep.literal_pass).lower()}"
    )
    return EXIT_OK if rep.hard_pass else EXIT_ASSERT


def _family_from_gen(cfg: dict) -> ParamFamily:
    count = cfg["params"]
    if "masses" in cfg:
        masses = [as_fraction(m) for m in cfg["masses"]]
        if len(masses) != count:
            raise ConfigError(f"masses needs {count} entries")
    else:
        total = as_fraction(cfg.get("mE", 1))
        masses = [total / count] * count
    if sum(masses, Fraction(0)) <= 0 or any(m < 0 for m in masses):
        raise ConfigError("masses must be nonnegative with positive total")
    shift = cfg.get("shift", {"low": 0.0, "high": 1.0})
    scale = cfg.get("scale", {"low": 1.0, "high": 1.0})
    if scale["low"] <= 0:
        raise ConfigError("scale must be positive")
    entries = []
    for k in range(count):
        rng = np.random.default_rng([cfg["seed"], k])
        mu = sample_cloud(cfg["dist"], cfg["n"], int(rng.integers(2**63)))
        if cfg.get("target", "affine") == "affine":
            s = rng.uniform(scale["low"], scale["high"])
            v = rng.uniform(shift["low"], shift["high"], size=mu.dim)
            nu = make_discrete(s * mu.points + v, mu.weights)
        else:
            nu = sample_cloud(cfg["dist"], cfg["n"], int(rng.integers(2**63)))
        entries.append((f"lam{k}", masses[k], mu, nu))
    return ParamFamily.build(entries, p=float(cfg.get("p", 2.0)))


def cmd_gen(args) -> int:
    cfg, _ = _load_config(args.config, GEN_SCHEMA)
    out = Path(args.out)
    try:
        if cfg["kind"] == "measure":
            mu = sample_cloud(cfg["dist"], cfg["n"], cfg["seed"])
            _write(out, "measure.json", _dumps(serialize.measure_to_dict(mu)))
            print(f"measure n={len(mu)} dim={mu.dim}")
        else:
            fam = _family_from_gen(cfg)
            _write(out, "family.json", _dumps(serialize.family_to_dict(fam)))
            print(f"family params={len(fam)} mE={fam.total_mass}")
    except (MeasureError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "psi": cmd_psi, "dyadic": cmd_dyadic, "couple": cmd_couple, "gen": cmd_gen}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="measurable-ot", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON config for the command")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--format", choices=["json", "csv", "both"], default="both")
    ap.add_argument("--allow-nonunique", action="store_true", help="use the solver vertex when the optimum is not unique")
    ap.add_argument("--rational", choices=["on", "off", "auto"], default="auto")
    ap.add_argument("--threads", type=int, default=1)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except dyadic.NonUniqueInstance as exc:
        print(f"instance error: {exc} (lambda={exc.label})", file=sys.stderr)
        return EXIT_SOLVER
    except coupling.NonUniqueStep as exc:
        print(f"instance error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
