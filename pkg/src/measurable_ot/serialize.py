"""JSON layouts for measures, plans, edge sets, families and coupling configs."""
from __future__ import annotations

import csv
import io
from fractions import Fraction

import numpy as np

from . import coupling
from .measures import DiscreteMeasure, MeasureError, ParamFamily, as_fraction, make_discrete

MEASURE_SCHEMA = {
    "type": "object",
    "properties": {
        "dim": {"type": "integer", "minimum": 1},
        "atoms": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "x": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                    "w": {"type": ["number", "string"]},
                },
                "required": ["x", "w"],
                "additionalProperties": False,
            },
        },
    },
    "required": ["dim", "atoms"],
    "additionalProperties": False,
}

FAMILY_SCHEMA = {
    "type": "object",
    "properties": {
        "mE": {"type": ["number", "string"]},
        "p": {"type": "number", "exclusiveMinimum": 0},
        "params": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "lambda": {"type": ["string", "integer"]},
                    "m": {"type": ["number", "string"]},
                    "mu": MEASURE_SCHEMA,
                    "nu": MEASURE_SCHEMA,
                },
                "required": ["lambda", "m", "mu", "nu"],
                "additionalProperties": False,
            },
        },
    },
    "required": ["params", "p"],
    "additionalProperties": False,
}


def _weight_out(w: Fraction, rational: bool):
    return str(w) if rational else float(w)


def measure_to_dict(mu: DiscreteMeasure, rational: bool = True) -> dict:
    """Weights become exact fraction strings ("1/3") in rational mode."""
    return {
        "dim": mu.dim,
        "atoms": [{"x": [float(c) for c in x], "w": _weight_out(w, rational)} for x, w in zip(mu.points, mu.weights)],
    }


def measure_from_dict(d: dict) -> DiscreteMeasure:
    atoms = d["atoms"]
    mu = make_discrete([a["x"] for a in atoms], [a["w"] for a in atoms])
    if mu.dim != d["dim"]:
        raise MeasureError(f"declared dim {d['dim']} but atoms have dimension {mu.dim}")
    return mu


def plan_to_dict(plan) -> dict:
    out = lambda v: str(v) if plan.exact else float(v)  # noqa: E731
    return {
        "value": out(plan.value),
        "entries": [{"i": i, "j": j, "m": out(m)} for i, j, m in plan.entries],
    }


def plan_to_csv(plan) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["i", "j", "m"])
    for i, j, m in plan.entries:
        w.writerow([i, j, str(m) if plan.exact else repr(float(m))])
    return buf.getvalue()


def edges_to_list(edges) -> list[list[int]]:
    return edges.sorted()


def family_to_dict(family: ParamFamily, rational: bool = True) -> dict:
    return {
        "mE": _weight_out(family.total_mass, rational),
        "p": family.p,
        "params": [
            {
                "lambda": prm.label,
                "m": _weight_out(prm.mass, rational),
                "mu": measure_to_dict(prm.source, rational),
                "nu": measure_to_dict(prm.target, rational),
            }
            for prm in family.params
        ],
    }


def family_from_dict(d: dict) -> ParamFamily:
    fam = ParamFamily.build(
        ((prm["lambda"], prm["m"], measure_from_dict(prm["mu"]), measure_from_dict(prm["nu"])) for prm in d["params"]),
        p=d["p"],
    )
    if "mE" in d and as_fraction(d["mE"]) != fam.total_mass:
        if not np.isclose(float(as_fraction(d["mE"])), float(fam.total_mass), rtol=1e-12):
            raise MeasureError(f"recorded mE={d['mE']} disagrees with the parameter masses")
    return fam


# --- coupling experiment config ---------------------------------------------------

_STEP_PAIR = {
    "type": "object",
    "properties": {"q": MEASURE_SCHEMA, "qhat": MEASURE_SCHEMA},
    "required": ["q", "qhat"],
    "additionalProperties": False,
}

COUPLING_SCHEMA = {
    "type": "object",
    "properties": {
        "grid": {
            "type": "object",
            "properties": {
                "S": {"type": "number", "exclusiveMinimum": 0},
                "steps": {"type": "integer", "minimum": 1},
                "clock": {"enum": ["linear"]},
            },
            "required": ["S", "steps"],
            "additionalProperties": False,
        },
        "cov": {"type": "array", "minItems": 1, "items": _STEP_PAIR},
        "phi": {
            "oneOf": [
                {
                    "type": "object",
                    "properties": {
                        "kind": {"const": "linear"},
                        "coef": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                        "offset": {"type": "number"},
                        "scale": {"type": "array", "items": {"type": "number"}},
                    },
                    "required": ["kind", "coef"],
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "properties": {
                        "kind": {"const": "lipschitz-table"},
                        "entries": {
                            "type": "array",
                            "minItems": 1,
                            "items": {
                                "type": "object",
                                "properties": {
                                    "fn": {"enum": ["identity", "sin", "cos", "tanh", "abs", "const"]},
                                    "coef": {"type": "array", "items": {"type": "number"}},
                                    "scale": {"type": "number"},
                                    "offset": {"type": "number"},
                                },
                                "additionalProperties": False,
                            },
                        },
                    },
                    "required": ["kind", "entries"],
                    "additionalProperties": False,
                },
            ]
        },
        "R": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    },
    "required": ["grid", "cov", "phi", "R", "seed"],
    "additionalProperties": False,
}


def _per_step(items: list, steps: int, what: str) -> list:
    if len(items) == 1:
        return items * steps
    if len(items) != steps:
        raise MeasureError(f"{what} needs 1 or {steps} entries, got {len(items)}")
    return items


def coupling_config_from_dict(d: dict, threads: int = 1) -> coupling.CouplingConfig:
    steps = d["grid"]["steps"]
    grid = coupling.TimeGrid.linear(float(d["grid"]["S"]), steps)
    pairs = _per_step(d["cov"], steps, "cov")
    cov = coupling.CovariationProcess(
        tuple(measure_from_dict(s["q"]) for s in pairs), tuple(measure_from_dict(s["qhat"]) for s in pairs)
    )
    phi_d = d["phi"]
    if phi_d["kind"] == "linear":
        if len(phi_d["coef"]) != cov.dim:
            raise MeasureError(f"phi.coef must have length {cov.dim}")
        scale = phi_d.get("scale")
        if scale is not None:
            scale = _per_step(scale, steps, "phi.scale")
        phi = coupling.linear_field(phi_d["coef"], steps, float(phi_d.get("offset", 0.0)), scale)
    else:
        phi = coupling.table_field(_per_step(phi_d["entries"], steps, "phi.entries"), cov.dim)
    return coupling.CouplingConfig(grid, cov, phi, int(d["R"]), int(d["seed"]), threads=threads)
