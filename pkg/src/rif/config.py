"""Run configuration: a versioned JSON document validated before anything runs."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import jsonschema

from . import fitness as fitness_mod
from . import weights as weights_mod
from .errors import InvalidSpec
from .fitness import FitnessModel
from .weights import WeightDistribution

SCHEMA_VERSION = 1
EXPERIMENTS = ("solve", "limits", "simulate", "compare", "phase")

_NUM = {"type": "number"}
_TOLERANCES = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "root": {"type": "number", "exclusiveMinimum": 0},
        "max_abs": _NUM,
        "k_compare": {"type": "integer", "minimum": 0},
        "tv": _NUM,
        "z_rel": _NUM,
        "window_min": _NUM,
        "leaf_abs": _NUM,
    },
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "experiment", "model"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "experiment": {"enum": list(EXPERIMENTS)},
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["weights", "fitness"],
            "properties": {"weights": {"type": "object"}, "fitness": {"type": "object"}},
        },
        "t_final": {"type": "integer", "minimum": 0},
        "replicas": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "bins": {"anyOf": [{"type": "object"}, {"type": "array"}]},
        "k_max": {"type": "integer", "minimum": 0},
        "k_law": {"type": "integer", "minimum": 1},
        "epsilons": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "engine": {"enum": ["discrete", "continuous"]},
        "output_dir": {"type": "string"},
        "tolerances": _TOLERANCES,
        "law_perturbation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"alpha_factor": {"type": "number", "exclusiveMinimum": 0}},
        },
        "phase": {
            "type": "object",
            "additionalProperties": False,
            "required": ["c_values"],
            "properties": {"c_values": {"type": "array", "minItems": 1, "items": _NUM}},
        },
    },
}


@dataclass
class RunConfig:
    raw: dict
    experiment: str
    dist: WeightDistribution
    fitness: FitnessModel
    t_final: int = 0
    replicas: int = 1
    seed: int | None = None
    bins: tuple | None = None
    k_max: int = 50
    k_law: int = 10_000
    epsilons: tuple = ()
    engine: str = "discrete"
    output_dir: str | None = None
    tolerances: dict = field(default_factory=dict)
    alpha_factor: float = 1.0
    c_values: tuple = ()

    @property
    def ell(self) -> int:
        return self.fitness.ell


def parse_config(doc: dict, seed: int | None = None) -> RunConfig:
    """Validate ``doc`` and build the model objects. A ``seed`` overrides the file's."""
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InvalidSpec(f"config invalid at {where}: {exc.message}") from None
    raw = json.loads(json.dumps(doc))
    if seed is not None:
        raw["seed"] = int(seed)
    dist = weights_mod.from_dict(raw["model"]["weights"])
    fm = fitness_mod.from_dict(raw["model"]["fitness"])
    fm.validate(dist)
    exp = raw["experiment"]
    if exp in ("simulate", "compare") and "seed" not in raw:
        raise InvalidSpec(f"experiment {exp!r} needs a seed")
    if exp == "phase":
        if "phase" not in raw:
            raise InvalidSpec("phase experiment needs phase.c_values")
        if fm.kind != "gpaf":
            raise InvalidSpec("phase sweeps scale h and need a GPAF model")
    bins = weights_mod.parse_bins(raw["bins"], dist) if "bins" in raw else None
    return RunConfig(
        raw=raw,
        experiment=exp,
        dist=dist,
        fitness=fm,
        t_final=raw.get("t_final", 0),
        replicas=raw.get("replicas", 1),
        seed=raw.get("seed"),
        bins=bins,
        k_max=raw.get("k_max", 50),
        k_law=raw.get("k_law", 10_000),
        epsilons=tuple(raw.get("epsilons", ())),
        engine=raw.get("engine", "discrete"),
        output_dir=raw.get("output_dir"),
        tolerances=dict(raw.get("tolerances", {})),
        alpha_factor=raw.get("law_perturbation", {}).get("alpha_factor", 1.0),
        c_values=tuple(raw.get("phase", {}).get("c_values", ())),
    )


def load_config(path, seed: int | None = None) -> RunConfig:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidSpec(f"{path}: not valid JSON ({exc})") from None
    return parse_config(doc, seed)
