"""Run configuration: JSON schema, parsing and invariant checks."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import jsonschema
import numpy as np

from .estimator import EstimatorOptions
from .model import ConfigError, ModelSpec, model_from_config

# Reference ensembles below this size leave Monte Carlo error in I_t comparable
# to the observed-information gap at N of a few thousand.
MIN_REFERENCE_M = 200_000

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NULLNUM = {"type": ["number", "null"]}


def _variant(kind, props, required=()):
    return {
        "type": "object",
        "properties": {"kind": {"const": kind}, **props},
        "required": ["kind", *required],
        "additionalProperties": False,
    }


_LAW = {"oneOf": [
    _variant("Dirac", {"value": _NUM}, ["value"]),
    _variant("Uniform", {"low": _NUM, "high": _NUM}, ["low", "high"]),
    _variant("TruncatedGaussian", {"mean": _NUM, "std": _POS, "low": _NULLNUM, "high": _NULLNUM},
             ["mean", "std"]),
]}

_VEC = {"type": "array", "items": _NUM, "minItems": 1}

MODEL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["rate", "theta_box"],
    "properties": {
        "drift": {"oneOf": [
            _variant("Zero", {}),
            _variant("Linear", {"lambda": _NUM, "c": _NUM}, ["lambda"]),
        ]},
        "reset": {"oneOf": [
            _variant("None", {}),
            _variant("ResetToZero", {"r_max": _POS}),
        ]},
        "mark_law": _LAW,
        "initial_law": _LAW,
        "rate": {
            "type": "object",
            "additionalProperties": False,
            "required": ["family"],
            "properties": {
                "family": {"enum": ["Constant", "AffineSigmoid", "SoftplusClamp", "UserTabulated"]},
                "hyper": {"type": "object"},
            },
        },
        "theta_box": {
            "type": "object",
            "additionalProperties": False,
            "required": ["lower", "upper"],
            "properties": {"lower": _VEC, "upper": _VEC},
        },
    },
}

RUN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model"],
    "properties": {
        "model": MODEL_SCHEMA,
        "experiment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "theta_star": _VEC,
                "t": {"type": "number", "minimum": 0},
                "N": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "replicates": {"type": "integer", "minimum": 1},
                "h": {"type": "array", "items": _VEC},
                "M_reference": {"type": "integer", "minimum": 2},
                "Q": {"type": "integer", "minimum": 10},
                "time_points": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "exploratory": {"type": "boolean"},
                "grid_points": {"type": "integer", "minimum": 2},
                "identifiability_threshold": {"type": "number", "minimum": 0},
            },
        },
        "estimator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tol_g": _POS, "tol_x": _POS, "tol_f": _POS,
                "ridge_ladder": {"type": "array", "items": _POS},
                "max_iter": {"type": "integer", "minimum": 1},
                "max_starts": {"type": "integer", "minimum": 1},
                "theta_ref": _VEC,
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["csv", "json", "gnuplot"]}},
            },
        },
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    },
}


class ConfigFileError(ConfigError):
    def __init__(self, messages):
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


def _line_of(text: str, path) -> int:
    """Best-effort line number of the JSON element at ``path``."""
    pos = 0
    for key in path:
        if isinstance(key, str):
            hit = text.find(f'"{key}"', pos)
            if hit < 0:
                break
            pos = hit
    return text.count("\n", 0, pos) + 1


@dataclass
class RunConfig:
    raw: dict
    model: ModelSpec
    theta_star: np.ndarray
    t: float = 1.0
    N: list = field(default_factory=lambda: [100])
    replicates: int = 20
    h: list = field(default_factory=list)
    M_reference: Optional[int] = None
    Q: Optional[int] = None
    time_points: Optional[list] = None
    exploratory: bool = False
    grid_points: int = 3
    identifiability_threshold: float = 1e-3
    estimator: EstimatorOptions = field(default_factory=EstimatorOptions)
    output_dir: str = "out"
    formats: tuple = ("csv", "json")
    seed: int = 0

    @property
    def reference_M(self) -> int:
        if self.M_reference is not None:
            return self.M_reference
        return max(10 * max(self.N), MIN_REFERENCE_M)

    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_seed(self, seed: int) -> "RunConfig":
        raw = dict(self.raw)
        raw["seed"] = int(seed)
        return parse_config(raw)


def parse_config(raw: dict, text: Optional[str] = None) -> RunConfig:
    """Validate against the schema and build a :class:`RunConfig`."""
    validator = jsonschema.Draft202012Validator(RUN_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = []
        for e in errors:
            where = "/".join(str(p) for p in e.absolute_path) or "<root>"
            line = f"line {_line_of(text, e.absolute_path)}: " if text is not None else ""
            msgs.append(f"{line}{where}: {e.message}")
        raise ConfigFileError(msgs)
    try:
        model = model_from_config(raw["model"])
    except (ConfigError, KeyError, TypeError, ValueError) as exc:
        line = f"line {_line_of(text, ['model'])}: " if text is not None else ""
        raise ConfigFileError([f"{line}model: {exc}"]) from exc
    exp = raw.get("experiment", {})
    theta_star = np.asarray(exp.get("theta_star", model.theta_box.center.tolist()), dtype=float)
    h = [np.asarray(v, dtype=float) for v in exp.get("h", [])]
    out = raw.get("output", {})
    return RunConfig(
        raw=raw,
        model=model,
        theta_star=theta_star,
        t=float(exp.get("t", 1.0)),
        N=[int(n) for n in exp.get("N", [100])],
        replicates=int(exp.get("replicates", 20)),
        h=h,
        M_reference=exp.get("M_reference"),
        Q=exp.get("Q"),
        time_points=exp.get("time_points"),
        exploratory=bool(exp.get("exploratory", False)),
        grid_points=int(exp.get("grid_points", 3)),
        identifiability_threshold=float(exp.get("identifiability_threshold", 1e-3)),
        estimator=EstimatorOptions.from_config(raw.get("estimator")),
        output_dir=out.get("directory", "out"),
        formats=tuple(out.get("formats", ["csv", "json"])),
        seed=int(raw.get("seed", 0)),
    )


def check_invariants(cfg: RunConfig, text: Optional[str] = None) -> list:
    """Domain checks beyond the schema; returns human-readable violations."""
    problems = []
    box = cfg.model.theta_box

    def line(path):
        return f"line {_line_of(text, path)}: " if text is not None else ""

    if cfg.theta_star.shape != (box.dim,):
        problems.append(f"{line(['experiment', 'theta_star'])}theta_star has dimension "
                        f"{cfg.theta_star.size}, model has {box.dim}")
    elif not box.interior(cfg.theta_star):
        problems.append(f"{line(['experiment', 'theta_star'])}theta_star not interior")
    for k, hv in enumerate(cfg.h):
        if hv.shape != (box.dim,):
            problems.append(f"{line(['experiment', 'h'])}h[{k}] has dimension {hv.size}, model has {box.dim}")
        elif cfg.theta_star.shape == (box.dim,):
            for n in cfg.N:
                if not box.contains(cfg.theta_star + hv / np.sqrt(n)):
                    problems.append(f"{line(['experiment', 'h'])}theta_star + h[{k}]/sqrt({n}) outside theta_box")
                    break
    if cfg.estimator.theta_ref is not None and not box.contains(cfg.estimator.theta_ref):
        problems.append(f"{line(['estimator', 'theta_ref'])}theta_ref outside theta_box")
    return problems


def load_config(path) -> RunConfig:
    """Read, schema-check and invariant-check a config file; raises :class:`ConfigFileError`."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigFileError([f"cannot read {path}: {exc}"]) from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigFileError([f"line {exc.lineno}: invalid JSON: {exc.msg}"]) from exc
    try:
        cfg = parse_config(raw, text)
    except ConfigFileError:
        raise
    except ConfigError as exc:
        raise ConfigFileError([str(exc)]) from exc
    problems = check_invariants(cfg, text)
    if problems:
        raise ConfigFileError(problems)
    return cfg


def validate(path) -> list:
    """All diagnostics for a config file; empty when it is valid."""
    try:
        load_config(path)
    except ConfigFileError as exc:
        return exc.messages
    return []
