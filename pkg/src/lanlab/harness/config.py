"""Experiment configuration: JSON documents validated against a fixed schema."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass

import jsonschema

from ..errors import ConfigError

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}


def _obj(properties, required=()):
    return {"type": "object", "properties": properties, "required": list(required),
            "additionalProperties": False}


_NOISE = _obj({
    "kind": {"enum": ["tempered_stable", "tabulated"]},
    "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 2},
    "lambda": _POS, "c": {"type": "number", "minimum": 0},
    "lambda_plus": _POS, "lambda_minus": _POS,
    "c_plus": {"type": "number", "minimum": 0}, "c_minus": {"type": "number", "minimum": 0},
    "grid": {"type": "array", "items": _POS, "minItems": 2},
    "values_plus": {"type": "array", "items": {"type": "number", "minimum": 0}},
    "values_minus": {"type": "array", "items": {"type": "number", "minimum": 0}},
    "outer_atoms": {"type": "array", "items": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}},
    "drift": _NUM, "u0": _POS,
    "truncation_tol": _POS, "beta": {"type": "number", "minimum": 0},
}, ["kind"])

SCHEMA = _obj({
    "model": {"oneOf": [
        _obj({"type": {"const": "chain"},
              "chain": _obj({"name": {"type": "string"}, "params": {"type": "object"}}, ["name"])},
             ["type", "chain"]),
        _obj({"type": {"const": "sde"}, "noise": _NOISE,
              "drift": _obj({"name": {"type": "string"}, "params": {"type": "object"}}, ["name"]),
              "estimator": {"enum": ["kde", "fourier"]},
              "steps_per_h": _POS_INT},
             ["type", "noise", "drift"]),
    ]},
    "theta0": _NUM,
    "scheme": _obj({"h": _POS, "n": _POS_INT, "n_grid": {"type": "array", "items": _POS_INT, "minItems": 1},
                    "x0": _NUM}, ["h"]),
    "lan": _obj({"u_list": {"type": "array", "items": _NUM, "minItems": 1},
                 "R": {"type": "integer", "minimum": 100},
                 "p_exponent": {"type": "number", "exclusiveMinimum": 2},
                 "N_sup": _POS, "rate_mode": {"enum": ["exact", "mc"]}, "rate_R": {"type": "integer", "minimum": 2},
                 "condition_R": {"type": "integer", "minimum": 2}}),
    "estimation": _obj({"M": {"type": "integer", "minimum": 100},
                        "bandwidth": {"oneOf": [{"const": "silverman"}, _POS]},
                        "fd_step": _POS, "richardson": {"type": "boolean"},
                        "transform": {"enum": ["none", "asinh"]}}),
    "ergodics": _obj({"T_list": {"type": "array", "items": _POS, "minItems": 1},
                      "batch_lens": {"type": "array", "items": _POS_INT, "minItems": 1},
                      "lag_grid": {"type": "array", "items": _POS_INT, "minItems": 1},
                      "p_list": {"type": "array", "items": _POS, "minItems": 1},
                      "n_grid": {"type": "array", "items": _POS_INT, "minItems": 1},
                      "pairs": _POS_INT, "growth_R": {"type": "integer", "minimum": 2}}),
    "check_a": _obj({"x_grid": {"type": "array", "items": _NUM, "minItems": 2},
                     "theta_grid": {"type": "array", "items": _NUM, "minItems": 1},
                     "radius": _POS}),
    "simulate": _obj({"paths": _POS_INT, "fine": {"type": "boolean"}}),
    "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    "output_dir": {"type": "string"},
}, ["model", "theta0", "scheme"])

DEFAULTS = {
    "lan": {"u_list": [-2, -1, 1, 2], "R": 1000, "p_exponent": 3.0, "N_sup": 2.0, "rate_R": 200,
            "condition_R": 500},
    "estimation": {"M": 100_000, "bandwidth": "silverman", "fd_step": 1e-2, "richardson": False,
                   "transform": "none"},
    "ergodics": {"T_list": [1000.0, 2000.0, 4000.0], "batch_lens": [10, 100, 1000],
                 "lag_grid": [1, 2, 3, 4, 5, 6], "p_list": [1.0, 2.0, 3.0], "pairs": 200_000,
                 "growth_R": 200},
    "simulate": {"paths": 1, "fine": False},
    "seed": 0,
    "output_dir": "lanlab_out",
}


@dataclass
class ExperimentConfig:
    """A validated configuration plus the exact bytes it was read from."""

    data: dict
    raw: bytes

    @property
    def sha256(self):
        return hashlib.sha256(self.raw).hexdigest()

    def __getitem__(self, key):
        return self.data[key]

    @property
    def is_chain(self):
        return self.data["model"]["type"] == "chain"

    @property
    def n(self):
        sch = self.data["scheme"]
        if "n" in sch:
            return sch["n"]
        if "n_grid" in sch:
            return max(sch["n_grid"])
        raise ConfigError("scheme needs n or n_grid", path="scheme")

    @property
    def n_grid(self):
        sch = self.data["scheme"]
        return sorted(sch["n_grid"]) if "n_grid" in sch else [self.n]


def _merge_defaults(data):
    out = copy.deepcopy(data)
    for key, val in DEFAULTS.items():
        if isinstance(val, dict):
            out[key] = {**val, **out.get(key, {})}
        else:
            out.setdefault(key, val)
    out["scheme"].setdefault("x0", 0.0)
    return out


def parse_config(raw, source="<config>"):
    """Parse and validate configuration bytes; raise :class:`ConfigError` with a location."""
    if isinstance(raw, str):
        raw = raw.encode()
    try:
        data = json.loads(raw.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{source}: not UTF-8 ({exc})") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}",
                          line=exc.lineno, column=exc.colno) from None
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"{source}: at {path}: {err.message}", path=path)
    return ExperimentConfig(_merge_defaults(data), raw)


def load_config(path):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(raw, str(path))
