"""Experiment configuration: schema, defaults, overrides and hashing."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from ..geometry import InadmissibleWeight, Weight


class ConfigInvalid(ValueError):
    pass


# defaults per module; every check in a report carries one of these
DEFAULT_TOLERANCES = {
    "lagrange_delta": 1e-10,
    "dual_pairing": 1e-8,
    "dual_tiling": 1e-8,
    "dual_modulus": 1e-10,
    "bergman_diagonal": 1e-8,
    "reproducing": 1e-8,
    "orthonormality": 1e-8,
    "fs_bergman_constant": 1e-8,
    "fs_monomial_gram": 1e-10,
    "ma_total_mass": 1e-10,
    "certificate_tau": 1e-3,
    "trace": 1e-8,
    "hs": 1e-6,
    "spectrum": 1e-10,
    "slope_min": -0.65,
    "slope_max": -0.35,
    "lower_sqrt_k_min": 0.05,
    "band": 2.0,
    "density_rel": 0.10,
    "dual_gap": 1e-8,
    "decay_stability": 0.25,
}

DEFAULTS = {
    "weight": "fubini-study",
    "dimension": 1,
    "k": 16,
    "k_range": [8, 16, 32, 64],
    "seed": 0,
    "restarts": None,
    "tolerances": {},
    "R_grid": [1, 2, 4, 8, 12, 16],
    "r_grid_size": 12,
    "x_grid_size": 128,
    "family": "perturbed-fekete",
    "eps": 0.5,
    "sign": 1,
    "density_factor": 1.25,
    "density_normalization": "k",
    "density_min_k": 16,
    "quad_degree": None,
    "landau": {"center": None, "radius": 1.0, "gammas": [0.1, 0.5, 0.9]},
    "figures": True,
    "out": "feketelab-out",
    "cache_dir": None,
}

_POS_INT = {"type": "integer", "minimum": 1}
_NUMBER = {"type": "number"}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "weight": {
            "oneOf": [
                {"enum": ["fubini-study", "perturbed"]},
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["dimension"],
                    "properties": {
                        "dimension": {"enum": [1, 2]},
                        "m": {"type": "integer", "minimum": 0},
                        "amplitude": _NUMBER,
                        "coefficients": {"type": "array", "items": {"type": "array", "minItems": 4, "maxItems": 4}},
                    },
                },
            ]
        },
        "dimension": {"enum": [1, 2]},
        "k": _POS_INT,
        "k_range": {"type": "array", "items": _POS_INT, "minItems": 1},
        "seed": {"type": "integer", "minimum": 0},
        "restarts": {"oneOf": [{"type": "null"}, _POS_INT]},
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {key: _NUMBER for key in DEFAULT_TOLERANCES},
        },
        "R_grid": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "r_grid_size": {"type": "integer", "minimum": 2},
        "x_grid_size": {"type": "integer", "minimum": 100},
        "family": {"enum": ["fekete", "perturbed-fekete", "spiral"]},
        "eps": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "sign": {"enum": [1, -1]},
        "density_factor": {"type": "number", "exclusiveMinimum": 0},
        "density_normalization": {"enum": ["k", "dimension"]},
        "density_min_k": _POS_INT,
        "quad_degree": {"oneOf": [{"type": "null"}, _POS_INT]},
        "landau": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "center": {
                    "oneOf": [
                        {"type": "null"},
                        {"type": "array", "items": {"type": "array", "minItems": 2, "maxItems": 2,
                                                    "items": _NUMBER}},
                    ]
                },
                "radius": {"type": "number", "exclusiveMinimum": 0},
                "gammas": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
            },
        },
        "figures": {"type": "boolean"},
        "out": {"type": "string"},
        "cache_dir": {"oneOf": [{"type": "null"}, {"type": "string"}]},
    },
}

# keys that only say where things go; excluded from the hash and the echo
LOCATION_KEYS = ("out", "cache_dir")


@dataclass(frozen=True)
class ExperimentConfig:
    data: dict

    def __getattr__(self, name):
        try:
            return self.__dict__["data"][name]
        except KeyError:
            raise AttributeError(name) from None

    @property
    def tol(self):
        return {**DEFAULT_TOLERANCES, **self.data["tolerances"]}

    @property
    def weight_obj(self) -> Weight:
        return make_weight(self.data["weight"], self.data["dimension"])

    def echo(self):
        d = {key: val for key, val in self.data.items() if key not in LOCATION_KEYS}
        d["tolerances"] = self.tol
        d["weight"] = self.weight_obj.to_dict()
        return d

    def hash(self):
        blob = json.dumps(self.echo(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **changes):
        d = copy.deepcopy(self.data)
        d.update(changes)
        return make_config(d)


def make_weight(spec, dimension=1) -> Weight:
    try:
        if spec == "fubini-study":
            return Weight.fubini_study(dimension)
        if spec == "perturbed":
            if dimension != 1:
                raise ConfigInvalid("the named perturbed weight lives on CP^1")
            return Weight.example_perturbed()
        return Weight.from_dict(spec)
    except (InadmissibleWeight, ValueError, TypeError) as exc:
        if isinstance(exc, ConfigInvalid):
            raise
        raise ConfigInvalid(f"weight: {exc}") from exc


def make_config(data: dict | None = None) -> ExperimentConfig:
    """Validate, fill defaults and check cross-field constraints."""
    data = copy.deepcopy(data or {})
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigInvalid(f"{where}: {exc.message}") from None
    full = copy.deepcopy(DEFAULTS)
    landau = {**full["landau"], **data.pop("landau", {})}
    full.update(data)
    full["landau"] = landau
    if isinstance(full["weight"], dict):
        full["dimension"] = full["weight"]["dimension"]
    n = full["dimension"]
    if landau["center"] is not None and len(landau["center"]) != n + 1:
        raise ConfigInvalid(f"landau/center: needs {n + 1} homogeneous coordinates")
    full["k_range"] = sorted(set(full["k_range"]))
    full["R_grid"] = sorted(set(float(R) for R in full["R_grid"]))
    cfg = ExperimentConfig(full)
    cfg.weight_obj  # admissibility
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigInvalid(f"no such config file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigInvalid(f"{path}: top level must be an object")
    return make_config(data)
