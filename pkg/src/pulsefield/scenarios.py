"""Scenario configuration: JSON schema, resolution to solver objects, built-in scenarios."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from . import initial_data
from . import meanfield as mf
from .errors import ConfigError
from .phase_response import PhaseResponse

_NUM = {"type": "number"}
_POS_INT = {"type": "integer", "minimum": 1}

SCHEMA = {
    "type": "object",
    "required": ["K"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "K": {
            "type": "object",
            "required": ["form"],
            "properties": {
                "form": {"enum": ["affine", "quadratic", "exponential", "tabulated"]},
                "k": _NUM, "b": _NUM, "c0": _NUM, "c1": _NUM, "c2": _NUM, "a": _NUM, "r": _NUM,
                "values": {"type": "array", "items": _NUM, "minItems": 4},
                "phi": {"type": ["array", "null"], "items": _NUM},
            },
            "additionalProperties": False,
        },
        "phi_f": {"type": "number", "exclusiveMinimum": 0},
        "initial": {
            "type": "object",
            "required": ["preset"],
            "properties": {
                "preset": {"enum": ["steady_state", "perturbed_steady", "beta_like", "explicit_table"]},
                "epsilon": _NUM, "mode_number": _POS_INT,
                "a": _NUM, "b": _NUM, "n_init": _NUM,
                "eta": {"type": "array", "items": _NUM},
                "Q": {"type": "array", "items": _NUM},
                "Z": {"type": "array", "items": _NUM},
            },
            "additionalProperties": False,
        },
        "solver": {
            "type": "object",
            "properties": {
                "M": {"type": "integer", "minimum": 8},
                "newton_tol": {"type": "number", "exclusiveMinimum": 0},
                "newton_max_iter": _POS_INT,
                "blowup_eps": _NUM,
                "max_steps": _POS_INT,
                "inner_integrator": {"enum": ["rk4"]},
                "substeps": {"type": "integer", "minimum": 2},
                "snapshot_limit": {"type": ["integer", "null"], "minimum": 1},
            },
            "additionalProperties": False,
        },
        "mode": {"enum": ["original", "relaxed"]},
        "tau_end": {"type": "number", "minimum": 0},
        "snapshot_every": _POS_INT,
        "particles": {
            "type": "object",
            "properties": {
                "count": _POS_INT,
                "seed": {"type": "integer", "minimum": 0},
                "t_end": {"type": "number", "exclusiveMinimum": 0},
                "spike_budget": {"type": ["integer", "null"], "minimum": 1},
                "stratified": {"type": "boolean"},
                "M": {"type": "integer", "minimum": 8},
            },
            "additionalProperties": False,
        },
        "sweep": {
            "type": "object",
            "required": ["axes"],
            "properties": {
                "command": {"enum": ["simulate", "particles", "steady-state"]},
                "axes": {"type": "object", "additionalProperties": {"type": "array", "minItems": 1}},
            },
            "additionalProperties": False,
        },
    },
}

DEFAULTS = {
    "name": "scenario",
    "phi_f": 1.0,
    "initial": {"preset": "steady_state"},
    "solver": {},
    "mode": "original",
    "tau_end": 1.0,
    "snapshot_every": 0,
    "particles": {"count": 1000, "seed": 0, "t_end": 5.0, "spike_budget": None, "stratified": False, "M": 1000},
}


def _path_of(err) -> str:
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        missing = err.message.split("'")[1] if "'" in err.message else "?"
        parts.append(missing)
    if err.validator == "additionalProperties" and "'" in err.message:
        parts.append(err.message.split("'")[1])
    return ".".join(parts) or "<root>"


def validate_config(cfg: dict) -> dict:
    """Schema-check a raw config and fill defaults; returns the resolved dict."""
    if not isinstance(cfg, dict):
        raise ConfigError("<root>: config must be a JSON object")
    errors = sorted(jsonschema.Draft7Validator(SCHEMA).iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(f"{_path_of(err)}: {err.message}")
    out = copy.deepcopy(DEFAULTS)
    for key, val in cfg.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = {**out[key], **copy.deepcopy(val)} if key == "particles" else copy.deepcopy(val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"<file>: {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"<file>: {path} is not valid JSON ({exc})") from exc
    return raw


@dataclass
class Scenario:
    name: str
    response: PhaseResponse
    initial: dict
    solver: mf.SolverConfig
    mode: str
    tau_end: float
    snapshot_every: int
    particles: dict
    resolved: dict = field(repr=False, default_factory=dict)

    @classmethod
    def from_config(cls, raw: dict) -> "Scenario":
        cfg = validate_config(raw)
        response = PhaseResponse.from_config({"K": cfg["K"], "phi_f": cfg["phi_f"]})
        try:
            solver = mf.SolverConfig(**cfg["solver"])
        except TypeError as exc:
            raise ConfigError(f"solver: {exc}") from exc
        return cls(cfg["name"], response, dict(cfg["initial"]), solver, cfg["mode"], float(cfg["tau_end"]),
                   int(cfg["snapshot_every"]), dict(cfg["particles"]), cfg)

    def initial_profile(self, n_cells: int | None = None):
        return initial_data.build(self.initial, self.response, n_cells or self.solver.M)

    def initial_state(self):
        return mf.initial_state(self.initial_profile(), self.response, self.mode)

    def run(self) -> mf.TrajectoryRecord:
        return mf.run(self.initial_state(), self.tau_end, self.response, self.solver)

    def manifest(self) -> dict:
        from dataclasses import asdict

        out = copy.deepcopy(self.resolved)
        out["solver"] = asdict(self.solver)
        out["K"] = self.response.to_config()["K"]
        return out


def set_dotted(cfg: dict, dotted: str, value):
    node = cfg
    keys = dotted.split(".")
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{dotted}: {k} is not an object")
    node[keys[-1]] = value


# -- built-in scenarios -------------------------------------------------------
# Shared by the verification battery, the acceptance tests and the examples in
# the README.

BUILTIN = {
    "constant_steady": {
        "name": "constant_steady", "K": {"form": "affine", "k": 0.0, "b": 0.5},
        "initial": {"preset": "steady_state"}, "tau_end": 1.0,
    },
    "affine_decreasing": {
        "name": "affine_decreasing", "K": {"form": "affine", "k": -0.5, "b": 1.0},
        "initial": {"preset": "beta_like", "a": 2.0, "b": 2.0, "n_init": 0.3}, "tau_end": 2.0,
    },
    "affine_decreasing_b": {
        "name": "affine_decreasing_b", "K": {"form": "affine", "k": -0.5, "b": 1.0},
        "initial": {"preset": "beta_like", "a": 3.0, "b": 2.0, "n_init": 0.6}, "tau_end": 2.0,
    },
    "concave_decreasing": {
        "name": "concave_decreasing", "K": {"form": "quadratic", "c0": 1.2, "c1": -0.4, "c2": -0.1},
        "initial": {"preset": "perturbed_steady", "epsilon": 0.03, "mode_number": 1}, "tau_end": 4.0,
    },
    "concave_decreasing_b": {
        "name": "concave_decreasing_b", "K": {"form": "quadratic", "c0": 1.2, "c1": -0.4, "c2": -0.1},
        "initial": {"preset": "perturbed_steady", "epsilon": -0.02, "mode_number": 2}, "tau_end": 4.0,
    },
    "smooth_decreasing": {
        "name": "smooth_decreasing", "K": {"form": "quadratic", "c0": 0.8, "c1": -0.3, "c2": -0.1},
        "initial": {"preset": "beta_like", "a": 3.0, "b": 2.0, "n_init": 0.2}, "tau_end": 5.0,
    },
    "smooth_decreasing_b": {
        "name": "smooth_decreasing_b", "K": {"form": "quadratic", "c0": 0.8, "c1": -0.3, "c2": -0.1},
        "initial": {"preset": "beta_like", "a": 2.0, "b": 2.0, "n_init": 0.6}, "tau_end": 5.0,
    },
    "constant_blowup": {
        "name": "constant_blowup", "K": {"form": "affine", "k": 0.0, "b": 2.0},
        "initial": {"preset": "beta_like", "a": 2.0, "b": 2.0, "n_init": 0.5}, "tau_end": 2.0,
    },
    "convex_increasing": {
        "name": "convex_increasing", "K": {"form": "quadratic", "c0": 0.3, "c1": 0.5, "c2": 0.3},
        "initial": {"preset": "perturbed_steady", "epsilon": 0.2, "mode_number": 1}, "tau_end": 20.0,
    },
    "fig3": {
        "name": "fig3", "K": {"form": "affine", "k": 0.75, "b": 0.2},
        "initial": {"preset": "perturbed_steady", "epsilon": -0.3, "mode_number": 1}, "tau_end": 6.0,
    },
    "fig3_relaxed": {
        "name": "fig3_relaxed", "K": {"form": "affine", "k": 0.75, "b": 0.2},
        "initial": {"preset": "perturbed_steady", "epsilon": -0.3, "mode_number": 1},
        "mode": "relaxed", "tau_end": 4.0,
    },
}


def builtin(name: str, **overrides) -> Scenario:
    """Built-in scenario by name; ``overrides`` are dotted keys (``solver.M=400``)."""
    cfg = copy.deepcopy(BUILTIN[name])
    for key, val in overrides.items():
        set_dotted(cfg, key.replace("__", "."), val)
    return Scenario.from_config(cfg)
