"""
Experiment configuration: YAML text, JSON-schema validated, loaded into
frozen dataclasses.  Validation errors carry the YAML line of the
offending entry.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import yaml

from .dynamics import ForcingSpec, SimParams
from .grid import GridSpec
from .linearized import GateConstants
from .observation import Identity, LocalAverage, ObservationOp, ProbeSuite, SpectralCutoff

CONFIG_VERSION = 1


class ConfigError(ValueError):
    """Malformed or invalid configuration."""


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}

SCHEMA: dict = {
    "type": "object",
    "additionalProperties": False,
    "required": ["version"],
    "properties": {
        "version": {"const": CONFIG_VERSION, "description": "config format version"},
        "seed": {"type": "integer", "minimum": 0, "description": "master seed (forcing phases, probes)"},
        "output_dir": {"type": "string"},
        "sample_interval": {**_pos, "description": "time between recorded samples [time]"},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "nx": {"type": "integer", "minimum": 8, "multipleOf": 2},
                "ny": {"type": "integer", "minimum": 8, "multipleOf": 2},
                "nz": {"type": "integer", "minimum": 5},
                "l": {**_pos, "description": "layer depth [length]"},
                "lx": {**_pos, "description": "x-period [length]"},
                "ly": {**_pos, "description": "y-period [length]"},
                "dealias_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
        },
        "sim": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "nu": {**_pos, "description": "viscosity [length^2/time]"},
                "dt": {**_pos, "description": "time step [time]"},
                "t_end": {**_nonneg, "description": "run horizon after spin-up [time]"},
                "t_spin": {**_nonneg, "description": "spin-up duration [time]"},
                "seed_amplitude": {**_nonneg, "description": "amplitude of the seed state [velocity]"},
                "cfl_max": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "forcing": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "pattern": {"enum": ["none", "kolmogorov", "multiscale"]},
                        "amplitude": {**_num, "description": "RMS amplitude [velocity/time]"},
                        "wavenumber": {"type": "integer", "minimum": 1},
                        "slope": _num,
                        "kmin": _nonneg,
                        "kmax": _pos,
                        "mod_a": _num,
                        "mod_b": _num,
                        "omega": {**_num, "description": "modulation angular frequency [1/time]"},
                        "holder_alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                    },
                },
            },
        },
        "observation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["identity", "cutoff", "average"]},
                "K": {**_pos, "description": "cutoff wavenumber [1/length]"},
                "h": {**_pos, "description": "averaging cell side [length]"},
                "probes": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "n_random": {"type": "integer", "minimum": 0},
                        "n_bumps": {"type": "integer", "minimum": 0},
                        "n_modes": {"type": "integer", "minimum": 0},
                    },
                },
            },
        },
        "nudge": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mu": {**_nonneg, "description": "inflation parameter [1/time]"},
                "forcing_mode": {"enum": ["exact", "observed"]},
                "initial_guess": {"enum": ["zero", "truth"]},
                "t0_policy": {"enum": ["immediate", "small_gradient_window"]},
                "fit_series": {"enum": ["err_L2", "err_H1", "err_H2"]},
                "tail_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
        },
        "gates": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "source": {"enum": ["calibrated", "configured"]},
                "c0": _pos, "c1": _pos, "c_gate1": _pos, "c_gate2": _pos, "c_delta": _pos,
                "n_probes": {"type": "integer", "minimum": 1},
                "n_snapshots": {"type": "integer", "minimum": 1},
                "coercivity_samples": {"type": "integer", "minimum": 1},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mu": {"type": "array", "items": _nonneg},
                "delta": {"type": "array", "items": _pos},
                "forcing_mode": {"type": "array", "items": {"enum": ["exact", "observed"]}},
                "workers": {"type": "integer", "minimum": 1},
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "plot": {"type": "boolean"},
                "checkpoints": {"type": "boolean"},
            },
        },
    },
}

DEFAULTS: dict = {
    "version": CONFIG_VERSION,
    "seed": 0,
    "output_dir": "runs/default",
    "sample_interval": 0.1,
    "grid": {"nx": 32, "ny": 32, "nz": 17, "l": 1.0, "lx": 2 * math.pi, "ly": 2 * math.pi,
             "dealias_fraction": 2.0 / 3.0},
    "sim": {
        "nu": 1.0, "dt": 0.01, "t_end": 4.0, "t_spin": 4.0, "seed_amplitude": 0.05, "cfl_max": 0.5,
        "forcing": {"pattern": "kolmogorov", "amplitude": 0.05, "wavenumber": 1, "slope": 1.0,
                    "kmin": 1.0, "kmax": 8.0, "mod_a": 1.0, "mod_b": 0.0, "omega": 0.0,
                    "holder_alpha": 1.0},
    },
    "observation": {"kind": "cutoff", "K": 8.0, "h": None,
                    "probes": {"n_random": 120, "n_bumps": 40, "n_modes": 40}},
    "nudge": {"mu": 4.0, "forcing_mode": "exact", "initial_guess": "zero", "t0_policy": "immediate",
              "fit_series": "err_H1", "tail_fraction": 0.25},
    "gates": {"source": "calibrated", "c0": None, "c1": None, "c_gate1": None, "c_gate2": None,
              "c_delta": None, "n_probes": 60, "n_snapshots": 3, "coercivity_samples": 200},
    "sweep": {"mu": [], "delta": [], "forcing_mode": [], "workers": 1},
    "outputs": {"plot": False, "checkpoints": True},
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved configuration; ``raw`` holds the merged, JSON-compatible tree."""

    raw: dict = field(repr=False)

    def __hash__(self):
        return hash(self.config_hash)

    # -- plain sections ------------------------------------------------------------
    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def output_dir(self) -> Path:
        return Path(self.raw["output_dir"])

    @property
    def sample_interval(self) -> float:
        return float(self.raw["sample_interval"])

    @property
    def t_spin(self) -> float:
        return float(self.raw["sim"]["t_spin"])

    @property
    def seed_amplitude(self) -> float:
        return float(self.raw["sim"]["seed_amplitude"])

    @property
    def nudge_section(self) -> dict:
        return self.raw["nudge"]

    @property
    def gates_section(self) -> dict:
        return self.raw["gates"]

    @property
    def sweep_section(self) -> dict:
        return self.raw["sweep"]

    @property
    def outputs(self) -> dict:
        return self.raw["outputs"]

    # -- typed views -------------------------------------------------------------
    @property
    def grid(self) -> GridSpec:
        return GridSpec(**self.raw["grid"])

    @property
    def forcing(self) -> ForcingSpec:
        f = dict(self.raw["sim"]["forcing"])
        return ForcingSpec(phase_seed=self.seed, **f)

    @property
    def sim(self) -> SimParams:
        s = self.raw["sim"]
        return SimParams(grid=self.grid, nu=s["nu"], dt=s["dt"], t_end=s["t_end"],
                         forcing=self.forcing, cfl_max=s["cfl_max"])

    @property
    def observation(self) -> ObservationOp:
        return observation_from(self.raw["observation"])

    @property
    def probes(self) -> ProbeSuite:
        return ProbeSuite(seed=self.seed, **self.raw["observation"]["probes"])

    def gate_constants(self) -> GateConstants | None:
        g = self.raw["gates"]
        if g["source"] != "configured":
            return None
        return GateConstants(g["c0"], g["c1"], g["c_gate1"], g["c_gate2"], g["c_delta"], "configured")

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.raw).encode()).hexdigest()

    def with_overrides(self, **changes) -> "ExperimentConfig":
        """Copy with dotted-path overrides, e.g. ``{"nudge.mu": 8.0}``."""
        raw = copy.deepcopy(self.raw)
        for path, value in changes.items():
            node = raw
            keys = path.split(".")
            for k in keys[:-1]:
                node = node[k]
            node[keys[-1]] = value
        return build_config(raw)


def observation_from(section: dict) -> ObservationOp:
    kind = section.get("kind", "identity")
    if kind == "identity":
        return Identity()
    if kind == "cutoff":
        return SpectralCutoff(section["K"])
    return LocalAverage(section["h"])


def observation_for_delta(kind: str, delta: float) -> ObservationOp:
    if kind == "cutoff":
        return SpectralCutoff(1.0 / delta)
    if kind == "average":
        return LocalAverage(delta)
    raise ConfigError("a delta axis needs observation kind 'cutoff' or 'average'")


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _line_index(node, path=(), out=None) -> dict:
    """Map key paths of a composed YAML node tree to 1-based line numbers."""
    if out is None:
        out = {}
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            out[path + (k.value,)] = k.start_mark.line + 1
            _line_index(v, path + (k.value,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_index(v, path + (i,), out)
    return out


def _locate(lines: dict, path: tuple) -> int | None:
    path = tuple(path)
    while path not in lines and path:
        path = path[:-1]
    return lines.get(path)


def _semantic_checks(raw: dict) -> list[tuple[tuple, str]]:
    errs = []
    obs = raw["observation"]
    if obs["kind"] == "cutoff" and not obs.get("K"):
        errs.append((("observation", "kind"), "observation kind 'cutoff' needs K"))
    if obs["kind"] == "average" and not obs.get("h"):
        errs.append((("observation", "kind"), "observation kind 'average' needs h"))
    g = raw["gates"]
    if g["source"] == "configured":
        for k in ("c0", "c1", "c_gate1", "c_gate2", "c_delta"):
            if g.get(k) is None:
                errs.append((("gates", "source"), f"gates.source 'configured' needs gates.{k}"))
    return errs


def _drop_none(obj):
    if isinstance(obj, dict):
        return {k: _drop_none(v) for k, v in obj.items() if v is not None}
    return obj


def build_config(data: dict, lines: dict | None = None, source: str = "<config>") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(_drop_none(data)), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        e = errors[0]
        path = tuple(e.absolute_path)
        where = ".".join(str(p) for p in path) or "<root>"
        line = _locate(lines, path) if lines else None
        loc = f"{source}:{line}" if line else source
        raise ConfigError(f"{loc}: at '{where}': {e.message}")
    raw = _merge(DEFAULTS, data)
    for path, msg in _semantic_checks(raw):
        line = _locate(lines, path) if lines else None
        raise ConfigError(f"{source}:{line}: {msg}" if line else f"{source}: {msg}")
    cfg = ExperimentConfig(raw)
    try:
        cfg.sim  # noqa: B018 - builds and validates the typed views
        if cfg.observation.kind == "average":
            cfg.observation.cells(cfg.grid)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: YAML syntax error: {exc}") from exc
    if node is None:
        raise ConfigError(f"{path}: empty config")
    return build_config(data, _line_index(node), str(path))


def default_config(**sections) -> ExperimentConfig:
    return build_config(_merge({"version": CONFIG_VERSION}, sections))


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.raw, sort_keys=True)


__all__ = [
    "CONFIG_VERSION", "SCHEMA", "DEFAULTS", "ConfigError", "ExperimentConfig", "build_config",
    "load_config", "default_config", "observation_from", "observation_for_delta", "canonical_json",
    "dump_config",
]
