"""Scenario configuration: YAML schema, defaults, strict validation."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import yaml

from .errors import ConfigError
from .model import ModelParams
from .mpc import ControllerConfig, ReferenceSphere

SCHEMA_VERSION = 1

DEFAULTS: dict = {
    "schema_version": SCHEMA_VERSION,
    "name": "base",
    "model": {
        "n": 100,
        "speed": 50.0,
        "tau": 0.1,
        "turning_rate": 0.69,
        "view_half_angle": 0.75 * math.pi,
        "attraction_gain": 1.0,
        "repulsion_radius": 50.0,
        "orientation_radius": 750.0,
        "attraction_radius": 1000.0,
        "sensitivity": 10.0,
        "noise_scale": 1.0,
        "noise_base": 0.35,
    },
    "controller": {
        "period": 30,
        "horizon": 60,
        "predictor": "dynamic",
        "restarts": 4,
        "max_iterations": 200,
        "tolerance": 1e-6,
        "initial_stimulus": None,
    },
    "reference": {
        "radius": 2000.0,
        "center": [0.0, 0.0, 0.0],
    },
    "run": {
        "steps": 1000,
        "trials": 20,
        "base_seed": 2024,
        "init_radius": None,
    },
}

@dataclass
class ScenarioConfig:
    """A validated scenario; sections mirror the YAML layout."""

    name: str
    model: dict
    controller: dict
    reference: dict
    run: dict

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise ConfigError("scenario must be a mapping")
        merged = copy.deepcopy(DEFAULTS)
        for section, content in data.items():
            if section not in merged:
                raise ConfigError(f"unknown scenario key {section!r}")
            if section in ("schema_version", "name"):
                merged[section] = content
                continue
            if not isinstance(content, dict):
                raise ConfigError(f"section {section!r} must be a mapping")
            for key, value in content.items():
                if key not in merged[section]:
                    raise ConfigError(f"unknown key {section}.{key}")
                merged[section][key] = value
        if int(merged["schema_version"]) != SCHEMA_VERSION:
            raise ConfigError(
                f"unsupported schema_version {merged['schema_version']!r}"
            )
        cfg = cls(
            name=str(merged["name"]),
            model=merged["model"],
            controller=merged["controller"],
            reference=merged["reference"],
            run=merged["run"],
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        run = self.run
        for key in ("steps", "trials", "base_seed"):
            if not isinstance(run[key], int):
                raise ConfigError(f"run.{key} must be an integer")
        if run["steps"] < 1 or run["trials"] < 1:
            raise ConfigError("run.steps and run.trials must be positive")
        if run["init_radius"] is not None and float(run["init_radius"]) <= 0:
            raise ConfigError("run.init_radius must be positive")
        # constructor validation catches the rest
        self.model_params()
        self.controller_config()
        self.reference_sphere()

    def model_params(self) -> ModelParams:
        return ModelParams(**self.model)

    def controller_config(self) -> ControllerConfig:
        return ControllerConfig(**self.controller)

    def reference_sphere(self) -> ReferenceSphere:
        r = self.reference
        return ReferenceSphere(center=r["center"], radius=float(r["radius"]))

    @property
    def init_radius(self) -> float:
        r = self.run["init_radius"]
        return float(r) if r is not None else 0.5 * float(self.model["attraction_radius"])

    def with_values(self, overrides: dict) -> "ScenarioConfig":
        """New scenario with dotted-key overrides, e.g. {"model.n": 200}."""
        data = self.to_dict()
        for dotted, value in overrides.items():
            parts = dotted.split(".")
            if len(parts) == 1 and parts[0] == "name":
                data["name"] = value
                continue
            if len(parts) != 2 or parts[0] not in ("model", "controller", "reference", "run"):
                raise ConfigError(f"bad override key {dotted!r}")
            section, key = parts
            if key not in data[section]:
                raise ConfigError(f"unknown override {dotted!r}")
            data[section][key] = value
        return ScenarioConfig.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "model": copy.deepcopy(self.model),
            "controller": copy.deepcopy(self.controller),
            "reference": copy.deepcopy(self.reference),
            "run": copy.deepcopy(self.run),
        }


def load_scenario(path: str | Path) -> ScenarioConfig:
    """Load and validate a YAML scenario file."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"scenario file not found: {p}")
    with open(p) as fh:
        data = yaml.safe_load(fh)
    if data is None:
        data = {}
    return ScenarioConfig.from_dict(data)


def builtin_scenario(name: str) -> ScenarioConfig:
    """Load one of the packaged scenarios by bare name (e.g. "base")."""
    ref = resources.files("schoolmpc") / "scenarios" / f"{name}.yaml"
    if not ref.is_file():
        raise ConfigError(f"no builtin scenario named {name!r}")
    data = yaml.safe_load(ref.read_text())
    return ScenarioConfig.from_dict(data or {})


def default_scenario() -> ScenarioConfig:
    return ScenarioConfig.from_dict({})
