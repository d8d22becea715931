"""Experiment configuration: one JSON document, validated on load."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..rand_tree import OffspringLaw
from ..walk_engine import WalkMode

DEFAULT_V_GRID = [0.125 * 2 ** (k / 2) for k in range(15)]


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    experiment: str
    law: str | dict = "poisson1"
    sizes: list[int] = Field(default_factory=list)
    replicas: int = Field(default=1000, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    mode: str | dict = "dtrw"
    quenched: bool = False
    grid: int = Field(default=2**14, ge=2)
    v_grid: list[float] = Field(default_factory=lambda: list(DEFAULT_V_GRID))
    chunk: int = Field(default=64, ge=1)
    out: str | None = None
    params: dict[str, Any] = Field(default_factory=dict)

    @field_validator("experiment")
    @classmethod
    def _known(cls, name: str) -> str:
        from .registry import registry

        if name not in registry():
            raise ValueError(f"unknown experiment {name!r}; choose from {registry()}")
        return name

    @field_validator("sizes")
    @classmethod
    def _positive_sizes(cls, sizes: list[int]) -> list[int]:
        if any(n < 1 for n in sizes):
            raise ValueError("tree sizes must be positive")
        return sizes

    @field_validator("v_grid")
    @classmethod
    def _increasing(cls, grid: list[float]) -> list[float]:
        if any(v <= 0 or not math.isfinite(v) for v in grid):
            raise ValueError("v_grid entries must be positive and finite")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("v_grid must be strictly increasing")
        return grid

    @field_validator("law")
    @classmethod
    def _law(cls, law):
        OffspringLaw.from_spec(law)
        return law

    @field_validator("mode")
    @classmethod
    def _mode(cls, mode):
        try:
            WalkMode.parse(mode)
        except (KeyError, ValueError) as exc:
            raise ValueError(f"bad walk mode {mode!r}") from exc
        return mode

    def offspring_law(self) -> OffspringLaw:
        return OffspringLaw.from_spec(self.law)

    def walk_mode(self) -> WalkMode:
        return WalkMode.parse(self.mode)

    def param(self, key: str, default=None):
        return self.params.get(key, default)


def load_config(experiment: str, path: str | Path | None = None, **overrides) -> ExperimentConfig:
    """Merge registry defaults, the JSON file and command-line overrides."""
    from .registry import get_experiment

    try:
        spec = get_experiment(experiment)
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc
    data: dict[str, Any] = json.loads(json.dumps(spec.defaults))
    if path is not None:
        try:
            loaded = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config must be a JSON object")
        if loaded.get("experiment", experiment) != experiment:
            raise ConfigError(
                f"config is for {loaded['experiment']!r}, not {experiment!r}")
        params = {**data.get("params", {}), **loaded.pop("params", {})}
        data.update(loaded)
        data["params"] = params
    data.update({k: v for k, v in overrides.items() if v is not None})
    data["experiment"] = experiment
    try:
        return ExperimentConfig(**data)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
