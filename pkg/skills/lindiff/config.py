"""Experiment configuration: a flat ``key = value`` file validated by pydantic."""

from __future__ import annotations

import typing
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from skills.lindiff.errors import ConfigError


def _default_tau_grid() -> list[float]:
    return [float(v) for v in np.geomspace(1.0, 1e9, 37)]


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    d: int = Field(100, gt=0)
    steps: int = Field(100, ge=2, alias="T")
    k: float = Field(1.0, ge=0)
    k_list: list[float] = Field(default_factory=list)
    spectrum_path: str | None = None
    c: float = Field(0.0, ge=0)
    c_list: list[float] = Field(default_factory=list)
    zeta_total: float = Field(10.0, gt=0)
    coupling: Literal["alpha_bar", "sqrt_alpha_bar"] = "alpha_bar"
    seed: int = 0
    n_list: list[int] = Field(default_factory=lambda: [10, 30, 100, 300, 1000])
    tau_grid: list[float] = Field(default_factory=_default_tau_grid)
    eta: float = Field(1.0, gt=0)
    sigma_choice: Literal["zero", "match_beta"] = "match_beta"
    objective: Literal["noise", "data"] = "noise"
    sampler: Literal["iterative", "one_step"] = "iterative"
    draws: int = Field(10, gt=0)
    noise_draws: int = Field(0, ge=0)
    test_samples: int = Field(1000, gt=0)
    sample_count: int = Field(1000, gt=0)
    training_path: str | None = None
    reference_c: float = Field(1e-2, ge=0)
    mode_eta: float = Field(1e-3, gt=0)
    drop_leading: int = Field(5, ge=0)
    threads: int = Field(1, gt=0)
    out: str = "output/lindiff.csv"

    @field_validator("n_list")
    @classmethod
    def _positive_sizes(cls, value: list[int]) -> list[int]:
        if not value:
            raise ValueError("n_list must not be empty")
        if any(n < 1 for n in value):
            raise ValueError("every N in n_list must be >= 1")
        return value

    @field_validator("k_list", "c_list")
    @classmethod
    def _non_negative(cls, value: list[float]) -> list[float]:
        if any(v < 0 for v in value):
            raise ValueError("values must be >= 0")
        return value

    @field_validator("tau_grid")
    @classmethod
    def _tau_grid(cls, value: list[float]) -> list[float]:
        if not value:
            raise ValueError("tau_grid must not be empty")
        if any(v < 0 for v in value):
            raise ValueError("training times must be >= 0")
        return value

    @model_validator(mode="after")
    def _output_path(self) -> ExperimentConfig:
        parent = Path(self.out).expanduser().resolve().parent
        for folder in (parent, *parent.parents):
            if folder.exists():
                if not folder.is_dir():
                    raise ValueError(f"output directory {parent} is blocked by file {folder}")
                break
        return self

    def hierarchy_exponents(self) -> list[float]:
        return self.k_list or [self.k]

    def reg_scales(self) -> list[float]:
        return self.c_list or [self.c]


def _list_fields() -> set[str]:
    names: set[str] = set()
    for name, field in ExperimentConfig.model_fields.items():
        if typing.get_origin(field.annotation) is list:
            names.add(name)
            if field.alias:
                names.add(field.alias)
    return names


def parse_config_text(text: str) -> dict[str, Any]:
    list_keys = _list_fields()
    values: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: missing key")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if key in list_keys:
            values[key] = [item.strip() for item in value.split(",") if item.strip()]
        else:
            values[key] = value
    return values


def build_config(values: dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(values)
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in exc.errors()
        )
        raise ConfigError(f"invalid config: {problems}") from exc


def load_config(path: str | Path) -> ExperimentConfig:
    cfg_path = Path(path).expanduser().resolve()
    if not cfg_path.exists():
        raise ConfigError(f"config file not found: {cfg_path}")
    try:
        text = cfg_path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {cfg_path}: {exc}") from exc
    return build_config(parse_config_text(text))


def with_overrides(config: ExperimentConfig, **overrides: Any) -> ExperimentConfig:
    """Re-validate ``config`` with the non-None overrides applied."""
    values = config.model_dump()
    values.update({key: value for key, value in overrides.items() if value is not None})
    return build_config(values)
