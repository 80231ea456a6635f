"""Experiment configuration files.

Configs are JSON objects; unknown keys are rejected. A run manifest (which
wraps the resolved config) is accepted wherever a config is, so any run can
be replayed from its output directory.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .nca import DeathRule
from .objectives import Empowerment, Kind, Loss, ObjectiveSpec
from .shapes import parse_target

Variant = Literal[
    "bi_loss",
    "tri_loss",
    "tri_loss_empowerment",
    "tri_loss_local_entropy_min",
    "tri_loss_local_entropy_max",
    "tri_loss_global_entropy_min",
]

MANIFEST_VERSION = 1


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    variant: Variant = "bi_loss"
    k: Optional[int] = None
    crop_last: Optional[int] = Field(default=None, ge=1)
    M: int = Field(default=25, ge=3)
    N: int = Field(default=50, ge=2)
    population_size: int = Field(default=100, ge=2)
    generations: int = Field(default=200, ge=0)
    replicates: int = Field(default=10, ge=1)
    master_seed: int = Field(default=0, ge=0)
    target: str = "square:12"
    death_rule: DeathRule = DeathRule.OVERWRITE_ALWAYS
    synchronous: bool = False
    mutation_sigma: float = Field(default=0.5, gt=0)
    max_retries: int = Field(default=1000, ge=1)
    checkpoint_every: int = Field(default=0, ge=0)
    seed_population_path: Optional[str] = None
    output_dir: str = "runs"

    @model_validator(mode="after")
    def _check(self):
        if self.variant == "tri_loss_empowerment":
            if self.k is None:
                raise ValueError("k is required for tri_loss_empowerment")
            if not 1 <= self.k <= self.N - 1:
                raise ValueError(f"k must lie in [1, {self.N - 1}], got {self.k}")
        elif self.k is not None or self.crop_last is not None:
            raise ValueError("k and crop_last only apply to tri_loss_empowerment")
        if self.variant == "tri_loss" and self.N % 2:
            raise ValueError("tri_loss needs an even N")
        return self

    def objectives(self) -> List[ObjectiveSpec]:
        N = self.N
        if self.variant == "bi_loss":
            return [Loss(0, N)]
        if self.variant == "tri_loss":
            return [Loss(0, N // 2), Loss(N // 2, N)]
        if self.variant == "tri_loss_empowerment":
            return [Loss(0, N), Empowerment(self.k, self.crop_last)]
        kind = {
            "tri_loss_local_entropy_min": Kind.LOCAL_ENTROPY_MIN,
            "tri_loss_local_entropy_max": Kind.LOCAL_ENTROPY_MAX,
            "tri_loss_global_entropy_min": Kind.GLOBAL_ENTROPY_MIN,
        }[self.variant]
        return [Loss(0, N), ObjectiveSpec(kind)]

    @property
    def label(self) -> str:
        if self.variant != "tri_loss_empowerment":
            return self.variant
        crop = "" if self.crop_last is None else f"_crop{self.crop_last}"
        return f"tri_loss_empowerment_k{self.k}{crop}"

    def target_shape(self):
        return parse_target(self.target, self.M)


PRESETS = {
    "desk": {"population_size": 100, "generations": 200, "replicates": 10},
    "smoke": {"population_size": 4, "generations": 2, "replicates": 2},
    "full": {"population_size": 400, "generations": 2000, "replicates": 35},
    "highres": {
        "population_size": 400, "generations": 1500, "replicates": 35,
        "M": 50, "N": 100, "target": "square:24",
    },
    "finetune": {"population_size": 400, "generations": 500, "replicates": 35},
}


def _format(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def make_config(data: Optional[dict] = None, preset: Optional[str] = None, **overrides) -> ExperimentConfig:
    merged = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"preset: unknown preset {preset!r}")
        merged.update(PRESETS[preset])
    merged.update(data or {})
    merged.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**merged)
    except ValidationError as exc:
        raise ConfigError(_format(exc)) from None


def load_config(path, **overrides) -> ExperimentConfig:
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ConfigError("<root>: config must be a JSON object")
    if "manifest_version" in data:
        data = data["config"]
    return make_config(data, **overrides)


class AnalysisConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    extra_steps: Optional[int] = Field(default=None, ge=0)
    connectivity: Literal[4, 8] = 4
    comparisons: Optional[int] = Field(default=None, ge=1)
    alpha: float = Field(default=0.05, gt=0, lt=1)


def load_analysis_config(path=None) -> AnalysisConfig:
    if path is None:
        return AnalysisConfig()
    try:
        return AnalysisConfig(**json.loads(Path(path).read_text()))
    except ValidationError as exc:
        raise ConfigError(_format(exc)) from None
