"""Typed, range-checked configuration blocks.

Every block rejects unknown keys.  A run configuration file is TOML (or
JSON) with one section per command; command-line flags override file values.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from regime_lr.errors import InputError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GAConfig(_Block):
    population: int = Field(60, ge=1, le=10_000)
    generations: int = Field(150, ge=0, le=100_000)
    tournament_size: int = Field(3, ge=1)
    crossover_rate: float = Field(0.9, ge=0.0, le=1.0)
    blend: float = Field(0.5, ge=0.0, le=2.0)
    mutation_rate: float = Field(0.2, ge=0.0, le=1.0)
    mutation_scale: float = Field(0.1, gt=0.0, le=1.0)
    mutation_decay: float = Field(0.98, gt=0.0, le=1.0)
    elite: int = Field(2, ge=1)
    local_fraction: float = Field(0.3, ge=0.0, le=1.0)
    local_scale: float = Field(0.02, gt=0.0, le=1.0)
    max_redraws: int = Field(5, ge=0, le=100)
    patience: Optional[int] = Field(None, ge=1)
    stall_tol: float = Field(1e-8, ge=0.0)
    polish: bool = True
    polish_max_evals: int = Field(2000, ge=1)
    tol_x: float = Field(1e-6, gt=0.0)
    tol_f: float = Field(1e-8, gt=0.0)

    @classmethod
    def null_only(cls) -> GAConfig:
        """Evaluate the null point alone: no search and no polish."""
        return cls(population=1, generations=0, polish=False)


class BoundsConfig(_Block):
    sigma2_lower: float = Field(1e-4, gt=0.0)
    sigma2_upper: float = Field(10.0, gt=0.0)
    intercept_sd: float = Field(10.0, gt=0.0)

    @model_validator(mode="after")
    def _ordered(self) -> BoundsConfig:
        if self.sigma2_lower >= self.sigma2_upper:
            raise ValueError("sigma2_lower must be below sigma2_upper")
        return self


class ConeConfig(_Block):
    restarts: int = Field(8, ge=0, le=1000)
    tol: float = Field(1e-10, gt=0.0)
    max_iter: int = Field(200, ge=1)


class ModelConfig(_Block):
    family: Literal["lmar", "gmar"] = "gmar"
    p: int = Field(1, ge=1, le=12)
    m: int = Field(1, ge=1, le=12)
    grid: Optional[list[list[float]]] = None

    @field_validator("family", mode="before")
    @classmethod
    def _lower(cls, v: Any) -> Any:
        return v.lower() if isinstance(v, str) else v

    @model_validator(mode="after")
    def _m_le_p(self) -> ModelConfig:
        if self.family == "lmar" and self.m > self.p:
            raise ValueError("m must not exceed p")
        return self


class LrTestConfig(_Block):
    model: ModelConfig = ModelConfig()
    J: int = Field(1000, ge=1, le=10_000_000)
    seed: int = Field(0, ge=0, le=2**63 - 1)
    eig_floor: float = Field(1e-10, gt=0.0, lt=1.0)
    chunk_size: int = Field(256, ge=1)
    ga: GAConfig = GAConfig()
    bounds: BoundsConfig = BoundsConfig()
    cone: ConeConfig = ConeConfig()


class DgpConfig(_Block):
    """A data-generating process: AR(p) or a two-regime mixture."""

    kind: Literal["ar", "lmar", "gmar"] = "ar"
    p: int = Field(1, ge=1, le=12)
    m: int = Field(1, ge=1, le=12)
    intercept: float = 0.0
    coeffs: list[float] = [0.5]
    sigma2: float = Field(1.0, gt=0.0)
    alpha: list[float] = []
    regime2_intercept: Optional[float] = None
    regime2_coeffs: Optional[list[float]] = None
    regime2_sigma2: Optional[float] = Field(None, gt=0.0)

    @field_validator("kind", mode="before")
    @classmethod
    def _lower(cls, v: Any) -> Any:
        return v.lower() if isinstance(v, str) else v

    @model_validator(mode="after")
    def _shapes(self) -> DgpConfig:
        if len(self.coeffs) != self.p:
            raise ValueError(f"coeffs must have p={self.p} entries")
        if self.kind != "ar":
            if self.regime2_coeffs is None or self.regime2_sigma2 is None:
                raise ValueError("mixture DGP needs regime2_coeffs and regime2_sigma2")
            if len(self.regime2_coeffs) != self.p:
                raise ValueError(f"regime2_coeffs must have p={self.p} entries")
            want = self.m + 1 if self.kind == "lmar" else 1
            if len(self.alpha) != want:
                raise ValueError(f"{self.kind} alpha must have {want} entries")
        return self


class SimulateConfig(_Block):
    dgp: DgpConfig = DgpConfig()
    T: int = Field(500, ge=1, le=10_000_000)
    presample: int = Field(200, ge=0)
    seed: int = Field(0, ge=0, le=2**63 - 1)


class EstimateConfig(_Block):
    model: ModelConfig = ModelConfig()
    seed: int = Field(0, ge=0, le=2**63 - 1)
    ga: GAConfig = GAConfig()
    bounds: BoundsConfig = BoundsConfig()


class StudyConfig(_Block):
    dgp: DgpConfig = DgpConfig()
    sample_sizes: list[int] = [250, 500, 1000]
    replications: int = Field(200, ge=1)
    J: int = Field(500, ge=1)
    levels: list[float] = [0.10, 0.05, 0.01]
    families: list[Literal["lmar", "gmar"]] = ["lmar", "gmar"]
    p: int = Field(1, ge=1, le=12)
    m: int = Field(1, ge=1, le=12)
    seed: int = Field(0, ge=0, le=2**63 - 1)
    presample: int = Field(200, ge=0)
    lmar_grid: Optional[list[list[float]]] = None
    gmar_grid: Optional[list[list[float]]] = None
    max_failure_rate: float = Field(0.02, ge=0.0, le=1.0)
    ga: GAConfig = GAConfig()
    bounds: BoundsConfig = BoundsConfig()
    cone: ConeConfig = ConeConfig()

    @field_validator("sample_sizes")
    @classmethod
    def _sizes(cls, v: list[int]) -> list[int]:
        if not v or any(t < 20 for t in v):
            raise ValueError("sample sizes must be a nonempty list of integers >= 20")
        return v

    @field_validator("levels")
    @classmethod
    def _levels(cls, v: list[float]) -> list[float]:
        if not v or any(not 0.0 < a < 1.0 for a in v):
            raise ValueError("levels must lie in (0, 1)")
        return v

    @field_validator("families")
    @classmethod
    def _families(cls, v: list[str]) -> list[str]:
        if not v:
            raise ValueError("at least one test family is required")
        return v


class RunConfig(_Block):
    simulate: SimulateConfig = SimulateConfig()
    estimate: EstimateConfig = EstimateConfig()
    test: LrTestConfig = LrTestConfig()
    mc: StudyConfig = StudyConfig()


def load_run_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(raw) if path.suffix.lower() == ".json" else tomllib.loads(raw.decode())
    except (ValueError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot parse config {path}: {exc}") from exc
    return validate(RunConfig, data)


def validate(model: type[BaseModel], data: Any):
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        raise InputError(f"invalid configuration: {exc}") from exc


def override(block: BaseModel, **changes: Any):
    """Copy ``block`` with non-None ``changes`` applied and re-validated."""
    data = block.model_dump()
    for key, val in changes.items():
        if val is None:
            continue
        target = data
        *path, leaf = key.split(".")
        for part in path:
            target = target[part]
        target[leaf] = val
    return validate(type(block), data)
