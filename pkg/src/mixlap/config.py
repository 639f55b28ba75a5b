"""Experiment configuration: TOML or JSON, schema version 1."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from mixlap.domain import Domain
from mixlap.errors import ConfigError, MixlapError
from mixlap.semilinear import CATALOG

try:  # Python ≥ 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

AUDITS = ("moser", "barrier", "comparison", "interpolation", "stability", "holder", "contraction")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class LambdaPolicy(_Strict):
    policy: Literal["fixed", "auto"] = "fixed"
    value: float = Field(default=10.0, ge=0.0)
    # auto: λ = factor · empirical threshold
    factor: float = Field(default=2.0, gt=0.0)


class RhsSpec(_Strict):
    name: str = "const"
    params: Dict[str, float] = Field(default_factory=dict)

    @field_validator("name")
    @classmethod
    def _known(cls, v):
        if v not in CATALOG:
            raise ValueError(f"unknown nonlinearity {v!r}; choose from {sorted(CATALOG)}")
        return v


class OutputSpec(_Strict):
    report: str = "report.json"
    csv: Optional[str] = None


class ExperimentConfig(_Strict):
    schema_version: Literal[1] = 1
    domain: Dict[str, Union[float, str, List[float]]]
    s: float = Field(gt=0.0, lt=1.0)
    n: Optional[int] = None
    h: float = Field(gt=0.0)
    h_list: Optional[List[float]] = None
    lam: LambdaPolicy = Field(default_factory=LambdaPolicy)
    rhs: RhsSpec = Field(default_factory=RhsSpec)
    audits: List[str] = Field(default_factory=lambda: list(AUDITS))
    output: OutputSpec = Field(default_factory=OutputSpec)
    seed: int = 0
    advisory: bool = False
    tol: float = Field(default=1e-10, gt=0.0)
    p: float = Field(default=2.0, gt=1.0)
    moser_M: int = Field(default=6, ge=3)
    trials: int = Field(default=20, ge=10)
    epsilon_list: List[float] = Field(default_factory=lambda: [1.0, 0.1, 0.01])
    holder_threshold: float = 0.9
    holder_max_residual: float = 0.1

    @field_validator("audits")
    @classmethod
    def _audits(cls, v):
        if v == ["all"]:
            return list(AUDITS)
        bad = [a for a in v if a not in AUDITS]
        if bad:
            raise ValueError(f"unknown audits {bad}; choose from {list(AUDITS)}")
        return v

    @field_validator("h_list")
    @classmethod
    def _h_list(cls, v):
        if v is None:
            return v
        if len(v) < 3 or any(b >= a for a, b in zip(v, v[1:])) or min(v) <= 0:
            raise ValueError("h_list needs at least 3 strictly decreasing positive spacings")
        return v

    @model_validator(mode="after")
    def _consistency(self):
        try:
            dom = Domain.from_dict(self.domain)
        except (MixlapError, KeyError, TypeError) as exc:
            raise ValueError(f"domain: {exc}") from None
        if self.h > dom.diameter / 2:
            raise ValueError(f"h: spacing {self.h} exceeds diam/2 = {dom.diameter / 2}")
        if self.h_list is not None and max(self.h_list) > dom.diameter / 2:
            raise ValueError(f"h_list: spacing {max(self.h_list)} exceeds diam/2 = {dom.diameter / 2}")
        if self.n is not None and self.n != dom.dim:
            raise ValueError(f"n: {self.n} does not match the {dom.dim}D domain")
        if self.s > 0.5 and not self.advisory:
            raise ValueError(f"s: {self.s} > 1/2 is only allowed with advisory = true")
        if "moser" in self.audits and not dom.dim > 2 * self.s:
            raise ValueError(f"s: the moser audit needs n > 2s (n={dom.dim}, s={self.s})")
        if "stability" in self.audits and self.h_list is None:
            raise ValueError("h_list: required by the stability audit")
        return self

    @property
    def domain_obj(self) -> Domain:
        return Domain.from_dict(self.domain)


def _format_error(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "config"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def parse_config(data: dict, advisory: bool = False) -> ExperimentConfig:
    if advisory:
        data = {**data, "advisory": True}
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_error(exc)) from None


def load_config(path, advisory: bool = False) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(raw)
        else:
            data = tomllib.loads(raw.decode("utf-8"))
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config root must be a table/object")
    return parse_config(data, advisory)
