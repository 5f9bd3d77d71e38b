"""Request and response models shared by the HTTP service and the command line."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .cuts import DIRECTIONS, CutSpec
from .param_solver import SolverConfig
from .polygon import PolygonSpec

SCHEMA_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Geometry(_Strict):
    H: list[float] = Field(..., min_length=5, max_length=5, description="signed sides H1..H5")
    H_plus: float
    H_minus: Optional[float] = Field(None, description="defaults to the closure value")
    cut_lengths: list[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0], min_length=3, max_length=3)
    cut_directions: list[str] = Field(default_factory=lambda: ["vertical"] * 3, min_length=3, max_length=3)

    @field_validator("cut_directions")
    @classmethod
    def _directions(cls, v):
        bad = [d for d in v if d not in DIRECTIONS]
        if bad:
            raise ValueError(f"unknown cut direction(s) {bad}; use {list(DIRECTIONS)}")
        return v

    def polygon(self) -> PolygonSpec:
        if self.H_minus is None:
            return PolygonSpec.from_closure(self.H, self.H_plus)
        return PolygonSpec(tuple(self.H), self.H_plus, self.H_minus)

    def cut_spec(self) -> CutSpec:
        return CutSpec(self.polygon(), tuple(self.cut_lengths), tuple(self.cut_directions))

    @property
    def has_cuts(self) -> bool:
        return any(v > 0 for v in self.cut_lengths)


class Flow(_Strict):
    permeability: float = Field(1.0, gt=0)
    head_drop: float = Field(1.0, gt=0)


class Solver(_Strict):
    tol: float = Field(1e-10, gt=0)
    max_newton: int = Field(30, ge=1)
    continuation_steps: int = Field(4, ge=1)
    max_backtracks: int = Field(12, ge=1)

    def config(self) -> SolverConfig:
        return SolverConfig(self.tol, self.max_newton, self.continuation_steps, self.max_backtracks)


class Output(_Strict):
    format: Literal["json", "csv", "svg"] = "json"
    path: Optional[str] = None
    streamlines: int = Field(9, ge=1, le=200)
    samples: int = Field(60, ge=2, le=5000)


class MapRequest(_Strict):
    direction: Literal["w2x", "x2w"] = "x2w"
    points: list[tuple[float, float]] = Field(default_factory=list)


class SweepGrid(_Strict):
    lengths: list[list[float]] = Field(..., min_length=3, max_length=3,
                                       description="cut lengths per corner (w2, w4, w5)")

    @field_validator("lengths")
    @classmethod
    def _nonempty(cls, v):
        if any(len(a) == 0 for a in v):
            raise ValueError("every sweep axis needs at least one length")
        return v


class JobConfig(_Strict):
    schema_version: int
    geometry: Geometry
    flow: Flow = Flow()
    solver: Solver = Solver()
    output: Output = Output()
    map: Optional[MapRequest] = None
    sweep: Optional[SweepGrid] = None

    @model_validator(mode="after")
    def _version(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {self.schema_version}; expected {SCHEMA_VERSION}")
        return self


# responses -------------------------------------------------------------------

class ViolationOut(BaseModel):
    rule: str
    message: str


class ValidateResult(BaseModel):
    valid: bool
    violations: list[ViolationOut]
    fingerprint: str


class KappaResult(BaseModel):
    lam: float
    kappa: float
    kappa_hypergeometric: float
    kappa_agm: float
    kappa_route_difference: float
    Q: float


class ErrorResult(BaseModel):
    error: str
    kind: Literal["geometry", "solver", "io", "config"]
    detail: dict = Field(default_factory=dict)
