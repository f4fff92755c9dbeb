import math
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Vec3 = List[float]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# --- Domain ---
class BoxConfig(_Strict):
    lower: Vec3 = Field(min_length=3, max_length=3)
    upper: Vec3 = Field(min_length=3, max_length=3)

    @model_validator(mode="after")
    def ordered(self):
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("box lower corner must be below the upper corner on every axis")
        return self


class HalfspaceConfig(_Strict):
    normal: Vec3 = Field(min_length=3, max_length=3)
    offset: float  # normal . x <= offset


class DomainConfig(_Strict):
    box: Optional[BoxConfig] = None
    halfspaces: Optional[List[HalfspaceConfig]] = None

    @model_validator(mode="after")
    def exactly_one(self):
        if (self.box is None) == (self.halfspaces is None):
            raise ValueError("domain needs exactly one of 'box' or 'halfspaces'")
        return self


# --- Fluids ---
class PhaseConfig(_Strict):
    id: int
    density: float = Field(default=1000.0, gt=0.0)
    viscosity: float = Field(default=0.0, ge=0.0)
    surface_tension: float = Field(default=0.0, ge=0.0)
    boundary_affinity: Dict[int, float] = Field(default_factory=dict)
    default_affinity: float = Field(default=0.0, ge=0.0)


class EmitterConfig(_Strict):
    shape: Literal["box", "sphere"] = "box"
    lower: Optional[Vec3] = None
    upper: Optional[Vec3] = None
    center: Optional[Vec3] = None
    radius: Optional[float] = Field(default=None, gt=0.0)
    spacing: float = Field(gt=0.0)
    phase: int = 0
    velocity: Vec3 = Field(default_factory=lambda: [0.0, 0.0, 0.0], min_length=3, max_length=3)
    radial_speed: float = 0.0  # away from the shape center
    jitter: float = Field(default=0.0, ge=0.0, lt=0.5)  # fraction of the spacing

    @model_validator(mode="after")
    def shape_fields(self):
        if self.shape == "box" and (self.lower is None or self.upper is None):
            raise ValueError("box emitter needs 'lower' and 'upper'")
        if self.shape == "sphere" and (self.center is None or self.radius is None):
            raise ValueError("sphere emitter needs 'center' and 'radius'")
        return self


class ViscosityPairConfig(_Strict):
    phases: List[int] = Field(min_length=2, max_length=2)
    viscosity: float = Field(ge=0.0)


# --- Simulation ---
class SimConfig(_Strict):
    dt: float = Field(default=0.005, gt=0.0)
    epsilon: float = Field(default=0.02, gt=0.0)
    gravity: Vec3 = Field(default_factory=lambda: [0.0, 0.0, -9.81], min_length=3, max_length=3)
    viscosity_pairs: List[ViscosityPairConfig] = Field(default_factory=list)
    steps: int = Field(default=100, ge=0)
    tolerance: float = Field(default=0.01, gt=0.0)
    max_newton: int = Field(default=100, gt=0)
    cg_tol: float = Field(default=1e-3, gt=0.0)
    viscosity_cg_tol: float = Field(default=1e-10, gt=0.0)
    ball_aware: bool = True

    @field_validator("epsilon")
    @classmethod
    def epsilon_finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("epsilon must be finite")
        return v


class OutputConfig(_Strict):
    frame_stride: int = Field(default=1, gt=0)
    directory: str = "frames"


class SceneConfig(_Strict):
    name: str = "scene"
    domain: DomainConfig
    phases: List[PhaseConfig] = Field(min_length=1)
    emitters: List[EmitterConfig] = Field(min_length=1)
    sim: SimConfig = Field(default_factory=SimConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)
    seed: int = 0

    @model_validator(mode="after")
    def phases_exist(self):
        ids = [p.id for p in self.phases]
        if len(set(ids)) != len(ids):
            raise ValueError("phase ids must be unique")
        for k, emitter in enumerate(self.emitters):
            if emitter.phase not in ids:
                raise ValueError(f"emitters.{k}.phase: unknown phase id {emitter.phase}")
        for k, pair in enumerate(self.sim.viscosity_pairs):
            for pid in pair.phases:
                if pid not in ids:
                    raise ValueError(f"sim.viscosity_pairs.{k}.phases: unknown phase id {pid}")
        return self
