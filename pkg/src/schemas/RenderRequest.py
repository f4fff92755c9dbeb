import math
from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator


class RenderMode(str, Enum):
    RAW = "raw"
    SMOOTH = "smooth"
    DEPTH = "depth"


class TraversalMode(str, Enum):
    SURFACE = "surface"  # stop in the first cell where the ray meets fluid
    VOLUME = "volume"  # walk until the ray leaves the domain


class Camera(BaseModel):
    eye: List[float] = Field(min_length=3, max_length=3)
    look_at: List[float] = Field(min_length=3, max_length=3)
    up: List[float] = Field(default_factory=lambda: [0.0, 0.0, 1.0], min_length=3, max_length=3)
    fov: float = math.pi / 3.0  # vertical, radians
    width: int = 320
    height: int = 240

    @field_validator("fov")
    @classmethod
    def fov_in_range(cls, v: float) -> float:
        if not 0.0 < v < math.pi:
            raise ValueError("fov must lie in (0, pi)")
        return v

    @field_validator("width", "height")
    @classmethod
    def positive_resolution(cls, v: int) -> int:
        if v <= 0:
            raise ValueError("resolution must be positive")
        return v

    @model_validator(mode="after")
    def distinct_eye(self):
        if self.eye == self.look_at:
            raise ValueError("eye and look_at must differ")
        return self


class RenderRequest(BaseModel):
    frame: str
    out: str
    camera: Camera
    mode: RenderMode = RenderMode.RAW
    traversal: TraversalMode = TraversalMode.VOLUME  # depth mode: fluid thickness or distance to the surface
    blend_radius: Optional[float] = None  # defaults to half the mean sphere radius
    samples: int = 0
    points_out: Optional[str] = None
    seed: int = 0
    threads: int = 1
