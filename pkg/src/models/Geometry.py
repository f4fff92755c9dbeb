# src/models/Geometry.py
"""
Geometric value types: planes, convex cells, generalized polygons and spheres.

Vectors are plain ``numpy`` arrays of shape (3,) and dtype float64.
"""
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from src.utils.Helper import plane_basis

Vec3 = np.ndarray

# on-plane tests use this fraction of the domain diagonal
GEOM_TOLERANCE_FACTOR = 1e-9


@dataclass(frozen=True, eq=False)
class Plane:
    """Halfspace ``n.x <= d`` with a unit outward normal ``n``."""
    n: np.ndarray
    d: float

    @staticmethod
    def from_normal_offset(normal: Sequence[float], offset: float) -> "Plane":
        normal = np.asarray(normal, dtype=float)
        norm = float(np.linalg.norm(normal))
        if norm == 0.0:
            raise ValueError("Plane normal must be non-zero")
        return Plane(n=normal / norm, d=float(offset) / norm)

    def signed_distance(self, x: np.ndarray) -> Union[float, np.ndarray]:
        return x @ self.n - self.d

    def project(self, x: np.ndarray) -> np.ndarray:
        return x - (float(x @ self.n) - self.d) * self.n


@dataclass(frozen=True)
class NeighborTag:
    """What lies across a facet: another site, a domain face, or (for restricted cells) the free surface."""
    kind: str
    index: int = -1

    SITE = "site"
    DOMAIN = "domain"
    SHELL = "shell"
    BOUND = "bound"

    @staticmethod
    def site(j: int) -> "NeighborTag":
        return NeighborTag(NeighborTag.SITE, int(j))

    @staticmethod
    def domain(k: int) -> "NeighborTag":
        return NeighborTag(NeighborTag.DOMAIN, int(k))

    @staticmethod
    def shell() -> "NeighborTag":
        return NeighborTag(NeighborTag.SHELL)

    @property
    def is_site(self) -> bool:
        return self.kind == NeighborTag.SITE

    @property
    def is_domain(self) -> bool:
        return self.kind == NeighborTag.DOMAIN

    def __repr__(self):
        return f"{self.kind}({self.index})" if self.kind != NeighborTag.SHELL else "shell"


@dataclass
class Facet:
    plane: Plane
    loop: Tuple[int, ...]  # counter-clockwise viewed from outside
    tag: NeighborTag


@dataclass
class ConvexCell:
    vertices: np.ndarray  # (V, 3)
    facets: List[Facet]
    tol: float

    def facet_points(self, facet: Facet) -> np.ndarray:
        return self.vertices[list(facet.loop)]

    def contains(self, x: np.ndarray, slack: Optional[float] = None) -> bool:
        slack = self.tol if slack is None else slack
        return all(float(f.plane.signed_distance(x)) <= slack for f in self.facets)

    def neighbor_sites(self) -> List[int]:
        return [f.tag.index for f in self.facets if f.tag.is_site]

    def bounding_radius(self, center: np.ndarray) -> float:
        return float(np.sqrt(np.max(np.sum((self.vertices - center) ** 2, axis=1))))

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))


# --- Boundary pieces of generalized polygons ---

@dataclass(frozen=True, eq=False)
class Segment:
    a: np.ndarray
    b: np.ndarray

    def start(self) -> np.ndarray:
        return self.a

    def end(self) -> np.ndarray:
        return self.b


@dataclass(frozen=True, eq=False)
class Arc:
    center: np.ndarray
    radius: float
    axis: np.ndarray
    start_angle: float
    end_angle: float
    ccw: bool = True

    def _frame(self) -> Tuple[np.ndarray, np.ndarray]:
        return plane_basis(self.axis)

    def point(self, angle: float) -> np.ndarray:
        u, w = self._frame()
        return self.center + self.radius * (math.cos(angle) * u + math.sin(angle) * w)

    @property
    def sweep(self) -> float:
        """Signed swept angle, positive when counter-clockwise about ``axis``."""
        if self.ccw:
            return (self.end_angle - self.start_angle) % (2.0 * math.pi)
        return -((self.start_angle - self.end_angle) % (2.0 * math.pi))

    def start(self) -> np.ndarray:
        return self.point(self.start_angle)

    def end(self) -> np.ndarray:
        return self.point(self.start_angle + self.sweep)

    def angle_of(self, x: np.ndarray) -> float:
        u, w = self._frame()
        rel = x - self.center
        return math.atan2(float(rel @ w), float(rel @ u))


@dataclass(frozen=True, eq=False)
class FullCircle:
    center: np.ndarray
    radius: float
    axis: np.ndarray


BoundaryPiece = Union[Segment, Arc, FullCircle]


@dataclass
class GeneralizedPolygon:
    plane: Plane
    boundary: List[BoundaryPiece]
    tol: float = 1e-12

    @property
    def is_full_circle(self) -> bool:
        return len(self.boundary) == 1 and isinstance(self.boundary[0], FullCircle)


@dataclass(frozen=True, eq=False)
class Sphere:
    center: np.ndarray
    r2: float

    @property
    def radius(self) -> float:
        return math.sqrt(max(self.r2, 0.0))

    @property
    def area(self) -> float:
        return 4.0 * math.pi * max(self.r2, 0.0)

    @property
    def ball_volume(self) -> float:
        return 4.0 / 3.0 * math.pi * max(self.r2, 0.0) ** 1.5


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray  # unit

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass
class Domain:
    """The simulation domain: its halfspaces and the convex cell they bound."""
    halfspaces: List[Plane]
    cell: ConvexCell
    volume: float = field(default=0.0)

    @property
    def tol(self) -> float:
        return self.cell.tol

    @property
    def lower(self) -> np.ndarray:
        return self.cell.vertices.min(axis=0)

    @property
    def upper(self) -> np.ndarray:
        return self.cell.vertices.max(axis=0)

    @property
    def diagonal(self) -> float:
        return self.cell.diagonal
