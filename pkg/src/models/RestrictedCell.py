from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np

from src.models.Geometry import GeneralizedPolygon, NeighborTag, Plane


class CellStatus(str, Enum):
    EMPTY = "empty"
    FULL_BALL = "full_ball"
    CLIPPED = "clipped"


class FacetRestriction(str, Enum):
    OUTSIDE = "outside"
    UNTOUCHED = "untouched"


@dataclass
class RestrictedFacet:
    tag: NeighborTag
    plane: Plane
    shape: GeneralizedPolygon
    area: float  # |B_ij|
    signed_height: float  # h_ij
    centroid: np.ndarray


@dataclass
class RestrictedCell:
    status: CellStatus
    volume: float
    centroid: np.ndarray
    free_surface_area: float
    facets: List[RestrictedFacet] = field(default_factory=list)
    interior_point: Optional[np.ndarray] = None
    fallbacks: int = 0

    @property
    def is_empty(self) -> bool:
        return self.status == CellStatus.EMPTY

    def site_facets(self) -> List[RestrictedFacet]:
        return [f for f in self.facets if f.tag.is_site]

    def domain_facets(self) -> List[RestrictedFacet]:
        return [f for f in self.facets if f.tag.is_domain]

    @staticmethod
    def empty(center: np.ndarray) -> "RestrictedCell":
        return RestrictedCell(status=CellStatus.EMPTY, volume=0.0, centroid=np.array(center, dtype=float),
                              free_surface_area=0.0)
