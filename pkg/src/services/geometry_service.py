# src/services/geometry_service.py
"""
Convex cell construction and clipping, plus analytic area and centroid of
planar generalized polygons (line segments and circular arcs).
"""
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from src.models.Geometry import (
    GEOM_TOLERANCE_FACTOR,
    Arc,
    ConvexCell,
    Domain,
    Facet,
    FullCircle,
    GeneralizedPolygon,
    NeighborTag,
    Plane,
    Segment,
)
from src.utils.Errors import EmptyDomain, OpenLoop, UnboundedDomain
from src.utils.Helper import plane_basis
from src.utils.Logger import logger

# bounding box is inflated by this fraction so none of its faces survive clipping
_BOX_MARGIN = 0.1


def box_halfspaces(lower: Sequence[float], upper: Sequence[float]) -> List[Plane]:
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    planes = []
    for axis in range(3):
        e = np.zeros(3)
        e[axis] = 1.0
        planes.append(Plane(n=e.copy(), d=float(upper[axis])))
        planes.append(Plane(n=-e, d=-float(lower[axis])))
    return planes


def _box_cell(lower: np.ndarray, upper: np.ndarray, tol: float, tag_kind: str = NeighborTag.BOUND) -> ConvexCell:
    x0, y0, z0 = lower
    x1, y1, z1 = upper
    vertices = np.array([
        [x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
        [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1],
    ], dtype=float)
    # loops counter-clockwise seen from outside
    spec = [
        ((-1, 0, 0), x0, (0, 4, 7, 3)),
        ((1, 0, 0), x1, (1, 2, 6, 5)),
        ((0, -1, 0), y0, (0, 1, 5, 4)),
        ((0, 1, 0), y1, (3, 7, 6, 2)),
        ((0, 0, -1), z0, (0, 3, 2, 1)),
        ((0, 0, 1), z1, (4, 5, 6, 7)),
    ]
    facets = []
    for k, (normal, coord, loop) in enumerate(spec):
        n = np.asarray(normal, dtype=float)
        facets.append(Facet(plane=Plane(n=n, d=float(coord * n.sum())), loop=loop, tag=NeighborTag(tag_kind, k)))
    return ConvexCell(vertices=vertices, facets=facets, tol=tol)


def init_cell_from_domain(halfspaces: Sequence[Plane]) -> ConvexCell:
    """
    Builds the convex polytope bounded by ``halfspaces``.

    Each output facet carries ``NeighborTag.domain(k)`` where k indexes the input
    list; redundant halfspaces do not produce facets.
    """
    if len(halfspaces) < 4:
        raise UnboundedDomain(f"{len(halfspaces)} halfspaces cannot bound a polytope")

    normals = np.array([h.n for h in halfspaces])
    offsets = np.array([h.d for h in halfspaces])
    lower = np.empty(3)
    upper = np.empty(3)
    for axis in range(3):
        for sign, store in ((1.0, upper), (-1.0, lower)):
            c = np.zeros(3)
            c[axis] = -sign
            result = linprog(c, A_ub=normals, b_ub=offsets, bounds=[(None, None)] * 3, method="highs")
            if result.status == 2:
                raise EmptyDomain("Domain halfspaces have an empty intersection")
            if result.status == 3:
                raise UnboundedDomain("Domain halfspaces do not bound a finite polytope")
            if result.status != 0:
                raise EmptyDomain(f"Could not bound the domain: {result.message}")
            store[axis] = result.x[axis]

    extent = upper - lower
    diagonal = float(np.linalg.norm(extent))
    if diagonal <= 0.0:
        raise EmptyDomain("Domain has zero extent")
    tol = GEOM_TOLERANCE_FACTOR * diagonal
    margin = _BOX_MARGIN * max(diagonal, 1e-300)
    cell: Optional[ConvexCell] = _box_cell(lower - margin, upper + margin, tol)

    for k, plane in enumerate(halfspaces):
        cell = clip_cell(cell, plane, NeighborTag.domain(k))
        if cell is None:
            raise EmptyDomain("Domain collapsed while clipping its halfspaces")

    if any(f.tag.kind == NeighborTag.BOUND for f in cell.facets):
        raise UnboundedDomain("Domain halfspaces do not bound a finite polytope")
    return cell


def make_domain(halfspaces: Sequence[Plane]) -> Domain:
    cell = init_cell_from_domain(halfspaces)
    return Domain(halfspaces=list(halfspaces), cell=cell, volume=cell_volume_convex(cell))


def _sort_loop_by_angle(points: np.ndarray, indices: List[int], normal: np.ndarray) -> List[int]:
    center = points[indices].mean(axis=0)
    u, w = plane_basis(normal)
    rel = points[indices] - center
    angles = np.arctan2(rel @ w, rel @ u)
    order = np.argsort(angles, kind="stable")
    return [indices[i] for i in order]


def _dedupe(indices: List[int], points: np.ndarray, tol: float) -> List[int]:
    kept: List[int] = []
    for idx in indices:
        if all(np.linalg.norm(points[idx] - points[k]) > tol for k in kept):
            kept.append(idx)
    return kept


def clip_cell(cell: ConvexCell, plane: Plane, tag: NeighborTag) -> Optional[ConvexCell]:
    """
    Returns ``cell`` intersected with the halfspace of ``plane`` or ``None`` when
    nothing remains. Vertices within ``cell.tol`` of the plane count as inside.
    """
    tol = cell.tol
    s = cell.vertices @ plane.n - plane.d
    inside = s <= tol
    if inside.all():
        return cell
    if not inside.any():
        return None

    points: List[np.ndarray] = [v for v in cell.vertices]
    edge_points: Dict[Tuple[int, int], int] = {}

    def crossing(a: int, b: int) -> int:
        key = (min(a, b), max(a, b))
        idx = edge_points.get(key)
        if idx is None:
            sa, sb = s[a], s[b]
            t = sa / (sa - sb)
            points.append(cell.vertices[a] + t * (cell.vertices[b] - cell.vertices[a]))
            idx = len(points) - 1
            edge_points[key] = idx
        return idx

    on_plane = set(int(i) for i in np.nonzero(np.abs(s) <= tol)[0])
    new_facets: List[Facet] = []
    cut_vertices: List[int] = []
    for facet in cell.facets:
        loop = facet.loop
        new_loop: List[int] = []
        for a, b in zip(loop, loop[1:] + loop[:1]):
            if inside[a]:
                new_loop.append(a)
            if inside[a] != inside[b]:
                inner = a if inside[a] else b
                if inner in on_plane:
                    continue
                idx = crossing(a, b)
                new_loop.append(idx)
                cut_vertices.append(idx)
        if len(new_loop) >= 3:
            new_facets.append(Facet(plane=facet.plane, loop=tuple(new_loop), tag=facet.tag))

    pts = np.array(points)
    cut_vertices.extend(i for i in on_plane if inside[i])
    cut_vertices = _dedupe(sorted(set(cut_vertices)), pts, tol)
    if len(cut_vertices) >= 3:
        cut_loop = _sort_loop_by_angle(pts, cut_vertices, plane.n)
        rel = pts[cut_loop] - pts[cut_loop].mean(axis=0)
        area = 0.5 * abs(float(sum(np.cross(rel[i], rel[(i + 1) % len(rel)]) @ plane.n for i in range(len(rel)))))
        if area > tol * tol:
            new_facets.append(Facet(plane=plane, loop=tuple(cut_loop), tag=tag))

    if len(new_facets) < 4:
        return None

    used = sorted({i for f in new_facets for i in f.loop})
    remap = {old: new for new, old in enumerate(used)}
    facets = [Facet(plane=f.plane, loop=tuple(remap[i] for i in f.loop), tag=f.tag) for f in new_facets]
    clipped = ConvexCell(vertices=pts[used], facets=facets, tol=tol)
    if cell_volume_convex(clipped) <= tol ** 3:
        return None
    return clipped


def facet_area_vector(points: np.ndarray) -> np.ndarray:
    """Vector area of a planar loop: its normal times its area."""
    rel = points - points[0]
    total = np.zeros(3)
    for i in range(1, len(points) - 1):
        total += np.cross(rel[i], rel[i + 1])
    return 0.5 * total


def facet_area(cell: ConvexCell, facet: Facet) -> float:
    return abs(float(facet_area_vector(cell.facet_points(facet)) @ facet.plane.n))


def cell_volume_convex(cell: ConvexCell) -> float:
    """Polytope volume as a fan of tetrahedra from the vertex mean."""
    apex = cell.vertices.mean(axis=0)
    volume = 0.0
    for facet in cell.facets:
        pts = cell.facet_points(facet) - apex
        for i in range(1, len(pts) - 1):
            volume += float(np.dot(pts[0], np.cross(pts[i], pts[i + 1])))
    return volume / 6.0


def polygon_from_loop(points: np.ndarray, plane: Plane, tol: float = 1e-12) -> GeneralizedPolygon:
    pieces = [Segment(a=points[i], b=points[(i + 1) % len(points)]) for i in range(len(points))]
    return GeneralizedPolygon(plane=plane, boundary=pieces, tol=tol)


def piece_start(piece) -> np.ndarray:
    return piece.center if isinstance(piece, FullCircle) else piece.start()


def piece_end(piece) -> np.ndarray:
    return piece.center if isinstance(piece, FullCircle) else piece.end()


def _check_closed(g: GeneralizedPolygon) -> None:
    if g.is_full_circle:
        return
    if any(isinstance(p, FullCircle) for p in g.boundary):
        raise OpenLoop("A full circle cannot be part of a multi-piece boundary")
    count = len(g.boundary)
    if count == 0:
        raise OpenLoop("Empty polygon boundary")
    for k in range(count):
        gap = float(np.linalg.norm(piece_end(g.boundary[k]) - piece_start(g.boundary[(k + 1) % count])))
        if gap > g.tol:
            raise OpenLoop(f"Boundary pieces {k} and {(k + 1) % count} are {gap:.3e} apart")


def _area_and_moment(g: GeneralizedPolygon) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Signed area and first moment about an origin ``o`` on the plane, from a fan of
    triangles over the chords plus the circular segments cut off by each arc.
    """
    _check_closed(g)
    n = g.plane.n
    if g.is_full_circle:
        circle = g.boundary[0]
        sign = 1.0 if float(circle.axis @ n) >= 0.0 else -1.0
        return sign * math.pi * circle.radius ** 2, np.zeros(3), circle.center

    o = piece_start(g.boundary[0])
    area = 0.0
    moment = np.zeros(3)
    for piece in g.boundary:
        a = piece_start(piece) - o
        b = piece_end(piece) - o
        tri = 0.5 * float(np.cross(a, b) @ n)
        area += tri
        moment += tri * (a + b) / 3.0
        if isinstance(piece, Arc):
            phi = piece.sweep
            sign = 1.0 if float(piece.axis @ n) >= 0.0 else -1.0
            r = piece.radius
            seg_area = sign * 0.5 * r * r * (phi - math.sin(phi))
            mid = piece.point(piece.start_angle + 0.5 * phi) - piece.center
            mid_norm = float(np.linalg.norm(mid))
            direction = mid / mid_norm if mid_norm > 0.0 else np.zeros(3)
            area += seg_area
            moment += seg_area * (piece.center - o) + sign * (2.0 / 3.0) * r ** 3 * math.sin(0.5 * phi) ** 3 * direction
    return area, moment, o


def polygon_area(g: GeneralizedPolygon) -> float:
    area, _, _ = _area_and_moment(g)
    return abs(area)


def polygon_centroid(g: GeneralizedPolygon) -> np.ndarray:
    area, moment, origin = _area_and_moment(g)
    if area == 0.0:
        logger.debug("Centroid requested for a zero-area polygon")
        return origin.copy()
    centroid = origin + moment / area
    return g.plane.project(centroid)
