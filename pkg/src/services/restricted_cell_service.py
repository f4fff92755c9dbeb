# src/services/restricted_cell_service.py
"""
Intersection of a Laguerre cell with the ball of its site.

For cell i with site p and weight psi the ball has radius R = sqrt(psi). Each
cell facet is cut by the ball into a generalized polygon B (segments plus arcs
of the facet-plane circle). The rest of the restricted cell boundary is the
free surface K on the sphere, whose area follows from the Gauss-Bonnet theorem
applied to the radial projections of the facets from an interior point.
"""
import math
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from src.models.Geometry import (
    Arc,
    ConvexCell,
    Facet,
    FullCircle,
    GeneralizedPolygon,
    NeighborTag,
    Plane,
    Segment,
    Sphere,
)
from src.models.RestrictedCell import CellStatus, FacetRestriction, RestrictedCell, RestrictedFacet
from src.services.geometry_service import polygon_area, polygon_centroid, polygon_from_loop
from src.utils.Errors import (
    DegenerateCell,
    EvaluationFailed,
    GeometryError,
    NumericallyUnstableProjection,
)
from src.utils.Helper import make_rng, normalize, parallel_map, plane_basis
from src.utils.Logger import logger

FacetResult = Union[GeneralizedPolygon, FacetRestriction]

_PROJECTION_RETRIES = 3


# --- Facet restriction ---

def _edge_roots(a: np.ndarray, b: np.ndarray, sphere: Sphere) -> Optional[Tuple[float, float]]:
    """Parameters t1 <= t2 where a + t(b - a) meets the sphere, or None."""
    ab = b - a
    ap = a - sphere.center
    qa = float(ab @ ab)
    if qa == 0.0:
        return None
    qb = 2.0 * float(ap @ ab)
    qc = float(ap @ ap) - sphere.r2
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0.0:
        return None
    root = math.sqrt(disc)
    # numerically stable pair
    q = -0.5 * (qb + math.copysign(root, qb))
    if q == 0.0:
        return 0.0, 0.0
    t1, t2 = q / qa, qc / q
    return (t1, t2) if t1 <= t2 else (t2, t1)


def _point_in_loop(x: np.ndarray, points: np.ndarray, normal: np.ndarray) -> bool:
    for k in range(len(points)):
        a, b = points[k], points[(k + 1) % len(points)]
        if float(np.cross(b - a, x - a) @ normal) < 0.0:
            return False
    return True


def restrict_facet(points: np.ndarray, plane: Plane, sphere: Sphere, tol: float) -> FacetResult:
    """
    Cuts a convex facet loop (counter-clockwise about ``plane.n``) by the ball.

    Returns ``FacetRestriction.UNTOUCHED`` when the whole facet is inside,
    ``FacetRestriction.OUTSIDE`` when nothing of it is, otherwise the polygon
    with arcs, which is a single ``FullCircle`` when the disk lies inside the facet.
    """
    s = float(plane.signed_distance(sphere.center))
    r2 = sphere.r2 - s * s
    if r2 < tol * tol:
        return FacetRestriction.OUTSIDE
    center = sphere.center - s * plane.n
    radius = math.sqrt(r2)

    rel = points - sphere.center
    inside = np.einsum("ij,ij->i", rel, rel) <= sphere.r2
    if inside.all():
        return FacetRestriction.UNTOUCHED

    # pieces along the loop; each entry is (start, end, starts_at_entry, ends_at_exit)
    chain: List[Tuple[np.ndarray, np.ndarray, bool, bool]] = []
    count = len(points)
    for k in range(count):
        a, b = points[k], points[(k + 1) % count]
        in_a, in_b = bool(inside[k]), bool(inside[(k + 1) % count])
        if in_a and in_b:
            chain.append((a, b, False, False))
            continue
        roots = _edge_roots(a, b, sphere)
        if roots is None:
            continue
        t1, t2 = roots
        if in_a:
            x = a + min(max(t2, 0.0), 1.0) * (b - a)
            chain.append((a, x, False, True))
        elif in_b:
            x = a + min(max(t1, 0.0), 1.0) * (b - a)
            chain.append((x, b, True, False))
        elif 0.0 < t1 < t2 < 1.0 and (t2 - t1) * float(np.linalg.norm(b - a)) > tol:
            chain.append((a + t1 * (b - a), a + t2 * (b - a), True, True))

    if not chain:
        if _point_in_loop(center, points, plane.n):
            return GeneralizedPolygon(plane=plane, boundary=[FullCircle(center=center, radius=radius, axis=plane.n)],
                                      tol=10.0 * tol)
        return FacetRestriction.OUTSIDE

    # rotate so the walk starts at an entry point
    first_entry = next((k for k, piece in enumerate(chain) if piece[2]), 0)
    chain = chain[first_entry:] + chain[:first_entry]

    u, w = plane_basis(plane.n)

    def angle(x: np.ndarray) -> float:
        r = x - center
        return math.atan2(float(r @ w), float(r @ u))

    boundary = []
    for k, (a, b, _, exits) in enumerate(chain):
        if float(np.linalg.norm(b - a)) > tol:
            boundary.append(Segment(a=a, b=b))
        if exits:
            nxt = chain[(k + 1) % len(chain)][0]
            if float(np.linalg.norm(nxt - b)) > tol:
                boundary.append(Arc(center=center, radius=radius, axis=plane.n,
                                    start_angle=angle(b), end_angle=angle(nxt), ccw=True))
    if not boundary:
        return FacetRestriction.OUTSIDE
    return GeneralizedPolygon(plane=plane, boundary=boundary, tol=10.0 * tol)


def signed_height(p: np.ndarray, psi: float, tag: NeighborTag, plane: Optional[Plane] = None) -> float:
    """
    Height of the pyramid from p over a facet; negative when p lies beyond the plane.

    For a site neighbor j this is (D^2 + psi_i - psi_j) / (2D) with D = |p_j - p_i|.
    """
    if tag.kind == NeighborTag.SHELL:
        return math.sqrt(max(psi, 0.0))
    return plane.d - float(plane.n @ p)


# --- Interior point ---

def _ray_interval(origin: np.ndarray, direction: np.ndarray, planes: Sequence[Plane], sphere: Sphere) -> Tuple[float, float]:
    lo, hi = 0.0, math.inf
    rel = origin - sphere.center
    b = float(rel @ direction)
    c = float(rel @ rel) - sphere.r2
    disc = b * b - c
    if disc < 0.0:
        return 0.0, -1.0
    root = math.sqrt(disc)
    lo, hi = max(lo, -b - root), min(hi, -b + root)
    for plane in planes:
        rate = float(plane.n @ direction)
        gap = plane.d - float(plane.n @ origin)
        if rate > 0.0:
            hi = min(hi, gap / rate)
        elif rate < 0.0:
            lo = max(lo, gap / rate)
        elif gap < 0.0:
            return 0.0, -1.0
    return lo, hi


def point_in_restricted_cell(x: np.ndarray, cell: ConvexCell, sphere: Sphere, slack: float = 0.0) -> np.ndarray:
    """Vectorized membership of points (m, 3) in the cell intersected with the ball."""
    x = np.atleast_2d(x)
    rel = x - sphere.center
    ok = np.einsum("ij,ij->i", rel, rel) <= sphere.r2 + slack
    for facet in cell.facets:
        ok &= x @ facet.plane.n - facet.plane.d <= slack
    return ok


def interior_point(facets: Sequence[RestrictedFacet], cell: ConvexCell, sphere: Sphere, tol: float) -> Tuple[np.ndarray, bool]:
    """
    Point strictly inside the restricted cell and whether the fallback was used.

    Rays are cast from every restricted facet centroid along the inward normal and
    clipped by the ball and all cell planes; the midpoints are averaged. When the
    average fails the membership check the midpoint of the longest segment is used.
    """
    planes = [f.plane for f in cell.facets]
    midpoints = []
    lengths = []
    for facet in facets:
        lo, hi = _ray_interval(facet.centroid, -facet.plane.n, planes, sphere)
        if hi - lo >= tol:
            midpoints.append(facet.centroid - 0.5 * (lo + hi) * facet.plane.n)
            lengths.append(hi - lo)
    if not midpoints:
        raise DegenerateCell("Every interior ray segment is shorter than the tolerance")
    c = np.mean(midpoints, axis=0)
    if point_in_restricted_cell(c, cell, sphere, slack=-tol)[0]:
        return c, False
    logger.debug("Averaged interior point left the cell, using the longest segment midpoint")
    return midpoints[int(np.argmax(lengths))], True


# --- Projected patch area ---

def _ray_to_sphere(c: np.ndarray, x: np.ndarray, sphere: Sphere) -> np.ndarray:
    direction = x - c
    rel = c - sphere.center
    qa = float(direction @ direction)
    qb = float(rel @ direction)
    qc = float(rel @ rel) - sphere.r2
    t = (-qb + math.sqrt(max(qb * qb - qa * qc, 0.0))) / qa
    return c + t * direction


def _ccw_sweep(center: np.ndarray, axis: np.ndarray, start: np.ndarray, end: np.ndarray, tol: float) -> float:
    if float(np.linalg.norm(end - start)) <= tol:
        return 0.0
    u, w = plane_basis(axis)
    a0 = math.atan2(float((start - center) @ w), float((start - center) @ u))
    a1 = math.atan2(float((end - center) @ w), float((end - center) @ u))
    return (a1 - a0) % (2.0 * math.pi)


def _spherical_arcs(shape: GeneralizedPolygon, sphere: Sphere, c: np.ndarray, tol: float):
    """Projects each boundary piece onto the sphere as (start, end, center, axis, sweep)."""
    arcs = []
    for piece in shape.boundary:
        if isinstance(piece, Arc):
            axis = piece.axis if piece.ccw else -piece.axis
            arcs.append((piece.start(), piece.end(), piece.center, axis, abs(piece.sweep)))
            continue
        ca, cb = piece.a - c, piece.b - c
        normal = np.cross(ca, cb)
        norm = float(np.linalg.norm(normal))
        if norm <= tol * max(float(np.linalg.norm(ca)), float(np.linalg.norm(cb)), tol):
            raise NumericallyUnstableProjection("Interior point is collinear with a facet edge")
        m = normal / norm
        start = _ray_to_sphere(c, piece.a, sphere)
        end = _ray_to_sphere(c, piece.b, sphere)
        center = sphere.center - float(m @ (sphere.center - c)) * m
        arcs.append((start, end, center, m, _ccw_sweep(center, m, start, end, tol)))
    return arcs


def _loop_area(shape: GeneralizedPolygon, sphere: Sphere, c: np.ndarray, tol: float) -> float:
    radius = sphere.radius
    if shape.is_full_circle:
        circle = shape.boundary[0]
        side = 1.0 if float(shape.plane.signed_distance(c)) >= 0.0 else -1.0
        toward_c = side * float(shape.plane.signed_distance(sphere.center))
        return 2.0 * math.pi * radius * (radius - toward_c)

    arcs = _spherical_arcs(shape, sphere, c, tol)
    curvature = 0.0
    turning = 0.0
    for k, (start, end, center, axis, sweep) in enumerate(arcs):
        curvature += float((center - sphere.center) @ axis) * sweep / radius
        # turning angle where this arc ends and the next begins
        _, _, next_center, next_axis, _ = arcs[(k + 1) % len(arcs)]
        t_in = np.cross(axis, end - center)
        t_out = np.cross(next_axis, end - next_center)
        n_in, n_out = float(np.linalg.norm(t_in)), float(np.linalg.norm(t_out))
        if n_in == 0.0 or n_out == 0.0:
            raise NumericallyUnstableProjection("Zero tangent at a projected loop vertex")
        t_in, t_out = t_in / n_in, t_out / n_out
        outward = (end - sphere.center) / radius
        turning += math.atan2(float(outward @ np.cross(t_in, t_out)), float(t_in @ t_out))
    area = sphere.r2 * (2.0 * math.pi - curvature - turning)
    full = sphere.area
    if area < -tol * full:
        area += full
    return min(max(area, 0.0), full)


def projected_patch_area(shape: GeneralizedPolygon, sphere: Sphere, c: np.ndarray, tol: float) -> float:
    """Area of the radial projection of ``shape`` from ``c`` onto the sphere."""
    point = np.asarray(c, dtype=float)
    for attempt in range(_PROJECTION_RETRIES + 1):
        try:
            return _loop_area(shape, sphere, point, tol)
        except NumericallyUnstableProjection:
            if attempt == _PROJECTION_RETRIES:
                raise
            offset = make_rng(attempt + 1).standard_normal(3)
            point = point + tol * normalize(offset)
            logger.debug(f"Unstable projection, retrying with a perturbed interior point (attempt {attempt + 1})")
    raise NumericallyUnstableProjection("unreachable")


def free_surface_area(facets: Sequence[RestrictedFacet], sphere: Sphere, c: np.ndarray, tol: float) -> float:
    covered = sum(projected_patch_area(f.shape, sphere, c, tol) for f in facets)
    return min(max(sphere.area - covered, 0.0), sphere.area)


# --- Cell evaluation ---

def restricted_facets(cell: ConvexCell, sphere: Sphere, psi: float) -> List[RestrictedFacet]:
    result = []
    tol = cell.tol
    for facet in cell.facets:
        points = cell.facet_points(facet)
        shape = restrict_facet(points, facet.plane, sphere, tol)
        if shape is FacetRestriction.OUTSIDE:
            continue
        if shape is FacetRestriction.UNTOUCHED:
            shape = polygon_from_loop(points, facet.plane, tol=10.0 * tol)
        area = polygon_area(shape)
        if area <= tol * tol:
            continue
        result.append(RestrictedFacet(
            tag=facet.tag,
            plane=facet.plane,
            shape=shape,
            area=area,
            signed_height=signed_height(sphere.center, psi, facet.tag, facet.plane),
            centroid=polygon_centroid(shape),
        ))
    return result


def _full_ball(sphere: Sphere) -> RestrictedCell:
    return RestrictedCell(status=CellStatus.FULL_BALL, volume=sphere.ball_volume, centroid=sphere.center.copy(),
                          free_surface_area=sphere.area, interior_point=sphere.center.copy())


def evaluate_cell(cell: Optional[ConvexCell], p: np.ndarray, psi: float, mc_fallback_samples: int = 0) -> RestrictedCell:
    """
    Volume, centroid, facet areas and free-surface area of ``cell`` intersected
    with the ball of radius sqrt(psi) around ``p``.

    Geometry failures raise ``EvaluationFailed`` unless ``mc_fallback_samples`` is
    positive, in which case a Monte Carlo estimate is returned and flagged.
    """
    p = np.asarray(p, dtype=float)
    if cell is None or psi <= 0.0:
        return RestrictedCell.empty(p)
    sphere = Sphere(center=p, r2=float(psi))
    tol = cell.tol
    try:
        facets = restricted_facets(cell, sphere, psi)
        if not facets:
            return _full_ball(sphere) if cell.contains(p) else RestrictedCell.empty(p)

        c, used_fallback = interior_point(facets, cell, sphere, tol)
        area = free_surface_area(facets, sphere, c, tol)
    except DegenerateCell:
        logger.debug(f"Degenerate restricted cell at {p.tolist()}, treated as empty")
        return RestrictedCell(status=CellStatus.EMPTY, volume=0.0, centroid=p.copy(), free_surface_area=0.0,
                              fallbacks=1)
    except GeometryError as e:
        if mc_fallback_samples > 0:
            logger.warning(f"Analytic evaluation failed ({e.detail}), using Monte Carlo fallback")
            return _monte_carlo_cell(cell, sphere, mc_fallback_samples)
        raise EvaluationFailed(f"Restricted cell evaluation failed at {p.tolist()}: {e.detail}")

    radius = sphere.radius
    volume = 0.0
    moment = np.zeros(3)
    normal_sum = np.zeros(3)
    for f in facets:
        pyramid = f.signed_height * f.area / 3.0
        volume += pyramid
        moment += pyramid * (p + 0.75 * (f.centroid - p))
        normal_sum += f.plane.n * f.area
    shell = radius * area / 3.0
    volume += shell
    moment += shell * p - 0.25 * sphere.r2 * normal_sum

    volume = max(volume, 0.0)
    centroid = moment / volume if volume > 0.0 else c.copy()
    return RestrictedCell(
        status=CellStatus.CLIPPED,
        volume=volume,
        centroid=centroid,
        free_surface_area=area,
        facets=facets,
        interior_point=c,
        fallbacks=int(used_fallback),
    )


def _monte_carlo_cell(cell: ConvexCell, sphere: Sphere, samples: int) -> RestrictedCell:
    rng = make_rng(samples, stream=7)
    radius = sphere.radius
    directions = rng.standard_normal((samples, 3))
    directions /= np.linalg.norm(directions, axis=1)[:, None]
    points = sphere.center + radius * directions * rng.random(samples)[:, None] ** (1.0 / 3.0)
    inside = point_in_restricted_cell(points, cell, sphere)
    volume = sphere.ball_volume * float(inside.mean())
    centroid = points[inside].mean(axis=0) if inside.any() else sphere.center.copy()
    surface = sphere.center + radius * directions
    on_cell = np.ones(samples, dtype=bool)
    for facet in cell.facets:
        on_cell &= surface @ facet.plane.n - facet.plane.d <= 0.0
    status = CellStatus.CLIPPED if volume > 0.0 else CellStatus.EMPTY
    return RestrictedCell(status=status, volume=volume, centroid=centroid,
                          free_surface_area=sphere.area * float(on_cell.mean()), fallbacks=1)


def evaluate_cells(
    cells: Sequence[Optional[ConvexCell]],
    positions: np.ndarray,
    psi: np.ndarray,
    threads: int = 1,
    mc_fallback_samples: int = 0,
) -> List[RestrictedCell]:
    return parallel_map(
        lambda i: evaluate_cell(cells[i], positions[i], float(psi[i]), mc_fallback_samples=mc_fallback_samples),
        list(range(len(cells))),
        threads,
    )
