# src/services/render_service.py
"""
Offline rendering straight from the restricted diagram.

Rays find the first visible sphere patch, walk the unrestricted Laguerre cells
to measure the fluid they cross, or sphere-trace a smooth union of the balls.
The free surface can also be exported as an oriented point cloud.
"""
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from PIL import Image

from src.models.Geometry import ConvexCell, Domain, Ray
from src.models.RestrictedCell import RestrictedCell
from src.schemas.RenderRequest import Camera, RenderMode, TraversalMode
from src.services.laguerre_service import SpatialGrid, build_diagram, power_cell_of
from src.services.restricted_cell_service import evaluate_cells
from src.utils.Errors import RejectionStall, TraversalLoop
from src.utils.Helper import make_rng, normalize, parallel_map
from src.utils.Logger import logger

BACKGROUND = np.array([20, 24, 32], dtype=np.uint8)
FLUID_COLOR = np.array([0.25, 0.55, 0.85])
ABORT_COLOR = np.array([255, 0, 255], dtype=np.uint8)
LIGHT_DIRECTION = normalize(np.array([0.4, 0.3, 1.0]))

SPHERE_TRACE_STEPS = 64
SPHERE_TRACE_EPS_FACTOR = 1e-4
MIN_PATCH_FRACTION = 1e-6


@dataclass
class Scene:
    """Immutable snapshot of a solved frame."""
    positions: np.ndarray
    psi: np.ndarray
    domain: Domain
    diagram: List[Optional[ConvexCell]]
    cells: List[RestrictedCell]
    surface: np.ndarray = field(init=False)  # indices with a free surface
    grid: SpatialGrid = field(init=False)
    surface_grid: Optional[SpatialGrid] = field(init=False)  # over ``surface`` only, local indices
    surface_reach: int = field(init=False)  # buckets a surface ball can extend past its own

    def __post_init__(self):
        self.surface = np.array([i for i, c in enumerate(self.cells) if c.free_surface_area > 0.0], dtype=int)
        self.grid = SpatialGrid.build(self.positions, self.domain.lower, self.domain.upper, self.domain.volume)
        self.surface_grid = None
        self.surface_reach = 0
        if len(self.surface):
            self.surface_grid = SpatialGrid.build(self.positions[self.surface], self.domain.lower,
                                                  self.domain.upper, self.domain.volume)
            radius = float(np.sqrt(np.maximum(self.psi[self.surface], 0.0)).max())
            self.surface_reach = int(math.floor(radius / self.surface_grid.cell_size)) + 1

    @property
    def n(self) -> int:
        return int(self.positions.shape[0])

    @property
    def diagonal(self) -> float:
        return self.domain.diagonal

    def fluid_sites(self) -> np.ndarray:
        return np.array([i for i, c in enumerate(self.cells) if not c.is_empty], dtype=int)

    def mean_radius(self) -> float:
        fluid = self.fluid_sites()
        if len(fluid) == 0:
            return 0.0
        return float(np.sqrt(np.maximum(self.psi[fluid], 0.0)).mean())


@dataclass
class TraversalSegment:
    cell: int
    t_enter: float
    t_exit: float
    fluid: Optional[Tuple[float, float]] = None

    @property
    def fluid_length(self) -> float:
        return 0.0 if self.fluid is None else self.fluid[1] - self.fluid[0]


def build_scene(positions: np.ndarray, psi: np.ndarray, domain: Domain, threads: int = 1) -> Scene:
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    psi = np.asarray(psi, dtype=float).reshape(-1)
    diagram = build_diagram(positions, psi, domain, threads=threads)
    cells = evaluate_cells(diagram, positions, psi, threads=threads)
    return Scene(positions=positions, psi=psi, domain=domain, diagram=diagram, cells=cells)


# --- Camera ---

def camera_rays(camera: Camera) -> Tuple[np.ndarray, np.ndarray]:
    """Ray origin and (height, width, 3) unit directions, rows top to bottom."""
    eye = np.asarray(camera.eye, dtype=float)
    forward = normalize(np.asarray(camera.look_at, dtype=float) - eye)
    right = normalize(np.cross(forward, np.asarray(camera.up, dtype=float)))
    up = np.cross(right, forward)
    half = math.tan(0.5 * camera.fov)
    aspect = camera.width / camera.height
    xs = ((np.arange(camera.width) + 0.5) / camera.width * 2.0 - 1.0) * half * aspect
    ys = (1.0 - (np.arange(camera.height) + 0.5) / camera.height * 2.0) * half
    directions = forward[None, None, :] + xs[None, :, None] * right + ys[:, None, None] * up
    directions /= np.linalg.norm(directions, axis=2)[:, :, None]
    return eye, directions


# --- Ray queries ---

def first_hit(ray: Ray, scene: Scene) -> Optional[Tuple[int, float]]:
    """
    Nearest ray-sphere hit over cells with a free surface whose hit point lies
    in the owner's Laguerre cell, or ``None`` on a miss.

    Buckets of the surface grid are visited along the ray. Every ball whose
    center lies within ``surface_reach`` buckets is tested once; the search ends
    as soon as the best valid hit lies before the exit of the current bucket.
    """
    if scene.surface_grid is None:
        return None
    grid = scene.surface_grid
    tested = np.zeros(len(scene.surface), dtype=bool)
    best: Optional[Tuple[int, float]] = None
    for coords, _, t_exit in grid.walk(ray.origin, ray.direction):
        local = grid.block(coords, scene.surface_reach)
        local = local[~tested[local]]
        if len(local):
            tested[local] = True
            hit = _first_valid_hit(ray, scene, scene.surface[np.sort(local)])
            if hit is not None and (best is None or (hit[1], hit[0]) < (best[1], best[0])):
                best = hit
        if best is not None and best[1] <= t_exit:
            return best
    return best


def _first_valid_hit(ray: Ray, scene: Scene, idx: np.ndarray) -> Optional[Tuple[int, float]]:
    rel = ray.origin - scene.positions[idx]
    b = rel @ ray.direction
    c = np.einsum("ij,ij->i", rel, rel) - scene.psi[idx]
    disc = b * b - c
    ok = disc >= 0.0
    if not ok.any():
        return None
    root = np.sqrt(np.where(ok, disc, 0.0))
    t_in, t_out = -b - root, -b + root
    eps = scene.domain.tol
    t = np.where(t_in > eps, t_in, t_out)
    ok &= t > eps
    for k in np.argsort(np.where(ok, t, np.inf), kind="stable"):
        if not ok[k]:
            break
        i = int(idx[k])
        if scene.diagram[i].contains(ray.at(float(t[k]))):
            return i, float(t[k])
    return None


def domain_interval(ray: Ray, domain: Domain) -> Optional[Tuple[float, float]]:
    lo, hi = 0.0, math.inf
    for plane in domain.halfspaces:
        rate = float(plane.n @ ray.direction)
        gap = plane.d - float(plane.n @ ray.origin)
        if rate > 0.0:
            hi = min(hi, gap / rate)
        elif rate < 0.0:
            lo = max(lo, gap / rate)
        elif gap < 0.0:
            return None
    if hi <= lo:
        return None
    return lo, hi


def _ball_chord(ray: Ray, center: np.ndarray, r2: float) -> Optional[Tuple[float, float]]:
    rel = ray.origin - center
    b = float(rel @ ray.direction)
    disc = b * b - (float(rel @ rel) - r2)
    if disc <= 0.0:
        return None
    root = math.sqrt(disc)
    return -b - root, -b + root


def traverse(
    ray: Ray,
    scene: Scene,
    start: Optional[int] = None,
    mode: Union[TraversalMode, str] = TraversalMode.VOLUME,
) -> List[TraversalSegment]:
    """
    Walks the unrestricted cells along ``ray`` from where it enters the domain.
    Every segment carries the part of it inside the owner's ball. ``VOLUME``
    walks until the ray leaves the domain; ``SURFACE`` ends with the first
    segment that holds fluid.
    """
    mode = TraversalMode(mode)
    interval = domain_interval(ray, scene.domain)
    if interval is None:
        return []
    lo, hi = interval
    tol = scene.domain.tol
    if start is None:
        entry_point = ray.at(lo + min(10.0 * tol, 0.5 * (hi - lo)))
        start = power_cell_of(entry_point, scene.positions, scene.psi, grid=scene.grid)

    segments: List[TraversalSegment] = []
    limit = 8 * max(scene.n, 1)
    current, t_cur = start, lo
    while True:
        if len(segments) > limit:
            raise TraversalLoop(f"Ray crossed more than {limit} facets")
        cell = scene.diagram[current]
        t_exit, nxt = hi, None
        if cell is not None:
            for facet in cell.facets:
                rate = float(facet.plane.n @ ray.direction)
                if rate <= 0.0:
                    continue
                t = max((facet.plane.d - float(facet.plane.n @ ray.origin)) / rate, t_cur)
                if t < t_exit:
                    t_exit = t
                    nxt = facet.tag.index if facet.tag.is_site else None
        t_exit = min(t_exit, hi)
        segment = TraversalSegment(cell=current, t_enter=t_cur, t_exit=t_exit)
        if not scene.cells[current].is_empty:
            chord = _ball_chord(ray, scene.positions[current], float(scene.psi[current]))
            if chord is not None:
                a, b = max(chord[0], t_cur), min(chord[1], t_exit)
                if b > a:
                    segment.fluid = (a, b)
        segments.append(segment)
        if mode == TraversalMode.SURFACE and segment.fluid is not None:
            return segments
        if nxt is None or t_exit >= hi:
            return segments
        current, t_cur = nxt, t_exit


def fluid_depth(ray: Ray, scene: Scene) -> float:
    return sum(s.fluid_length for s in traverse(ray, scene))


def surface_distance(ray: Ray, scene: Scene) -> Optional[float]:
    """Ray parameter where the walk first meets fluid, or ``None``."""
    segments = traverse(ray, scene, mode=TraversalMode.SURFACE)
    if not segments or segments[-1].fluid is None:
        return None
    return segments[-1].fluid[0]


# --- Smooth surface ---

def smooth_min(a: float, b: float, k: float) -> float:
    """Cubic polynomial smooth minimum; plain ``min`` for k <= 0."""
    if k <= 0.0:
        return min(a, b)
    h = max(k - abs(a - b), 0.0) / k
    return min(a, b) - h * h * h * k / 6.0


def smooth_sdf(x: np.ndarray, scene: Scene, k: float) -> float:
    """Smooth union of sphere distances over the closest site and its Laguerre neighbors."""
    owner = power_cell_of(x, scene.positions, scene.psi, grid=scene.grid)
    cell = scene.diagram[owner]
    candidates = [owner] + (cell.neighbor_sites() if cell is not None else [])
    candidates = [j for j in candidates if not scene.cells[j].is_empty]
    if not candidates:
        fluid = scene.fluid_sites()
        if len(fluid) == 0:
            return math.inf
        candidates = fluid.tolist()
    distances = np.linalg.norm(scene.positions[candidates] - x, axis=1) - np.sqrt(scene.psi[candidates])
    value = float(distances[0])
    for d in distances[1:]:
        value = smooth_min(value, float(d), k)
    return value


def _sdf_normal(x: np.ndarray, scene: Scene, k: float, h: float) -> np.ndarray:
    grad = np.zeros(3)
    for axis in range(3):
        e = np.zeros(3)
        e[axis] = h
        grad[axis] = smooth_sdf(x + e, scene, k) - smooth_sdf(x - e, scene, k)
    norm = float(np.linalg.norm(grad))
    return grad / norm if norm > 0.0 else grad


def sphere_trace(ray: Ray, scene: Scene, t_start: float, k: float) -> Optional[float]:
    eps = SPHERE_TRACE_EPS_FACTOR * scene.diagonal
    t = max(t_start, 0.0)
    for step in range(SPHERE_TRACE_STEPS):
        d = smooth_sdf(ray.at(t), scene, k)
        if step == 0 and d < -eps:
            # started inside the blended surface
            return None
        if d < eps:
            return t
        t += d
    return None


# --- Images ---

def _shade(normal: np.ndarray, direction: np.ndarray, fresnel: bool) -> np.ndarray:
    lambert = max(float(normal @ LIGHT_DIRECTION), 0.0)
    color = FLUID_COLOR * (0.15 + 0.85 * lambert)
    if fresnel:
        cos_view = max(-float(normal @ direction), 0.0)
        schlick = 0.02 + 0.98 * (1.0 - cos_view) ** 5
        color = color * (1.0 - schlick) + schlick
    return np.clip(np.round(255.0 * color), 0, 255).astype(np.uint8)


def render(
    scene: Scene,
    camera: Camera,
    mode: Union[RenderMode, str] = RenderMode.RAW,
    blend_radius: Optional[float] = None,
    threads: int = 1,
    traversal: Union[TraversalMode, str] = TraversalMode.VOLUME,
) -> Tuple[np.ndarray, int]:
    """
    Returns the (height, width, 3) uint8 image and the number of aborted rays.

    In depth mode ``VOLUME`` writes the fluid path length along each ray and
    ``SURFACE`` the distance from the domain entry to the first fluid, nearer
    being brighter. Both are normalized by the domain diagonal.
    """
    mode = RenderMode(mode)
    traversal = TraversalMode(traversal)
    eye, directions = camera_rays(camera)
    k = 0.5 * scene.mean_radius() if blend_radius is None else blend_radius
    diagonal = scene.diagonal

    def render_row(r: int) -> Tuple[np.ndarray, int]:
        row = np.tile(BACKGROUND, (camera.width, 1))
        aborted = 0
        for c in range(camera.width):
            ray = Ray(origin=eye, direction=directions[r, c])
            if mode == RenderMode.DEPTH:
                try:
                    if traversal == TraversalMode.VOLUME:
                        depth = fluid_depth(ray, scene)
                        shade = min(depth / diagonal, 1.0) if depth > 0.0 else None
                    else:
                        t = surface_distance(ray, scene)
                        entry = domain_interval(ray, scene.domain)
                        shade = None if t is None else 1.0 - min((t - entry[0]) / diagonal, 1.0)
                except TraversalLoop:
                    row[c] = ABORT_COLOR
                    aborted += 1
                    continue
                if shade is not None:
                    row[c] = int(round(255.0 * shade))
                continue
            hit = first_hit(ray, scene)
            if hit is None:
                continue
            i, t = hit
            x = ray.at(t)
            normal = normalize(x - scene.positions[i])
            if mode == RenderMode.SMOOTH:
                t_smooth = sphere_trace(ray, scene, t - k, k)
                if t_smooth is not None:
                    x = ray.at(t_smooth)
                    normal = _sdf_normal(x, scene, k, SPHERE_TRACE_EPS_FACTOR * diagonal)
            row[c] = _shade(normal, ray.direction, fresnel=mode == RenderMode.SMOOTH)
        return row, aborted

    rows = parallel_map(render_row, list(range(camera.height)), threads)
    image = np.stack([row for row, _ in rows]).astype(np.uint8)
    aborted = sum(count for _, count in rows)
    if aborted:
        logger.warning(f"{aborted} rays aborted during traversal")
    return image, aborted


def write_ppm(image: np.ndarray, path: Union[str, Path]) -> None:
    Image.fromarray(np.ascontiguousarray(image, dtype=np.uint8)).save(str(path), format="PPM")


def read_ppm(path: Union[str, Path]) -> np.ndarray:
    with Image.open(str(path)) as img:
        return np.asarray(img.convert("RGB"))


# --- Surface sampling ---

def _sample_patch(scene: Scene, i: int, wanted: int, expected: float, rng: np.random.Generator) -> np.ndarray:
    """``wanted`` unit directions from site ``i`` that land inside its cell."""
    cell = scene.diagram[i]
    radius = math.sqrt(scene.psi[i])
    budget = int(50 * wanted / expected) + 1000
    accepted: List[np.ndarray] = []
    drawn = 0
    while sum(len(a) for a in accepted) < wanted:
        if drawn > budget:
            raise RejectionStall(f"Cell {i}: rejection sampling accepted too few of {drawn} draws")
        batch = max(2 * (wanted - sum(len(a) for a in accepted)), 64)
        u = rng.standard_normal((batch, 3))
        u /= np.linalg.norm(u, axis=1)[:, None]
        drawn += batch
        candidates = scene.positions[i] + radius * u
        inside = np.ones(batch, dtype=bool)
        for facet in cell.facets:
            inside &= candidates @ facet.plane.n - facet.plane.d <= 0.0
        accepted.append(u[inside])
    return np.concatenate(accepted)[:wanted]


def sample_surface(scene: Scene, count: int, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Points spread uniformly by area over the free surface, with outward normals.

    Cells whose visible patch is a negligible share of their sphere are skipped.
    A cell whose rejection sampling stalls is dropped and its share is drawn
    again over the remaining patches.
    """
    areas = np.array([c.free_surface_area for c in scene.cells])
    full = 4.0 * math.pi * np.maximum(scene.psi, 0.0)
    usable = (areas > 0.0) & (areas >= MIN_PATCH_FRACTION * full)
    skipped = int(((areas > 0.0) & ~usable).sum())
    if skipped:
        logger.warning(f"Skipped {skipped} cells with a vanishing free-surface patch")
    if count <= 0 or not usable.any():
        return np.zeros((0, 3)), np.zeros((0, 3))

    weights = np.where(usable, areas, 0.0)
    rng = make_rng(seed)
    counts = rng.multinomial(count, weights / weights.sum())
    queue = [(int(i), int(counts[i])) for i in np.nonzero(counts)[0]]
    directions: Dict[int, List[np.ndarray]] = {}
    while queue:
        i, wanted = queue.pop(0)
        expected = max(areas[i] / full[i], MIN_PATCH_FRACTION)
        try:
            directions.setdefault(i, []).append(_sample_patch(scene, i, wanted, expected, rng))
        except RejectionStall as e:
            logger.warning(f"{e.detail}; its {wanted} samples go to the other patches")
            weights[i] = 0.0
            if weights.sum() <= 0.0:
                break
            extra = rng.multinomial(wanted, weights / weights.sum())
            queue.extend((int(j), int(extra[j])) for j in np.nonzero(extra)[0])

    points: List[np.ndarray] = []
    normals: List[np.ndarray] = []
    for i in sorted(directions):
        if not directions[i]:
            continue
        u = np.concatenate(directions[i])
        points.append(scene.positions[i] + math.sqrt(scene.psi[i]) * u)
        normals.append(u)
    if not points:
        return np.zeros((0, 3)), np.zeros((0, 3))
    return np.concatenate(points), np.concatenate(normals)


def write_point_cloud(path: Union[str, Path], points: np.ndarray, normals: np.ndarray) -> None:
    """One ``x y z nx ny nz`` line per sample."""
    np.savetxt(str(path), np.hstack([points, normals]), fmt="%.9g")


def scene_silhouette(image: np.ndarray) -> np.ndarray:
    return np.any(image != BACKGROUND, axis=2)
