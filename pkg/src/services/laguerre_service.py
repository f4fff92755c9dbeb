# src/services/laguerre_service.py
"""
Unrestricted Laguerre (power) diagram of weighted sites inside a convex domain.

Each cell starts as the domain polytope and is clipped by the bisectors of its
neighbors taken in increasing distance order, until no farther site can reach it.
"""
import heapq
import math
from dataclasses import dataclass
from typing import Iterator, List, Optional, Tuple

import numpy as np

from src.models.Geometry import ConvexCell, Domain, NeighborTag, Plane
from src.services.geometry_service import clip_cell
from src.utils.Helper import parallel_map


@dataclass
class SpatialGrid:
    lower: np.ndarray
    cell_size: float
    dims: np.ndarray  # (3,) ints
    positions: np.ndarray
    order: np.ndarray  # site indices sorted by bucket
    starts: np.ndarray  # bucket -> offset into ``order``; length = buckets + 1

    @staticmethod
    def build(positions: np.ndarray, lower: np.ndarray, upper: np.ndarray, volume: Optional[float] = None) -> "SpatialGrid":
        positions = np.asarray(positions, dtype=float).reshape(-1, 3)
        n = max(positions.shape[0], 1)
        lower = np.minimum(np.asarray(lower, dtype=float), positions.min(axis=0) if len(positions) else lower)
        upper = np.maximum(np.asarray(upper, dtype=float), positions.max(axis=0) if len(positions) else upper)
        extent = np.maximum(upper - lower, 1e-300)
        if volume is None or volume <= 0.0:
            volume = float(np.prod(extent))
        cell_size = max((volume / n) ** (1.0 / 3.0), float(extent.max()) / 256.0)
        dims = np.maximum(np.ceil(extent / cell_size).astype(int), 1)
        grid = SpatialGrid(lower=lower, cell_size=cell_size, dims=dims, positions=positions,
                           order=np.zeros(0, dtype=int), starts=np.zeros(1, dtype=int))
        buckets = grid.bucket_of(positions) if len(positions) else np.zeros(0, dtype=int)
        grid.order = np.argsort(buckets, kind="stable")
        counts = np.bincount(buckets, minlength=int(np.prod(dims)))
        grid.starts = np.concatenate([[0], np.cumsum(counts)])
        return grid

    def coords_of(self, points: np.ndarray) -> np.ndarray:
        coords = np.floor((np.atleast_2d(points) - self.lower) / self.cell_size).astype(int)
        return np.clip(coords, 0, self.dims - 1)

    def bucket_of(self, points: np.ndarray) -> np.ndarray:
        c = self.coords_of(points)
        return (c[:, 0] * self.dims[1] + c[:, 1]) * self.dims[2] + c[:, 2]

    def members(self, cx: int, cy: int, cz: int) -> np.ndarray:
        b = (cx * self.dims[1] + cy) * self.dims[2] + cz
        return self.order[self.starts[b]:self.starts[b + 1]]

    def shell(self, center: np.ndarray, radius: int) -> List[np.ndarray]:
        """Members of the buckets at Chebyshev distance exactly ``radius`` from ``center``."""
        found = []
        lo = center - radius
        hi = center + radius
        for cx in range(max(lo[0], 0), min(hi[0], self.dims[0] - 1) + 1):
            for cy in range(max(lo[1], 0), min(hi[1], self.dims[1] - 1) + 1):
                on_x = cx in (lo[0], hi[0])
                on_xy = on_x or cy in (lo[1], hi[1])
                if on_xy:
                    z_range = range(max(lo[2], 0), min(hi[2], self.dims[2] - 1) + 1)
                else:
                    z_range = [z for z in (lo[2], hi[2]) if 0 <= z < self.dims[2]]
                for cz in z_range:
                    members = self.members(cx, cy, cz)
                    if len(members):
                        found.append(members)
        return found

    def block(self, center: np.ndarray, reach: int) -> np.ndarray:
        """Members of every bucket within Chebyshev distance ``reach`` of ``center``."""
        lo = np.maximum(center - reach, 0)
        hi = np.minimum(center + reach, self.dims - 1)
        found = [self.members(cx, cy, cz)
                 for cx in range(lo[0], hi[0] + 1)
                 for cy in range(lo[1], hi[1] + 1)
                 for cz in range(lo[2], hi[2] + 1)]
        return np.concatenate(found) if found else np.zeros(0, dtype=int)

    @property
    def max_radius(self) -> int:
        return int(self.dims.max())

    @property
    def upper(self) -> np.ndarray:
        return self.lower + self.dims * self.cell_size

    def walk(self, origin: np.ndarray, direction: np.ndarray) -> Iterator[Tuple[np.ndarray, float, float]]:
        """
        Buckets pierced by the ray in order, as (coords, t_enter, t_exit), using a
        3D DDA over the grid box. Yields nothing when the ray misses the box.
        """
        lo, hi = 0.0, math.inf
        for axis in range(3):
            if direction[axis] == 0.0:
                if not self.lower[axis] <= origin[axis] <= self.upper[axis]:
                    return
                continue
            a = (self.lower[axis] - origin[axis]) / direction[axis]
            b = (self.upper[axis] - origin[axis]) / direction[axis]
            lo, hi = max(lo, min(a, b)), min(hi, max(a, b))
        if hi < lo:
            return
        coords = self.coords_of(origin + lo * direction)[0].copy()
        step = np.where(direction > 0.0, 1, -1)
        t_next = np.full(3, math.inf)
        t_delta = np.full(3, math.inf)
        for axis in range(3):
            if direction[axis] != 0.0:
                boundary = self.lower[axis] + (coords[axis] + (step[axis] > 0)) * self.cell_size
                t_next[axis] = (boundary - origin[axis]) / direction[axis]
                t_delta[axis] = self.cell_size / abs(direction[axis])
        t = lo
        while True:
            axis = int(np.argmin(t_next))
            t_exit = min(max(t_next[axis], t), hi)
            yield coords.copy(), t, t_exit
            if t_exit >= hi:
                return
            coords[axis] += step[axis]
            if not 0 <= coords[axis] < self.dims[axis]:
                return
            t = t_exit
            t_next[axis] += t_delta[axis]


def iter_nearest(grid: SpatialGrid, q: np.ndarray, exclude: int = -1) -> Iterator[Tuple[float, int]]:
    """
    Yields (distance, site) in increasing distance from ``q`` by expanding grid
    shells; a candidate is released once no unvisited bucket can hold a closer site.
    """
    q = np.asarray(q, dtype=float)
    center = grid.coords_of(q)[0]
    # distance from q to the boundary of its own bucket box, grows by cell_size per shell
    box_lo = grid.lower + center * grid.cell_size
    box_hi = box_lo + grid.cell_size
    inner = float(np.min(np.concatenate([q - box_lo, box_hi - q])))
    inner = max(inner, 0.0) if np.all(q >= box_lo) and np.all(q <= box_hi) else 0.0
    heap: List[Tuple[float, int]] = []
    radius = 0
    while True:
        for members in grid.shell(center, radius):
            d = np.linalg.norm(grid.positions[members] - q, axis=1)
            for dist, idx in zip(d.tolist(), members.tolist()):
                if idx != exclude:
                    heapq.heappush(heap, (dist, idx))
        exhausted = radius >= grid.max_radius
        bound = math.inf if exhausted else inner + radius * grid.cell_size
        while heap and heap[0][0] <= bound:
            yield heapq.heappop(heap)
        if exhausted:
            return
        radius += 1


def knn(grid: SpatialGrid, q: np.ndarray, k: int) -> List[int]:
    result = []
    for _, idx in iter_nearest(grid, q):
        result.append(idx)
        if len(result) >= k:
            break
    return result


def bisector_plane(p_i: np.ndarray, psi_i: float, p_j: np.ndarray, psi_j: float) -> Plane:
    """Power bisector of sites i and j; the halfspace is the side of site i."""
    delta = p_j - p_i
    dist2 = float(delta @ delta)
    n = delta / math.sqrt(dist2)
    m = 0.5 * (p_i + p_j) + ((psi_i - psi_j) / (2.0 * dist2)) * delta
    return Plane(n=n, d=float(n @ m))


def build_cell(
    i: int,
    positions: np.ndarray,
    psi: np.ndarray,
    domain: Domain,
    grid: SpatialGrid,
    ball_aware: bool = False,
) -> Optional[ConvexCell]:
    """
    Laguerre cell of site ``i`` clipped to the domain, or ``None`` when empty.

    Site j can only cut the cell when its bisector comes closer to p_i than the
    farthest cell vertex. The bisector distance is at least
    D/2 - max(psi_max - psi_i, 0)/(2D) for D = |p_j - p_i|, which grows with D,
    so the scan stops at the first candidate beyond that radius. With
    ``ball_aware`` the radius is capped at sqrt(psi_i): farther bisectors cannot
    change the cell inside its ball.
    """
    p_i = positions[i]
    psi_i = float(psi[i])
    slack = max(float(psi.max()) - psi_i, 0.0) if len(psi) else 0.0
    cell: Optional[ConvexCell] = domain.cell
    radius = cell.bounding_radius(p_i)
    for dist, j in iter_nearest(grid, p_i, exclude=i):
        if dist == 0.0:
            # coincident sites: the heavier one takes everything
            if float(psi[j]) > psi_i or (float(psi[j]) == psi_i and j < i):
                return None
            continue
        limit = min(radius, math.sqrt(psi_i)) if ball_aware else radius
        if 0.5 * dist - slack / (2.0 * dist) > limit:
            break
        cell = clip_cell(cell, bisector_plane(p_i, psi_i, positions[j], float(psi[j])), NeighborTag.site(j))
        if cell is None:
            return None
        radius = cell.bounding_radius(p_i)
    return cell


def build_diagram(
    positions: np.ndarray,
    psi: np.ndarray,
    domain: Domain,
    grid: Optional[SpatialGrid] = None,
    ball_aware: bool = False,
    threads: int = 1,
) -> List[Optional[ConvexCell]]:
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    psi = np.asarray(psi, dtype=float).reshape(-1)
    if grid is None:
        grid = SpatialGrid.build(positions, domain.lower, domain.upper, domain.volume)
    return parallel_map(
        lambda i: build_cell(i, positions, psi, domain, grid, ball_aware=ball_aware),
        list(range(positions.shape[0])),
        threads,
    )


def power_cell_of(x: np.ndarray, positions: np.ndarray, psi: np.ndarray, grid: Optional[SpatialGrid] = None) -> int:
    """
    Index of the site with the smallest power distance to ``x``; ties go to the
    lowest index. Without a grid every site is scanned.
    """
    if grid is None:
        power = np.sum((positions - x) ** 2, axis=1) - psi
        return int(np.argmin(power))
    psi_max = float(psi.max())
    best, best_i = math.inf, -1
    for dist, j in iter_nearest(grid, x):
        if dist * dist - psi_max > best + 1e-12 * max(dist * dist, 1.0):
            break
        power = float(np.sum((positions[j] - x) ** 2)) - float(psi[j])
        if (power, j) < (best, best_i):
            best, best_i = power, j
    return best_i
