import numpy as np
import pytest

from src.services.geometry_service import cell_volume_convex
from src.services.laguerre_service import (
    SpatialGrid,
    bisector_plane,
    build_diagram,
    iter_nearest,
    knn,
    power_cell_of,
)
from src.services.restricted_cell_service import evaluate_cells


def test_bisector_of_equal_weights_is_the_midplane():
    p_i = np.array([0.0, 0.0, 0.0])
    p_j = np.array([2.0, 0.0, 0.0])
    plane = bisector_plane(p_i, 0.3, p_j, 0.3)
    assert np.allclose(plane.n, [1.0, 0.0, 0.0])
    assert plane.d == pytest.approx(1.0)
    assert plane.signed_distance(p_i) < 0.0 < plane.signed_distance(p_j)


def test_bisector_moves_away_from_the_heavier_site():
    p_i = np.array([0.0, 0.0, 0.0])
    p_j = np.array([2.0, 0.0, 0.0])
    # a weight gap of D^2 pushes the bisector onto the lighter site
    plane = bisector_plane(p_i, 4.0, p_j, 0.0)
    assert plane.signed_distance(p_j) == pytest.approx(0.0, abs=1e-12)


def test_iter_nearest_matches_brute_force(rng):
    points = rng.uniform(0.0, 1.0, size=(300, 3))
    grid = SpatialGrid.build(points, np.zeros(3), np.ones(3))
    q = np.array([0.31, 0.62, 0.47])
    visited = list(iter_nearest(grid, q))
    assert len(visited) == len(points)
    distances = [d for d, _ in visited]
    assert distances == sorted(distances)
    expected = np.argsort(np.linalg.norm(points - q, axis=1), kind="stable")[:10]
    assert knn(grid, q, 10) == expected.tolist()


def test_iter_nearest_skips_the_excluded_site(rng):
    points = rng.uniform(0.0, 1.0, size=(50, 3))
    grid = SpatialGrid.build(points, np.zeros(3), np.ones(3))
    assert 7 not in [j for _, j in iter_nearest(grid, points[7], exclude=7)]


def test_two_sites_split_the_box(unit_box):
    positions = np.array([[0.25, 0.5, 0.5], [0.75, 0.5, 0.5]])
    cells = build_diagram(positions, np.zeros(2), unit_box)
    assert [cell_volume_convex(c) for c in cells] == pytest.approx([0.5, 0.5], abs=1e-12)
    assert cells[0].neighbor_sites() == [1]
    assert cells[1].neighbor_sites() == [0]


def test_unrestricted_cells_tile_the_domain(unit_box, rng):
    positions = rng.uniform(0.05, 0.95, size=(60, 3))
    psi = rng.uniform(0.0, 0.01, size=60)
    cells = build_diagram(positions, psi, unit_box)
    total = sum(cell_volume_convex(c) for c in cells if c is not None)
    assert total == pytest.approx(unit_box.volume, abs=1e-9)


def test_neighbors_are_symmetric(unit_box, rng):
    positions = rng.uniform(0.05, 0.95, size=(40, 3))
    cells = build_diagram(positions, np.full(40, 0.002), unit_box)
    neighbors = {i: cell.neighbor_sites() for i, cell in enumerate(cells)}
    for i, adjacent in neighbors.items():
        for j in adjacent:
            assert i in neighbors[j]


def test_cells_contain_the_points_they_own(unit_box, rng):
    positions = rng.uniform(0.05, 0.95, size=(30, 3))
    psi = rng.uniform(0.0, 0.02, size=30)
    cells = build_diagram(positions, psi, unit_box)
    for x in rng.uniform(0.0, 1.0, size=(200, 3)):
        owner = power_cell_of(x, positions, psi)
        assert cells[owner] is not None
        assert cells[owner].contains(x, slack=1e-9)


def test_coincident_sites_keep_the_heavier_one(unit_box):
    positions = np.array([[0.5, 0.5, 0.5], [0.5, 0.5, 0.5], [0.2, 0.2, 0.2]])
    cells = build_diagram(positions, np.array([0.01, 0.02, 0.0]), unit_box)
    assert cells[0] is None
    assert cells[1] is not None


def test_thread_count_does_not_change_the_diagram(unit_box, rng):
    positions = rng.uniform(0.05, 0.95, size=(40, 3))
    psi = rng.uniform(0.0, 0.01, size=40)
    serial = build_diagram(positions, psi, unit_box, threads=1)
    pooled = build_diagram(positions, psi, unit_box, threads=8)
    assert len(serial) == len(pooled) == 40
    for a, b in zip(serial, pooled):
        assert (a is None) == (b is None)
        if a is not None:
            assert np.array_equal(a.vertices, b.vertices)
            assert a.neighbor_sites() == b.neighbor_sites()


def test_adding_a_constant_weight_keeps_the_diagram(unit_box, rng):
    positions = rng.uniform(0.05, 0.95, size=(30, 3))
    psi = rng.uniform(0.0, 0.01, size=30)
    base = build_diagram(positions, psi, unit_box)
    shifted = build_diagram(positions, psi + 0.37, unit_box)
    for a, b in zip(base, shifted):
        assert (a is None) == (b is None)
        if a is not None:
            assert cell_volume_convex(a) == pytest.approx(cell_volume_convex(b), abs=1e-12)
            assert sorted(a.neighbor_sites()) == sorted(b.neighbor_sites())


def test_grid_lookup_matches_the_full_scan(unit_box, rng):
    positions = rng.uniform(0.0, 1.0, size=(60, 3))
    psi = rng.uniform(0.0, 0.02, size=60)
    grid = SpatialGrid.build(positions, unit_box.lower, unit_box.upper, unit_box.volume)
    for x in rng.uniform(-0.3, 1.3, size=(200, 3)):
        assert power_cell_of(x, positions, psi, grid=grid) == power_cell_of(x, positions, psi)


def test_grid_walk_visits_contiguous_buckets(rng):
    positions = rng.uniform(0.0, 1.0, size=(64, 3))
    grid = SpatialGrid.build(positions, np.zeros(3), np.ones(3))
    origin = np.array([-0.5, 0.2, 0.3])
    direction = np.array([1.0, 0.4, 0.2]) / np.linalg.norm([1.0, 0.4, 0.2])
    steps = list(grid.walk(origin, direction))
    assert steps[0][1] == pytest.approx(0.5 / direction[0])
    for (a, _, exit_a), (b, enter_b, _) in zip(steps, steps[1:]):
        assert exit_a == enter_b
        assert np.abs(b - a).sum() == 1
    assert list(grid.walk(origin, np.array([-1.0, 0.0, 0.0]))) == []


def test_ball_aware_pruning_keeps_restricted_cells(unit_box, lattice_sites):
    psi = np.full(len(lattice_sites), 0.012)
    full = evaluate_cells(build_diagram(lattice_sites, psi, unit_box), lattice_sites, psi)
    pruned = evaluate_cells(build_diagram(lattice_sites, psi, unit_box, ball_aware=True), lattice_sites, psi)
    for a, b in zip(full, pruned):
        assert a.volume == pytest.approx(b.volume, abs=1e-10)
        assert a.free_surface_area == pytest.approx(b.free_surface_area, abs=1e-10)


def test_knn_on_a_lattice_returns_the_axis_neighbors(lattice_sites):
    grid = SpatialGrid.build(lattice_sites, np.zeros(3), np.ones(3))
    center = np.array([0.5, 0.5, 0.5])
    nearest = knn(grid, center, 7)
    assert nearest[0] == 13
    offsets = np.abs(lattice_sites[nearest[1:]] - center)
    assert np.allclose(np.sort(offsets, axis=1), [[0.0, 0.0, 0.2]] * 6)
