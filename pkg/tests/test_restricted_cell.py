import math

import numpy as np
import pytest

from src.models.Geometry import Arc, FullCircle, Plane, Sphere
from src.models.RestrictedCell import CellStatus, FacetRestriction
from src.services.geometry_service import box_halfspaces, make_domain, polygon_area
from src.services.laguerre_service import build_diagram
from src.services.oracle_service import mc_sphere_patch_area, mc_volume
from src.services.restricted_cell_service import (
    evaluate_cell,
    point_in_restricted_cell,
    projected_patch_area,
    restrict_facet,
)

CENTER = np.array([0.5, 0.5, 0.5])
Z = np.array([0.0, 0.0, 1.0])


def _square(half_side):
    h = half_side
    return np.array([[-h, -h, 0.0], [h, -h, 0.0], [h, h, 0.0], [-h, h, 0.0]])


def _cube(half_side):
    return make_domain(box_halfspaces([-half_side] * 3, [half_side] * 3)).cell


def test_ball_inside_the_cell_is_full(unit_box):
    cell = evaluate_cell(unit_box.cell, CENTER, 0.01)
    assert cell.status == CellStatus.FULL_BALL
    assert cell.volume == pytest.approx(4.0 / 3.0 * math.pi * 0.001)
    assert cell.free_surface_area == pytest.approx(4.0 * math.pi * 0.01)
    assert np.allclose(cell.centroid, CENTER)


def test_missing_cell_or_weight_is_empty(unit_box):
    assert evaluate_cell(None, CENTER, 0.01).is_empty
    assert evaluate_cell(unit_box.cell, CENTER, 0.0).is_empty
    assert evaluate_cell(unit_box.cell, CENTER, -0.5).volume == 0.0


def test_half_ball_on_a_domain_face():
    r = 0.2
    domain = make_domain(box_halfspaces([0, 0, 0], [1, 1, 0.5]))
    cell = evaluate_cell(domain.cell, CENTER, r * r)
    assert cell.status == CellStatus.CLIPPED
    assert cell.volume == pytest.approx(2.0 / 3.0 * math.pi * r ** 3, rel=1e-10)
    assert cell.free_surface_area == pytest.approx(2.0 * math.pi * r * r, rel=1e-10)
    assert len(cell.facets) == 1
    assert cell.facets[0].area == pytest.approx(math.pi * r * r, rel=1e-10)
    assert cell.facets[0].shape.is_full_circle
    assert np.allclose(cell.centroid, CENTER - [0.0, 0.0, 3.0 * r / 8.0], atol=1e-10)


def test_spherical_cap_cut():
    domain = make_domain(box_halfspaces([0, 0, 0], [1, 1, 0.6]))
    cell = evaluate_cell(domain.cell, CENTER, 0.04)
    assert cell.volume == pytest.approx(0.009 * math.pi, rel=1e-10)
    assert cell.free_surface_area == pytest.approx(0.12 * math.pi, rel=1e-10)
    assert cell.facets[0].signed_height == pytest.approx(0.1)
    assert cell.facets[0].area == pytest.approx(0.03 * math.pi, rel=1e-10)


def test_cube_cutting_six_disjoint_caps():
    cell = evaluate_cell(_cube(0.8), np.zeros(3), 1.0)
    assert len(cell.facets) == 6
    assert all(f.shape.is_full_circle for f in cell.facets)
    assert cell.free_surface_area == pytest.approx(1.6 * math.pi, rel=1e-10)
    assert cell.volume == pytest.approx((4.0 / 3.0 - 0.224) * math.pi, rel=1e-10)
    assert np.allclose(cell.centroid, 0.0, atol=1e-10)


def test_cube_with_arc_facets_matches_sampling():
    cube = _cube(0.7)
    sphere = Sphere(center=np.zeros(3), r2=1.0)
    cell = evaluate_cell(cube, sphere.center, sphere.r2)
    assert all(not f.shape.is_full_circle for f in cell.facets)
    assert any(isinstance(piece, Arc) for piece in cell.facets[0].shape.boundary)

    volume, sigma = mc_volume(lambda x: point_in_restricted_cell(x, cube, sphere), [-1] * 3, [1] * 3, 1_000_000, seed=3)
    assert abs(cell.volume - volume) <= 4.0 * sigma

    inside_cube = lambda x: np.all(np.abs(x) <= 0.7, axis=1)
    area, area_sigma = mc_sphere_patch_area(sphere, inside_cube, 1_000_000, seed=4)
    assert abs(cell.free_surface_area - area) <= 4.0 * area_sigma
    assert np.allclose(cell.centroid, 0.0, atol=1e-9)


def test_patches_and_free_surface_cover_the_sphere(unit_box, rng):
    positions = 0.15 + 0.7 * rng.random((6, 3))
    psi = (0.1 + 0.2 * rng.random(6)) ** 2
    diagram = build_diagram(positions, psi, unit_box)
    clipped = 0
    for i, cell in enumerate(diagram):
        restricted = evaluate_cell(cell, positions[i], psi[i])
        if restricted.status != CellStatus.CLIPPED:
            continue
        clipped += 1
        sphere = Sphere(center=positions[i], r2=float(psi[i]))
        c = restricted.interior_point
        other = 0.7 * c + 0.3 * restricted.centroid
        covered = sum(projected_patch_area(f.shape, sphere, c, cell.tol) for f in restricted.facets)
        moved = sum(projected_patch_area(f.shape, sphere, other, cell.tol) for f in restricted.facets)
        assert covered + restricted.free_surface_area == pytest.approx(4.0 * math.pi * psi[i], rel=1e-10)
        assert moved == pytest.approx(covered, abs=1e-9 * sphere.area)

        def inside(x, cell=cell):
            return np.all(np.stack([x @ f.plane.n - f.plane.d <= 0.0 for f in cell.facets]), axis=0)

        area, sigma = mc_sphere_patch_area(sphere, inside, 200_000, seed=20 + i)
        assert abs(sphere.area - covered - area) <= 4.0 * sigma + 1e-12
    assert clipped > 0


def test_volume_grows_with_the_weight(unit_box):
    corner = np.array([0.1, 0.1, 0.1])
    volumes = [evaluate_cell(unit_box.cell, corner, psi).volume for psi in (0.005, 0.02, 0.05, 0.1)]
    assert volumes == sorted(volumes)
    assert volumes[0] > 0.0


def test_interior_point_is_inside(unit_box):
    p = np.array([0.05, 0.5, 0.5])
    cell = evaluate_cell(unit_box.cell, p, 0.02)
    sphere = Sphere(center=p, r2=0.02)
    assert point_in_restricted_cell(cell.interior_point, unit_box.cell, sphere)[0]


def test_facet_disk_inside_the_square_is_a_full_circle():
    plane = Plane(n=Z, d=0.0)
    sphere = Sphere(center=np.array([0.0, 0.0, -0.4]), r2=0.25)
    shape = restrict_facet(_square(0.5), plane, sphere, 1e-12)
    assert shape.is_full_circle
    assert isinstance(shape.boundary[0], FullCircle)
    assert polygon_area(shape) == pytest.approx(0.09 * math.pi)


def test_facet_restriction_extremes():
    plane = Plane(n=Z, d=0.0)
    square = _square(0.5)
    assert restrict_facet(square, plane, Sphere(center=np.array([0.0, 0.0, -0.5]), r2=0.25), 1e-12) \
        is FacetRestriction.OUTSIDE
    assert restrict_facet(square, plane, Sphere(center=np.zeros(3), r2=4.0), 1e-12) is FacetRestriction.UNTOUCHED
    far = Sphere(center=np.array([3.0, 0.0, 0.0]), r2=0.25)
    assert restrict_facet(square, plane, far, 1e-12) is FacetRestriction.OUTSIDE


def test_facet_through_the_center_projects_to_a_hemisphere():
    plane = Plane(n=Z, d=0.0)
    sphere = Sphere(center=np.zeros(3), r2=0.09)
    shape = restrict_facet(_square(2.0), plane, sphere, 1e-12)
    below = np.array([0.0, 0.0, -0.1])
    assert projected_patch_area(shape, sphere, below, 1e-12) == pytest.approx(2.0 * math.pi * 0.09)


def test_corner_cell_against_sampling(unit_box):
    p = np.array([0.05, 0.08, 0.12])
    psi = 0.03
    sphere = Sphere(center=p, r2=psi)
    cell = evaluate_cell(unit_box.cell, p, psi)
    volume, sigma = mc_volume(lambda x: point_in_restricted_cell(x, unit_box.cell, sphere),
                              p - 0.2, p + 0.2, 1_000_000, seed=11)
    assert abs(cell.volume - volume) <= 4.0 * sigma
    assert {f.tag.index for f in cell.domain_facets()} == {1, 3, 5}
