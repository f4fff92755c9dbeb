import math

import numpy as np
import pytest

from src.models.Geometry import Plane, Sphere
from src.services.geometry_service import box_halfspaces, make_domain
from src.services.oracle_service import (
    CheckResult,
    fd_gradient,
    fd_jacobian,
    geometry_suite,
    mc_facet_area,
    mc_sphere_patch_area,
    mc_volume,
    mc_volume_and_centroid,
    run_suite,
)
from src.services.restricted_cell_service import evaluate_cell


def _unit_ball(x):
    return np.einsum("ij,ij->i", x, x) <= 1.0


def test_mc_volume_of_the_unit_ball():
    volume, sigma = mc_volume(_unit_ball, [-1, -1, -1], [1, 1, 1], 400_000, seed=1)
    assert abs(volume - 4.0 / 3.0 * math.pi) <= 4.0 * sigma
    assert mc_volume(_unit_ball, [-1, -1, -1], [1, 1, 1], 400_000, seed=1) == (volume, sigma)


def test_mc_volume_of_nothing():
    volume, sigma = mc_volume(lambda x: np.zeros(len(x), dtype=bool), [0, 0, 0], [1, 1, 1], 1000)
    assert volume == 0.0 and sigma == 0.0
    _, _, centroid, _ = mc_volume_and_centroid(lambda x: np.zeros(len(x), dtype=bool), [0, 0, 0], [1, 1, 1], 1000)
    assert np.all(np.isnan(centroid))


def test_mc_centroid_of_a_half_ball():
    inside = lambda x: _unit_ball(x) & (x[:, 2] >= 0.0)
    _, _, centroid, err = mc_volume_and_centroid(inside, [-1, -1, 0], [1, 1, 1], 400_000, seed=2)
    assert abs(centroid[2] - 3.0 / 8.0) <= 4.0 * err[2]


def test_mc_patch_area_of_a_hemisphere():
    sphere = Sphere(center=np.zeros(3), r2=4.0)
    area, sigma = mc_sphere_patch_area(sphere, lambda x: x[:, 0] <= 0.0, 200_000, seed=3)
    assert abs(area - 8.0 * math.pi) <= 4.0 * sigma


def test_finite_differences_of_smooth_functions():
    psi = np.array([0.5, -1.5, 2.0])
    assert np.allclose(fd_gradient(lambda v: float(np.sum(v ** 2)), psi), 2.0 * psi, rtol=1e-8)
    a = np.array([[1.0, 2.0, 0.0], [0.0, -1.0, 3.0]])
    assert np.allclose(fd_jacobian(lambda v: a @ v, psi), a, atol=1e-7)


def test_check_result_line():
    assert CheckResult("volume", 1e-3, 2e-3, True).line().startswith("PASS volume")
    assert CheckResult("volume", 3e-3, 2e-3, False).line().startswith("FAIL volume")


def test_closed_form_geometry_checks_pass():
    results = geometry_suite(samples=20_000, seed=0, configs=1)
    closed_form = [r for r in results if "Monte Carlo" not in r.name]
    assert len(closed_form) == 7
    assert all(r.passed for r in closed_form)


@pytest.mark.slow
def test_solver_suite_passes():
    assert all(r.passed for r in run_suite("solver", samples=0, seed=0))


@pytest.mark.slow
def test_fluid_suite_passes():
    assert all(r.passed for r in run_suite("fluid", samples=0, seed=0))


def test_mc_facet_area_of_a_cut_disk():
    sphere = Sphere(center=np.zeros(3), r2=1.0)
    floor = Plane(n=np.array([0.0, 0.0, 1.0]), d=0.0)
    area, sigma = mc_facet_area(floor, sphere, [], 200_000, seed=4)
    assert abs(area - math.pi) <= 4.0 * sigma
    half, sigma = mc_facet_area(floor, sphere, [Plane(n=np.array([1.0, 0.0, 0.0]), d=0.0)], 200_000, seed=5)
    assert abs(half - 0.5 * math.pi) <= 4.0 * sigma
    assert mc_facet_area(Plane(n=np.array([0.0, 0.0, 1.0]), d=2.0), sphere, [], 1000) == (0.0, 0.0)


def test_corner_facet_areas_match_monte_carlo():
    domain = make_domain(box_halfspaces([0, 0, 0], [1, 1, 1]))
    center = np.array([0.1, 0.1, 0.1])
    sphere = Sphere(center=center, r2=0.04)
    restricted = evaluate_cell(domain.cell, center, 0.04)
    assert len(restricted.facets) == 3
    for k, facet in enumerate(restricted.facets):
        others = [f.plane for f in domain.cell.facets if f.tag != facet.tag]
        estimate, sigma = mc_facet_area(facet.plane, sphere, others, 400_000, seed=10 + k)
        assert abs(facet.area - estimate) <= 4.0 * sigma
