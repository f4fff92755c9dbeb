import math

import numpy as np
import pytest

from src.models.Geometry import Arc, FullCircle, GeneralizedPolygon, NeighborTag, Plane, Segment
from src.services.geometry_service import (
    box_halfspaces,
    cell_volume_convex,
    clip_cell,
    facet_area,
    make_domain,
    polygon_area,
    polygon_centroid,
    polygon_from_loop,
)
from src.utils.Errors import EmptyDomain, OpenLoop, UnboundedDomain

Z = np.array([0.0, 0.0, 1.0])
XY_PLANE = Plane(n=Z, d=0.0)


def test_unit_box_domain(unit_box):
    assert unit_box.volume == pytest.approx(1.0, abs=1e-12)
    assert len(unit_box.cell.facets) == 6
    assert sorted(f.tag.index for f in unit_box.cell.facets) == list(range(6))
    assert all(f.tag.is_domain for f in unit_box.cell.facets)
    assert np.allclose(unit_box.lower, 0.0)
    assert np.allclose(unit_box.upper, 1.0)
    assert unit_box.tol == pytest.approx(1e-9 * math.sqrt(3.0))


def test_tetrahedron_domain():
    planes = [
        Plane.from_normal_offset([-1, 0, 0], 0.0),
        Plane.from_normal_offset([0, -1, 0], 0.0),
        Plane.from_normal_offset([0, 0, -1], 0.0),
        Plane.from_normal_offset([1, 1, 1], 1.0),
    ]
    domain = make_domain(planes)
    assert domain.volume == pytest.approx(1.0 / 6.0, rel=1e-10)
    assert len(domain.cell.vertices) == 4


def test_redundant_halfspace_has_no_facet():
    planes = box_halfspaces([0, 0, 0], [1, 1, 1]) + [Plane.from_normal_offset([1, 0, 0], 5.0)]
    domain = make_domain(planes)
    assert domain.volume == pytest.approx(1.0, abs=1e-12)
    assert 6 not in [f.tag.index for f in domain.cell.facets]


def test_too_few_halfspaces_is_unbounded():
    with pytest.raises(UnboundedDomain):
        make_domain(box_halfspaces([0, 0, 0], [1, 1, 1])[:3])


def test_open_halfspaces_are_unbounded():
    planes = [
        Plane.from_normal_offset([1, 0, 0], 1.0),
        Plane.from_normal_offset([0, 1, 0], 1.0),
        Plane.from_normal_offset([0, 0, 1], 1.0),
        Plane.from_normal_offset([1, 1, 1], 5.0),
    ]
    with pytest.raises(UnboundedDomain):
        make_domain(planes)


def test_contradicting_halfspaces_are_empty():
    planes = box_halfspaces([0, 0, 0], [1, 1, 1]) + [Plane.from_normal_offset([-1, 0, 0], -2.0)]
    with pytest.raises(EmptyDomain):
        make_domain(planes)


def test_clip_cube_in_half(unit_box):
    tag = NeighborTag.site(7)
    half = clip_cell(unit_box.cell, Plane.from_normal_offset([1, 0, 0], 0.5), tag)
    assert half is not None
    assert cell_volume_convex(half) == pytest.approx(0.5, abs=1e-12)
    assert len(half.facets) == 6
    cut = [f for f in half.facets if f.tag == tag]
    assert len(cut) == 1
    assert facet_area(half, cut[0]) == pytest.approx(1.0, abs=1e-12)
    assert half.neighbor_sites() == [7]


def test_clip_cube_along_diagonal(unit_box):
    plane = Plane.from_normal_offset([1, 1, 1], 1.5)
    clipped = clip_cell(unit_box.cell, plane, NeighborTag.site(0))
    assert cell_volume_convex(clipped) == pytest.approx(0.5, abs=1e-12)
    cut = [f for f in clipped.facets if f.tag.is_site][0]
    assert len(cut.loop) == 6


def test_clip_keeps_or_drops_whole_cell(unit_box):
    cell = unit_box.cell
    assert clip_cell(cell, Plane.from_normal_offset([1, 0, 0], 2.0), NeighborTag.site(0)) is cell
    assert clip_cell(cell, Plane.from_normal_offset([1, 0, 0], -1.0), NeighborTag.site(0)) is None


def test_clip_through_face_keeps_cell(unit_box):
    # the plane only touches the x = 1 face
    cell = unit_box.cell
    assert clip_cell(cell, Plane.from_normal_offset([1, 0, 0], 1.0), NeighborTag.site(0)) is cell


def test_random_cuts_split_the_volume(unit_box, rng):
    for _ in range(25):
        normal = rng.standard_normal(3)
        plane = Plane.from_normal_offset(normal, float(normal @ rng.uniform(0.1, 0.9, size=3)))
        flipped = Plane(n=-plane.n, d=-plane.d)
        kept = clip_cell(unit_box.cell, plane, NeighborTag.site(0))
        rest = clip_cell(unit_box.cell, flipped, NeighborTag.site(1))
        volumes = [0.0 if c is None else cell_volume_convex(c) for c in (kept, rest)]
        assert sum(volumes) == pytest.approx(1.0, abs=1e-12)


def test_clipping_twice_changes_nothing(unit_box, rng):
    for _ in range(25):
        normal = rng.standard_normal(3)
        plane = Plane.from_normal_offset(normal, float(normal @ rng.uniform(0.1, 0.9, size=3)))
        once = clip_cell(unit_box.cell, plane, NeighborTag.site(0))
        twice = clip_cell(once, plane, NeighborTag.site(0))
        assert twice is not None
        assert cell_volume_convex(twice) == pytest.approx(cell_volume_convex(once), abs=1e-14)
        assert len(twice.facets) == len(once.facets)


def test_square_polygon():
    square = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
    polygon = polygon_from_loop(square, XY_PLANE)
    assert polygon_area(polygon) == pytest.approx(1.0)
    assert np.allclose(polygon_centroid(polygon), [0.5, 0.5, 0.0])


def test_half_disk_polygon():
    left = np.array([-1.0, 0.0, 0.0])
    right = np.array([1.0, 0.0, 0.0])
    arc = Arc(center=np.zeros(3), radius=1.0, axis=Z, start_angle=0.0, end_angle=0.0)
    arc = Arc(center=np.zeros(3), radius=1.0, axis=Z, start_angle=arc.angle_of(right), end_angle=arc.angle_of(left))
    polygon = GeneralizedPolygon(plane=XY_PLANE, boundary=[Segment(a=left, b=right), arc], tol=1e-9)
    assert polygon_area(polygon) == pytest.approx(math.pi / 2.0, rel=1e-12)
    assert np.allclose(polygon_centroid(polygon), [0.0, 4.0 / (3.0 * math.pi), 0.0], atol=1e-12)


def test_full_circle_polygon():
    center = np.array([0.2, -0.1, 0.0])
    polygon = GeneralizedPolygon(plane=XY_PLANE, boundary=[FullCircle(center=center, radius=0.3, axis=Z)])
    assert polygon_area(polygon) == pytest.approx(0.09 * math.pi)
    assert np.allclose(polygon_centroid(polygon), center)


def test_open_boundary_is_rejected():
    pieces = [
        Segment(a=np.array([0.0, 0.0, 0.0]), b=np.array([1.0, 0.0, 0.0])),
        Segment(a=np.array([1.0, 0.0, 0.0]), b=np.array([1.0, 1.0, 0.0])),
        Segment(a=np.array([1.0, 1.0, 0.0]), b=np.array([0.0, 0.5, 0.0])),
    ]
    with pytest.raises(OpenLoop):
        polygon_area(GeneralizedPolygon(plane=XY_PLANE, boundary=pieces, tol=1e-9))
