import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial.distance import cdist

from twophase.errors import DomainError, EmptyInteriorError
from twophase.geometry import (
    ConvexBody, PointCloud, body_measure, convex_hull, dilation_cover_check, distance_to_body, erode,
    hausdorff_distance, inner_approx_constant, random_convex_polygon, random_convex_polytope,
)

seeds = st.integers(0, 2**31 - 1)


def test_box_basics():
    b = ConvexBody.box((-1, -2), (3, 2))
    assert body_measure(b) == pytest.approx(16.0)
    assert b.inradius == pytest.approx(2.0)
    np.testing.assert_allclose(b.incenter[1], 0.0, atol=1e-12)
    assert b.contains([[0, 0], [3, 2], [3.1, 0]]).tolist() == [True, True, False]


def test_disc_area_and_radii():
    d = ConvexBody.disc((1.0, -1.0), 2.0, n_vertices=2048)
    assert body_measure(d) == pytest.approx(4 * np.pi, rel=1e-5)
    assert d.inradius == pytest.approx(2.0, rel=1e-5)
    assert d.circumradius == pytest.approx(2.0, rel=1e-12)


def test_pointcloud_rejects_bad_input():
    with pytest.raises(DomainError):
        PointCloud(np.zeros((0, 2)))
    with pytest.raises(DomainError):
        PointCloud(np.array([[np.nan, 0.0]]))
    with pytest.raises(DomainError):
        PointCloud(np.zeros((3, 4)))


def test_hausdorff_known_value():
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    b = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 3.0]])
    assert hausdorff_distance(a, b) == pytest.approx(3.0)
    assert hausdorff_distance(b, a) == pytest.approx(3.0)


@given(seeds)
def test_hausdorff_matches_bruteforce(seed):
    r = np.random.default_rng(seed)
    a, b = r.normal(size=(40, 2)), r.normal(size=(25, 2))
    D = cdist(a, b)
    expect = max(D.min(axis=1).max(), D.min(axis=0).max())
    assert hausdorff_distance(a, b) == pytest.approx(expect, rel=1e-12)


def test_distance_to_square():
    sq = ConvexBody.box((0, 0), (1, 1))
    d = distance_to_body(sq, [[0.5, 0.5], [2.0, 0.5], [2.0, 2.0]])
    np.testing.assert_allclose(d, [0.0, 1.0, np.sqrt(2.0)], atol=1e-12)


@given(seeds)
def test_distance_to_polygon_vs_dense_boundary(seed):
    r = np.random.default_rng(seed)
    body = random_convex_polygon(r)
    p = r.normal(scale=3.0, size=(30, 2))
    dense = body.boundary_samples(20000)
    brute = cdist(p, dense).min(axis=1)
    brute[body.contains(p)] = 0.0
    d = distance_to_body(body, p)
    assert np.all(d <= brute + 1e-12)
    assert np.all(brute - d <= 2 * body.circumradius * 2 * np.pi / 20000 + 1e-9)


@given(seeds)
def test_hull_contains_its_points(seed):
    r = np.random.default_rng(seed)
    pts = r.normal(size=(50, 2))
    assert convex_hull(pts).contains(pts, tol=1e-10).all()


def test_degenerate_hull_has_zero_measure():
    seg = convex_hull([[0, 0], [1, 1], [2, 2]])
    assert seg.lower_dimensional
    assert body_measure(seg) == 0.0


def test_erode_box():
    e = erode(ConvexBody.box((0, 0), (4, 2)), 0.5)
    assert body_measure(e) == pytest.approx(3.0 * 1.0)
    with pytest.raises(EmptyInteriorError):
        erode(ConvexBody.box((0, 0), (4, 2)), 1.0)
    with pytest.raises(DomainError):
        erode(ConvexBody.box((0, 0), (4, 2)), 0.0)


def test_erode_disc_radius():
    d = ConvexBody.disc(radius=1.0, n_vertices=1024)
    e = erode(d, 0.25)
    assert e.inradius == pytest.approx(d.inradius - 0.25, rel=1e-9)


@given(seeds, st.floats(0.05, 0.95))
def test_dilation_cover_with_inner_constant(seed, frac):
    body = random_convex_polygon(np.random.default_rng(seed))
    k = inner_approx_constant(body)
    assert dilation_cover_check(body, frac * body.inradius, k)


def test_dilation_cover_fails_for_small_constant():
    sq = ConvexBody.box((0, 0), (1, 1))
    # the corner of the unit square is sqrt(2)*eps away from the eroded square
    assert not dilation_cover_check(sq, 0.1, 1.3)
    assert dilation_cover_check(sq, 0.1, np.sqrt(2) + 1e-9)


@given(seeds)
def test_polytope_3d_measure_and_membership(seed):
    r = np.random.default_rng(seed)
    body = random_convex_polytope(r)
    assert body.dim == 3
    assert body.contains(body.incenter[None])[0]
    assert body_measure(body) > 0


def test_cube_erosion_3d():
    cube = ConvexBody.box((0, 0, 0), (2, 2, 2))
    assert body_measure(cube) == pytest.approx(8.0)
    assert body_measure(erode(cube, 0.5)) == pytest.approx(1.0)


def test_hausdorff_small_cases():
    assert hausdorff_distance([[0.0, 0.0]], [[1.0, 0.0]]) == 1.0
    a = np.column_stack([np.linspace(0, 1, 101), np.zeros(101)])
    b = np.column_stack([np.linspace(0, 2, 201), np.zeros(201)])
    assert hausdorff_distance(a, b) == pytest.approx(1.0, abs=0.01)
    assert hausdorff_distance(a, a) == 0.0
    with pytest.raises(DomainError):
        hausdorff_distance(np.zeros((0, 2)), a)


@given(seeds)
def test_hausdorff_is_a_metric_on_clouds(seed):
    r = np.random.default_rng(seed)
    a, b, c = (r.normal(size=(15, 2)) for _ in range(3))
    assert hausdorff_distance(a, b) == hausdorff_distance(b, a)
    assert hausdorff_distance(a, c) <= hausdorff_distance(a, b) + hausdorff_distance(b, c) + 1e-12


def test_erode_examples():
    e = erode(ConvexBody.box((-1, -1), (1, 1)), 0.5)
    np.testing.assert_allclose(np.sort(e.vertices, axis=0), np.sort(ConvexBody.box((-0.5, -0.5), (0.5, 0.5)).vertices, axis=0))
    d = erode(ConvexBody.disc(radius=1.0, n_vertices=2048), 0.3)
    assert d.circumradius == pytest.approx(0.7, rel=1e-5)


@given(seeds, st.floats(0.05, 0.45), st.floats(0.5, 0.95))
def test_erosion_is_monotone_and_inner(seed, f1, f2):
    r = np.random.default_rng(seed)
    body = random_convex_polygon(r)
    e1, e2 = erode(body, f1 * body.inradius), erode(body, f2 * body.inradius)
    assert e1.contains(e2.vertices, tol=1e-10).all()
    # every point of the eroded body keeps its distance to the complement
    pts = e1.boundary_samples(200)
    A, b = body.halfspaces
    gap = -(pts @ A.T + b) / np.linalg.norm(A, axis=1)
    assert gap.min() >= f1 * body.inradius - 1e-9


@given(seeds)
def test_small_erosion_converges_to_body(seed):
    body = random_convex_polygon(np.random.default_rng(seed))
    eps = 1e-4 * body.inradius
    e = erode(body, eps)
    # vertex displacement is eps / sin(half angle), bounded by k * eps
    assert hausdorff_distance(e.vertices, body.vertices) <= inner_approx_constant(body) * eps + 1e-12


def test_inner_approx_constant_examples():
    assert inner_approx_constant(ConvexBody.box((-1, -1), (1, 1))) == pytest.approx(2.0)
    assert inner_approx_constant(ConvexBody.disc(n_vertices=4096)) == pytest.approx(np.sqrt(2), rel=1e-6)


@given(seeds)
def test_inner_approx_constant_at_least_one(seed):
    assert inner_approx_constant(random_convex_polygon(np.random.default_rng(seed))) >= 1.0


def test_cover_examples_on_the_square():
    sq = ConvexBody.box((-1, -1), (1, 1))
    assert dilation_cover_check(sq, 0.5, 2.0)
    assert not dilation_cover_check(sq, 0.5, 0.1)


def test_hull_examples():
    tri = convex_hull([[0, 0], [1, 0], [0, 1], [0.2, 0.2]])
    assert len(tri.vertices) == 3
    assert body_measure(tri) == pytest.approx(0.5)
    again = convex_hull(tri.vertices)
    np.testing.assert_allclose(np.sort(again.vertices, axis=0), np.sort(tri.vertices, axis=0))


def test_hull_of_disc_samples():
    r = np.random.default_rng(0)
    th = 2 * np.pi * r.random(20000)
    rad = np.sqrt(r.random(20000))
    pts = np.column_stack([rad * np.cos(th), rad * np.sin(th)])
    assert body_measure(convex_hull(pts)) == pytest.approx(np.pi, rel=1e-2)
    assert body_measure(ConvexBody.disc(n_vertices=10_000)) == pytest.approx(np.pi, abs=1e-3)


@given(seeds)
def test_measure_matches_monte_carlo(seed):
    r = np.random.default_rng(seed)
    body = random_convex_polygon(r)
    lo, hi = body.vertices.min(axis=0), body.vertices.max(axis=0)
    pts = lo + (hi - lo) * r.random((200_000, 2))
    mc = body.contains(pts).mean() * np.prod(hi - lo)
    assert mc == pytest.approx(body_measure(body), rel=2e-2)
