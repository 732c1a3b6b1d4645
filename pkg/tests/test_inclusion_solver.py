import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twophase.geometry import ConvexBody, body_measure, convex_hull, hausdorff_distance
from twophase.inclusion_solver import (
    BranchPolicy, BranchTruncationWarning, comoving_volume, constant_inclusion_reachable,
    flowmap_property_check, integrate, reachable_set, sample_body, unit_ball_generators,
)
from twophase.twophase_field import scenario

BOX = ConvexBody.box((-1, -1), (1, 1))


@given(st.floats(-0.95, -0.05))
def test_case_b_crosses_exactly_once(y0):
    # v- = (0, 1) below, v+ = (0, 2) above: contact at t = -y0, then twice the speed
    trs = integrate(scenario("case_b"), 0.0, np.array([0.0, y0]), 1.0)
    assert len(trs) == 1
    (ev,) = trs[0].events
    assert ev.kind == "transversal_crossing"
    assert ev.t_event == pytest.approx(-y0, abs=1e-9)
    assert (ev.relative_normal_speed_in, ev.relative_normal_speed_out) == pytest.approx((1.0, 2.0))
    np.testing.assert_allclose(trs[0].end, [0.0, 2.0 * (1.0 + y0)], atol=1e-9)


def test_backward_integration_retraces_the_crossing():
    tr = integrate(scenario("case_b"), 1.0, np.array([0.0, 1.0]), 0.0)[0]
    assert tr.times[0] == 1.0 and tr.times[-1] == pytest.approx(0.0)
    np.testing.assert_allclose(tr.end, [0.0, -0.5], atol=1e-9)
    assert tr.events[0].t_event == pytest.approx(0.5, abs=1e-9)


def test_trajectory_samples_interface():
    tr = integrate(scenario("case_b"), 0.0, np.array([0.0, -0.5]), 1.0)[0]
    times, pts = zip(*tr.samples)
    assert times[0] == 0.0 and np.allclose(pts[0], [0.0, -0.5])
    assert np.all(np.diff(tr.times) > 0)


@given(st.floats(-0.9, 0.9), st.floats(0.05, 0.9), st.sampled_from([1, -1]))
def test_case_a_phases_are_invariant(x1, depth, side):
    x0 = np.array([x1, side * depth])
    cloud = reachable_set(scenario("case_a"), 0.0, x0[None], 0.5)
    np.testing.assert_allclose(cloud.points.points, [[x1 + 0.5 * side, side * depth]], atol=1e-12)


@settings(max_examples=10)
@given(st.floats(-0.9, 0.9))
def test_material_on_the_interface_stays_on_it(x1):
    cloud = reachable_set(scenario("case_a"), 0.0, np.array([[x1, 0.0]]), 0.5)
    assert np.abs(cloud.points.points[:, 1]).max() <= 1e-9


def test_rk4_order_on_rotation():
    f = scenario("single_phase_linear", {"matrix": [[0.0, -1.0], [1.0, 0.0]]})
    x0 = np.array([1.0, 0.5])
    exact = np.array([[np.cos(1.0), -np.sin(1.0)], [np.sin(1.0), np.cos(1.0)]]) @ x0
    errs = [np.linalg.norm(integrate(f, 0.0, x0, 1.0, dt=dt)[0].end - exact) for dt in (0.2, 0.1, 0.05)]
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 3.8)


def test_comoving_volume_is_deterministic():
    a = comoving_volume(scenario("case_c"), 0.0, BOX, 0.4, N=500, seed=3)
    b = comoving_volume(scenario("case_c"), 0.0, BOX, 0.4, N=500, seed=3)
    assert np.array_equal(a.points.points, b.points.points)
    assert a.provenance == b.provenance and np.array_equal(a.branch_ids, b.branch_ids)


# the plus part of case b travels at speed 2, so its extent grows as 2 + t
@pytest.mark.parametrize("name, area", [("case_a", 4.0), ("case_b", 5.0), ("case_c", 4.0)])
def test_comoving_area_of_straight_cases(name, area):
    cs = comoving_volume(scenario(name), 0.0, BOX, 0.5, N=1000)
    assert cs.measure() == pytest.approx(area, abs=1e-6)


def test_case_a_phase_hulls_are_shifted_halves():
    cs = comoving_volume(scenario("case_a"), 0.0, BOX, 0.5, N=1000)
    up = cs.hull(1)
    np.testing.assert_allclose(up.vertices.min(axis=0), [-0.5, 0.0], atol=1e-9)
    np.testing.assert_allclose(up.vertices.max(axis=0), [1.5, 1.0], atol=1e-9)


def test_case_d_origin_reaches_the_segment():
    # release into either phase at time s gives x1 = +-(t - s)
    cloud = reachable_set(scenario("case_d"), 0.0, np.zeros((1, 2)), 0.5)
    x = cloud.points.points
    assert x[:, 0].min() == pytest.approx(-0.5, abs=1e-9) and x[:, 0].max() == pytest.approx(0.5, abs=1e-9)


def test_fixed_selection_adds_nothing_at_case_d_origin():
    # brute force over convex combinations of the one-sided fields
    base = reachable_set(scenario("case_d"), 0.0, np.zeros((1, 2)), 0.5)
    brute = reachable_set(scenario("case_d"), 0.0, np.zeros((1, 2)), 0.5, policy=BranchPolicy(selection_grid=9))
    assert hausdorff_distance(base.points, brute.points) <= 1e-2
    assert body_measure(convex_hull(brute.points.points)) == pytest.approx(
        body_measure(convex_hull(base.points.points)), rel=2e-2)


def test_branch_cap_warns():
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        cloud = reachable_set(scenario("case_d"), 0.0, np.zeros((1, 2)), 0.5, policy=BranchPolicy(max_branches=5))
    assert cloud.warnings
    assert any(issubclass(w.category, BranchTruncationWarning) for w in rec)


def test_policy_validation():
    with pytest.raises(ValueError):
        BranchPolicy(dwell_grid=0)


def test_flowmap_properties_and_graph_closedness():
    rep = flowmap_property_check(scenario("case_d"), (0.0, 0.25, 0.5), np.array([[0.0, 0.0], [0.3, -0.2]]),
                                 usc_sequence=np.array([[1e-3, 0.0], [1e-4, 0.0], [1e-5, 0.0]]))
    assert rep.identity and rep.nonempty_bounded and rep.reversibility_ok and rep.lipschitz_ok
    assert rep.usc_distance <= 1e-4


def test_unit_ball_inclusion_reaches_the_disc():
    pts = constant_inclusion_reachable(unit_ball_generators(), np.array([1.0, 2.0]), 0.0, 0.5)
    r = np.linalg.norm(pts - [1.0, 2.0], axis=1)
    assert r.max() <= 0.5 + 1e-12
    assert body_measure(convex_hull(pts)) == pytest.approx(np.pi * 0.25, rel=1e-3)


def test_sample_body_covers_interior_boundary_and_interface():
    pts = sample_body(BOX, 1000, field=scenario("case_a"))
    assert BOX.contains(pts, tol=1e-12).all()
    assert np.any(np.abs(pts[:, 1]) < 1e-12)
    assert np.any(np.abs(np.abs(pts[:, 0]) - 1) < 1e-12)


def test_case_a_shape_at_quarter_time():
    cs = comoving_volume(scenario("case_a"), 0.0, BOX, 0.25, N=2000)
    lo_up, hi_up = cs.hull(1).vertices.min(axis=0), cs.hull(1).vertices.max(axis=0)
    lo_dn, hi_dn = cs.hull(-1).vertices.min(axis=0), cs.hull(-1).vertices.max(axis=0)
    np.testing.assert_allclose([lo_up, hi_up], [[-0.75, 0.0], [1.25, 1.0]], atol=1e-9)
    np.testing.assert_allclose([lo_dn, hi_dn], [[-1.25, -1.0], [0.75, 0.0]], atol=1e-9)
    on = cs.points.points[cs.phase == 0]
    assert on[:, 0].min() == pytest.approx(-1.25) and on[:, 0].max() == pytest.approx(1.25)


@settings(max_examples=10)
@given(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9))
def test_case_a_trajectories_never_change_side(x1, x2):
    f = scenario("case_a")
    side = np.sign(x2)
    for tr in integrate(f, 0.0, np.array([x1, x2]), 0.5):
        phi = f.interface.value(0.0, tr.points)
        if side == 0:
            assert np.abs(phi).max() <= 10 * f.interface.tol_surface
        else:
            assert np.all(side * phi >= -f.interface.tol_surface)


def test_case_d_bulk_start_crosses_once_and_converges():
    # x2 = 0.2 - 0.8 t + t^2/2 reaches the interface at t = 0.8 - sqrt(0.24) where x1 < 0
    f = scenario("case_d")
    ends = []
    for dt in (0.02, 0.01, 0.005):
        trs = integrate(f, 0.0, np.array([-0.8, 0.2]), 0.6, dt=dt)
        assert len(trs) == 1
        assert [e.kind for e in trs[0].events] == ["transversal_crossing"]
        assert trs[0].events[0].t_event == pytest.approx(0.8 - np.sqrt(0.24), abs=1e-9)
        ends.append(trs[0].end)
    # after the crossing v- = (-1, x1): closed form from the event state
    te = 0.8 - np.sqrt(0.24)
    a = -0.8 + te
    s = 0.6 - te
    exact = np.array([a - s, a * s - s**2 / 2])
    for e in ends:
        np.testing.assert_allclose(e, exact, atol=1e-9)


@pytest.mark.parametrize("dt", [0.1, 0.05])
def test_event_refinement_makes_case_b_exact(dt):
    tr = integrate(scenario("case_b"), 0.0, np.array([0.0, -0.37]), 0.75, dt=dt)[0]
    np.testing.assert_allclose(tr.end, [0.0, 2 * (0.75 - 0.37)], atol=1e-9)


def test_zero_duration_is_the_identity():
    X0 = np.array([[0.1, 0.2], [0.0, 0.0], [-0.4, -0.3]])
    cloud = reachable_set(scenario("case_d"), 0.3, X0, 0.3)
    np.testing.assert_array_equal(cloud.points.points, X0)


def test_unit_ball_reversibility_is_membership_not_inverse():
    gens = unit_ball_generators()
    x = np.array([0.0, 0.0])
    forward = constant_inclusion_reachable(gens, x, 0.0, 0.5)
    back = np.concatenate([constant_inclusion_reachable(gens, y, 0.5, 0.0, n_per_axis=9) for y in forward[::50]])
    assert np.min(np.linalg.norm(back - x, axis=1)) <= 1e-12
    assert np.max(np.linalg.norm(back - x, axis=1)) > 0.5
