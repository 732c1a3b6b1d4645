import numpy as np
import pytest
from hypothesis import given, strategies as st

from twophase.errors import UnknownScenarioError
from twophase.twophase_field import (
    SCENARIOS, closure_residuals, entropy_production, interface_closure, interface_tangential_velocity,
    interface_velocity, linear_growth_bound, mass_transfer_rate, navier_residual, phase_of, scenario,
    smoothstep_cutoff, synthetic_closure_tuples, tangential_velocity_from_parts, velocity_at,
)

on_plane = st.floats(-3.0, 3.0).map(lambda a: np.array([a, 0.0]))


def test_catalog_names():
    assert {"case_a", "case_b", "case_c", "case_d", "case_d_cutoff"} <= set(SCENARIOS)
    with pytest.raises(UnknownScenarioError):
        scenario("nope")


def test_phase_and_filippov_set():
    f = scenario("case_a")
    assert phase_of(f, 0.0, [[0, 1], [0, -1], [0, 0]]).tolist() == [1, -1, 0]
    fs = velocity_at(f, 0.0, np.array([0.3, 0.0]))
    assert not fs.is_singleton
    assert fs.contains([0.0, 0.0]) and fs.contains([0.5, 0.0])
    assert not fs.contains([0.0, 0.1])
    assert fs.distance([0.0, 1.0]) == pytest.approx(1.0)
    assert velocity_at(f, 0.0, np.array([0.3, 0.5])).is_singleton


@pytest.mark.parametrize("name, mdot, jump, vs", [
    ("case_a", 0.0, 0.0, [0.0, 0.0]),
    ("case_b", 2.0, 0.0, [0.0, 0.0]),
    ("case_c", 1.0, 0.0, [1.0, 0.0]),
    ("case_d", 0.0, 0.0, [0.0, 0.0]),
])
def test_interface_quantities_at_origin(name, mdot, jump, vs):
    f = scenario(name)
    x = np.zeros(2)
    mp, mm, d = mass_transfer_rate(f, 0.0, x)
    assert float(mp) == pytest.approx(mdot) and float(d) == pytest.approx(jump)
    np.testing.assert_allclose(interface_tangential_velocity(f, 0.0, x), vs, atol=1e-12)


@given(on_plane)
def test_case_d_interface_velocity_off_origin(x):
    # v+ = (1, x1), v- = (-1, x1): the mass flux equals x1 and the tangential
    # interface velocity is the mass-flux-weighted mean of +1 and -1
    f = scenario("case_d")
    mp, _, _ = mass_transfer_rate(f, 0.0, x)
    assert float(mp) == pytest.approx(x[0])
    np.testing.assert_allclose(interface_velocity(f, 0.0, x), [x[0], 0.0], atol=1e-12)


@given(on_plane)
def test_case_d_slip_residual_grows_with_mass_flux(x):
    # the closed-form tractions balance the slip exactly only where x1 = 0
    rp, rm, _ = navier_residual(scenario("case_d"), 0.0, x[None])
    np.testing.assert_allclose(rp, [[-x[0], 0.0]], atol=1e-12)
    np.testing.assert_allclose(rm, [[-x[0], 0.0]], atol=1e-12)


def test_case_d_closure_at_origin():
    c = interface_closure(scenario("case_d"), 0.0, np.zeros(2))
    assert c.mdot == 0.0 and c.mdot_jump == 0.0
    np.testing.assert_allclose([c.navier_residual_plus, c.navier_residual_minus], 0.0, atol=1e-12)
    assert c.entropy_plus == pytest.approx(1.0) and c.entropy_minus == pytest.approx(1.0)


@given(st.floats(-0.99, 0.99))
def test_cutoff_entropy_nonnegative(a):
    f = scenario("case_d_cutoff")
    ep, em = entropy_production(f, 0.0, np.array([[a, 0.0]]))
    assert ep[0] >= 0 and em[0] >= 0


@given(st.integers(0, 2**31 - 1), st.integers(2, 3))
def test_synthetic_tuples_satisfy_all_relations(seed, dim):
    d = synthetic_closure_tuples(np.random.default_rng(seed), 50, dim=dim)
    for r in closure_residuals(**d):
        assert np.max(np.abs(r)) <= 1e-12


@given(st.integers(0, 2**31 - 1), st.floats(0.1, 10.0))
def test_rescaling_changes_interface_velocity_exactly_by_mass_flux_term(seed, lam):
    r = np.random.default_rng(seed)
    ap, am, m = r.uniform(0.1, 5, 20), r.uniform(0.1, 5, 20), r.uniform(-3, 3, 20)
    vp, vm = r.normal(size=(20, 2)), r.normal(size=(20, 2))
    base = tangential_velocity_from_parts(ap, am, m, vp, vm)
    scaled = tangential_velocity_from_parts(lam * ap, lam * am, m, vp, vm)
    expect = np.abs(m)[:, None] * (vp - vm) / (ap + am)[:, None] * abs(1 / lam - 1)
    np.testing.assert_allclose(np.abs(scaled - base), np.abs(expect), atol=1e-12)
    # without mass flux the interface velocity is unchanged
    np.testing.assert_allclose(tangential_velocity_from_parts(lam * ap, lam * am, 0 * m, vp, vm),
                               tangential_velocity_from_parts(ap, am, 0 * m, vp, vm), atol=1e-14)


def test_interface_velocity_is_convex_combination_without_mass_flux():
    vs = tangential_velocity_from_parts(1.0, 3.0, 0.0, np.array([[4.0, 0.0]]), np.array([[0.0, 0.0]]))
    np.testing.assert_allclose(vs, [[1.0, 0.0]])


def test_linear_growth_bound_case_d():
    assert linear_growth_bound(scenario("case_d"), ((-1, -1), (1, 1))) == pytest.approx(1.0)


def test_smoothstep_cutoff():
    s = np.array([0.0, 10.0, 10.5, 11.0, 12.0])
    np.testing.assert_allclose(smoothstep_cutoff(s, 10.0, 11.0), [1, 1, 0.5, 0, 0])


def test_time_reversed_field():
    f = scenario("case_b")
    g = f.time_reversed(1.0)
    np.testing.assert_allclose(g.v_plus(0.0, np.array([[0.0, 1.0]])), [[0.0, -2.0]])
    assert g.interface.value(0.3, np.array([0.0, 0.2])) == pytest.approx(0.2)


def test_parameter_override_through_catalog():
    f = scenario("case_d", {"alpha_plus": 3.0})
    assert f.alpha_plus == 3.0 and f.alpha_minus == 1.0
    assert scenario("case_d_cutoff", {"M": 4.0}).alpha_plus == 5.0


def test_filippov_examples():
    fs = velocity_at(scenario("case_d"), 0.0, np.array([2.0, 0.0]))
    np.testing.assert_allclose(sorted(map(tuple, fs.endpoints)), [(-1.0, 2.0), (1.0, 2.0)])
    np.testing.assert_allclose(velocity_at(scenario("case_a"), 0.0, np.array([0.0, 0.5])).endpoints[0], [1.0, 0.0])
    assert phase_of(scenario("case_a"), 0.0, [[0.0, -1e-12]]).tolist() == [0]


@pytest.mark.parametrize("name", ["case_c", "case_d", "case_d_cutoff"])
def test_bulk_velocity_near_interface_stays_close_to_hull(name):
    f = scenario(name)
    r = np.random.default_rng(1)
    x = np.column_stack([r.uniform(-2, 2, 200), r.uniform(-1e-2, 1e-2, 200)])
    for xi in x:
        p = np.array([xi[0], 0.0])
        # both sides are Lipschitz with constant at most 1 in x2 here
        assert velocity_at(f, 0.0, p).distance(f.velocity(0.0, xi)) <= abs(xi[1]) + 1e-12


def test_case_b_mass_fluxes():
    mp, mm, jump = mass_transfer_rate(scenario("case_b"), 0.0, np.array([0.4, 0.0]))
    assert (float(mp), float(mm), float(jump)) == (2.0, 2.0, 0.0)


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_mass_flux_balanced_on_catalog(name):
    f = scenario(name)
    if name == "single_phase_linear":
        return
    th = np.linspace(0, 2 * np.pi, 50, endpoint=False)
    x = np.column_stack([np.cos(th), np.sin(th)]) if name == "expanding_circle" else np.column_stack(
        [np.linspace(-3, 3, 50), np.zeros(50)])
    _, _, jump = mass_transfer_rate(f, 0.0, x)
    assert np.abs(jump).max() <= 1e-12


def test_closure_with_vanishing_slip_sum():
    from twophase.errors import ClosureUndefinedError

    with pytest.raises(ClosureUndefinedError):
        tangential_velocity_from_parts(0.0, 0.0, 0.0, np.ones((1, 2)), np.zeros((1, 2)))


def test_closure_weight_example():
    vp, vm = np.array([[1.0, 0.0]]), np.array([[-3.0, 0.0]])
    np.testing.assert_allclose(tangential_velocity_from_parts(2.0, 1.0, 1.0, vp, vm), vp)


@given(st.floats(0.1, 5), st.floats(0.1, 5), st.floats(-1, 1), st.floats(-3, 3), st.floats(-3, 3))
def test_closure_is_convex_combination_when_mass_flux_is_small(ap, am, frac, a, b):
    m = frac * min(ap, am)
    vs = tangential_velocity_from_parts(ap, am, m, np.array([[a, 0.0]]), np.array([[b, 0.0]]))[0, 0]
    assert min(a, b) - 1e-12 <= vs <= max(a, b) + 1e-12


@pytest.mark.parametrize("ap, am, ep, em", [(1.0, 1.0, 1.0, 1.0), (3.0, 1.0, 0.5, 1.5), (1.0, 3.0, 1.5, 0.5)])
def test_case_d_entropy_at_the_origin(ap, am, ep, em):
    # interface velocity (ap - am)/(ap + am); productions eta(1 -+ vS)
    f = scenario("case_d", {"alpha_plus": ap, "alpha_minus": am, "eta_plus": 1.0, "eta_minus": 1.0})
    e = entropy_production(f, 0.0, np.zeros((1, 2)))
    assert (e[0][0], e[1][0]) == pytest.approx((ep, em))


def test_no_slip_point_produces_no_entropy():
    f = scenario("expanding_circle")
    ep, em = entropy_production(f, 0.0, np.array([[1.0, 0.0]]))
    assert abs(ep[0]) <= 1e-9 and abs(em[0]) <= 1e-9


def test_growth_bound_examples():
    assert linear_growth_bound(scenario("case_a"), ((-1, -1), (1, 1))) == pytest.approx(1.0)
    zero = scenario("single_phase_linear", {"matrix": np.zeros((2, 2))})
    assert linear_growth_bound(zero, ((-1, -1), (1, 1))) == 0.0
    cut = linear_growth_bound(scenario("case_d_cutoff"), ((-12, -1), (12, 1)), samples=121)
    assert 0 < cut <= 1.0 + 1e-12


def test_case_d_is_divergence_free_in_the_bulk():
    from twophase.moving_interface import velocity_gradient

    r = np.random.default_rng(3)
    x = np.column_stack([r.uniform(-12, 12, 1000), r.uniform(-2, 2, 1000)])
    x = x[np.abs(x[:, 1]) > 1e-3]
    for s in (1, -1):
        G = velocity_gradient(scenario("case_d").side(s), 0.0, x)
        assert np.abs(np.trace(G, axis1=-2, axis2=-1)).max() <= 1e-6
    # the cutoff keeps the field solenoidal except in its transition band
    band = (np.abs(x[:, 0]) > 10.0) & (np.abs(x[:, 0]) < 11.0)
    div = np.trace(velocity_gradient(scenario("case_d_cutoff").side(1), 0.0, x), axis1=-2, axis2=-1)
    assert np.abs(div[~band]).max() <= 1e-6 and np.abs(div[band]).max() > 0.1
