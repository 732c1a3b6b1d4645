"""Two-phase velocity fields, interface closures and the scenario catalog."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Callable

import numpy as np

from .errors import ClosureUndefinedError, UnknownScenarioError
from .moving_interface import (
    LevelSetField,
    normal_at,
    normal_speed,
    tangential_projector,
    velocity_gradient,
)

__all__ = [
    "Phase",
    "PhaseField",
    "FilippovSet",
    "InterfaceClosure",
    "phase_of",
    "velocity_at",
    "mass_transfer_rate",
    "interface_tangential_velocity",
    "interface_velocity",
    "synthetic_closure_tuples",
    "tangential_velocity_from_parts",
    "navier_residual",
    "closure_residuals",
    "entropy_production",
    "interface_closure",
    "linear_growth_bound",
    "scenario",
    "SCENARIOS",
    "smoothstep_cutoff",
    "newtonian_traction",
]


class Phase(IntEnum):
    MINUS = -1
    INTERFACE = 0
    PLUS = 1


VectorField = Callable[[float, np.ndarray], np.ndarray]


def _as_field(value) -> Callable[[float, np.ndarray], np.ndarray]:
    """Wrap a constant density into a callable with the right broadcast shape."""
    if callable(value):
        return value
    c = float(value)
    return lambda t, x: np.full(np.shape(x)[:-1], c)


@dataclass(frozen=True, eq=False)
class PhaseField:
    """Pair of one-sided velocity fields with densities and slip parameters.

    ``v_plus`` and ``v_minus`` are smooth on their closed phases and are
    evaluated there as continuous extensions.  ``traction`` optionally returns
    the one-sided tangential tractions ``((S+ n+)_par, (S- n-)_par)`` as a
    function of ``(field, t, x)``; when it
    is absent a Newtonian viscous traction is formed from the velocity
    gradients.
    """

    v_plus: VectorField
    v_minus: VectorField
    interface: LevelSetField
    rho_plus: Callable | float = 1.0
    rho_minus: Callable | float = 1.0
    alpha_plus: float = 1.0
    alpha_minus: float = 1.0
    eta_plus: float = 1.0
    eta_minus: float = 1.0
    traction: Callable | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.interface.dim

    def side(self, sign: int) -> VectorField:
        return self.v_plus if sign > 0 else self.v_minus

    def density(self, sign: int, t: float, x) -> np.ndarray:
        return _as_field(self.rho_plus if sign > 0 else self.rho_minus)(t, np.asarray(x, dtype=float))

    def velocity(self, t: float, x) -> np.ndarray:
        """Single-valued velocity: ``v_plus`` where ``phi >= 0`` and ``v_minus`` elsewhere."""
        x = np.asarray(x, dtype=float)
        up = self.interface.value(t, x) >= 0
        return np.where(up[..., None], self.v_plus(t, x), self.v_minus(t, x))

    def time_reversed(self, t_ref: float) -> "PhaseField":
        """Field seen in the reversed time ``s = t_ref - t`` (velocities change sign)."""
        F = self.interface
        rev = LevelSetField(
            phi=lambda s, x: F.value(t_ref - s, x),
            grad_phi=None if F.grad_phi is None else (lambda s, x: F.gradient(t_ref - s, x)),
            dphi_dt=lambda s, x: -F.time_derivative(t_ref - s, x),
            dim=F.dim, band_width=F.band_width, tol_surface=F.tol_surface, grad_floor=F.grad_floor,
        )
        vp, vm = self.v_plus, self.v_minus
        rp, rm = _as_field(self.rho_plus), _as_field(self.rho_minus)
        return replace(
            self,
            v_plus=lambda s, x: -np.asarray(vp(t_ref - s, x)),
            v_minus=lambda s, x: -np.asarray(vm(t_ref - s, x)),
            rho_plus=lambda s, x: rp(t_ref - s, x),
            rho_minus=lambda s, x: rm(t_ref - s, x),
            interface=rev,
            traction=None,
            name=self.name + "[reversed]",
        )

    def with_params(self, **overrides) -> "PhaseField":
        return replace(self, **overrides)


@dataclass(frozen=True, eq=False)
class FilippovSet:
    """Convex hull of one or two velocity generators."""

    endpoints: tuple[np.ndarray, ...]

    @property
    def is_singleton(self) -> bool:
        return len(self.endpoints) == 1

    def distance(self, w) -> float:
        """Distance from ``w`` to the hull of the generators."""
        w = np.asarray(w, dtype=float)
        if self.is_singleton:
            return float(np.linalg.norm(w - self.endpoints[0]))
        a, b = self.endpoints
        ab = b - a
        denom = float(ab @ ab)
        s = 0.0 if denom == 0 else float(np.clip((w - a) @ ab / denom, 0.0, 1.0))
        return float(np.linalg.norm(w - (a + s * ab)))

    def contains(self, w, tol: float = 1e-12) -> bool:
        return self.distance(w) <= tol


@dataclass(frozen=True)
class InterfaceClosure:
    """Interface quantities at one point of the interface."""

    mdot: float
    mdot_jump: float
    vS_tangential: np.ndarray
    navier_residual_plus: np.ndarray
    navier_residual_minus: np.ndarray
    entropy_plus: float
    entropy_minus: float


# ---------------------------------------------------------------------------
# pointwise evaluation


def phase_of(field: PhaseField, t: float, x) -> np.ndarray:
    """Phase code per point: +1 for ``phi > tol``, -1 for ``phi < -tol``, 0 in the band."""
    phi = field.interface.value(t, np.asarray(x, dtype=float))
    out = np.where(phi > field.interface.tol_surface, 1, np.where(phi < -field.interface.tol_surface, -1, 0))
    return out.astype(int)


def velocity_at(field: PhaseField, t: float, x) -> FilippovSet:
    """Set-valued velocity at a single point."""
    x = np.asarray(x, dtype=float)
    p = int(phase_of(field, t, x))
    if p > 0:
        return FilippovSet((np.asarray(field.v_plus(t, x), dtype=float),))
    if p < 0:
        return FilippovSet((np.asarray(field.v_minus(t, x), dtype=float),))
    return FilippovSet((np.asarray(field.v_minus(t, x), dtype=float), np.asarray(field.v_plus(t, x), dtype=float)))


def mass_transfer_rate(field: PhaseField, t: float, x, vS_normal=None):
    """One-sided rates ``rho (v - vS) . n`` on both sides and their difference."""
    x = np.asarray(x, dtype=float)
    n = normal_at(field.interface, t, x)
    vn = normal_speed(field.interface, t, x) if vS_normal is None else np.asarray(vS_normal, dtype=float)
    up = field.density(1, t, x) * (np.einsum("...i,...i->...", field.v_plus(t, x), n) - vn)
    dn = field.density(-1, t, x) * (np.einsum("...i,...i->...", field.v_minus(t, x), n) - vn)
    return up, dn, up - dn


def _col(a) -> np.ndarray:
    """Scalar-per-point quantity with a trailing axis for broadcasting against vectors."""
    return np.asarray(a, dtype=float)[..., None]


def tangential_velocity_from_parts(alpha_plus, alpha_minus, mdot, vp_par, vm_par) -> np.ndarray:
    """Slip-weighted interface tangential velocity from its ingredients."""
    ap, am, m = _col(alpha_plus), _col(alpha_minus), _col(mdot)
    if np.any(ap + am == 0):
        raise ClosureUndefinedError("slip coefficients sum to zero")
    return ((ap + m) * vp_par + (am - m) * vm_par) / (ap + am)


def interface_tangential_velocity(field: PhaseField, t: float, x) -> np.ndarray:
    """Tangential interface velocity from the slip-weighted combination of both sides."""
    x = np.asarray(x, dtype=float)
    if field.alpha_plus + field.alpha_minus == 0:
        raise ClosureUndefinedError("slip coefficients sum to zero")
    n = normal_at(field.interface, t, x)
    P = tangential_projector(n)
    mdot, _, _ = mass_transfer_rate(field, t, x)
    vp = np.einsum("...ij,...j->...i", P, field.v_plus(t, x))
    vm = np.einsum("...ij,...j->...i", P, field.v_minus(t, x))
    out = tangential_velocity_from_parts(field.alpha_plus, field.alpha_minus, mdot, vp, vm)
    return np.einsum("...ij,...j->...i", P, out)


def interface_velocity(field: PhaseField, t: float, x) -> np.ndarray:
    """Full interface velocity: normal speed times normal plus the tangential closure."""
    x = np.asarray(x, dtype=float)
    n = normal_at(field.interface, t, x)
    return normal_speed(field.interface, t, x)[..., None] * n + interface_tangential_velocity(field, t, x)


def closure_residuals(alpha_plus, alpha_minus, mdot, vp_par, vm_par, vS_par, tr_plus, tr_minus):
    """Residuals of the tangential interface relations for given ingredients.

    Returns ``(res_plus, res_minus, combined, momentum)``: the two one-sided
    slip laws, the slip law of the plus side with the interface velocity
    eliminated, and the tangential momentum balance.
    """
    ap, am, m = _col(alpha_plus), _col(alpha_minus), _col(mdot)
    res_plus = ap * (vp_par - vS_par) + tr_plus
    res_minus = am * (vm_par - vS_par) + tr_minus
    combined = ap * (am - m) / (ap + am) * (vp_par - vm_par) + tr_plus
    momentum = m * (vm_par - vp_par) + tr_plus + tr_minus
    return res_plus, res_minus, combined, momentum


def synthetic_closure_tuples(rng: np.random.Generator, n: int, dim: int = 2, scale: float = 1.0) -> dict:
    """Random tangential data satisfying both slip laws exactly.

    Slip coefficients are positive, the mass flux and the one-sided tangential
    velocities are arbitrary, the interface velocity follows from the
    slip-weighted combination and the tractions from the slip laws.
    """
    ap = rng.uniform(0.1, 5.0, n) * scale
    am = rng.uniform(0.1, 5.0, n) * scale
    mdot = rng.uniform(-3.0, 3.0, n)
    normal = np.zeros((n, dim))
    normal[:, -1] = 1.0
    P = tangential_projector(normal)
    vp = np.einsum("...ij,...j->...i", P, rng.normal(size=(n, dim)))
    vm = np.einsum("...ij,...j->...i", P, rng.normal(size=(n, dim)))
    vs = tangential_velocity_from_parts(ap, am, mdot, vp, vm)
    return dict(alpha_plus=ap, alpha_minus=am, mdot=mdot, vp_par=vp, vm_par=vm, vS_par=vs,
                tr_plus=-ap[:, None] * (vp - vs), tr_minus=-am[:, None] * (vm - vs))


def newtonian_traction(field: PhaseField, t: float, x) -> tuple[np.ndarray, np.ndarray]:
    """Tangential viscous tractions ``(2 eta D n)_par`` with outer normals ``n+ = -n``, ``n- = n``."""
    x = np.asarray(x, dtype=float)
    n = normal_at(field.interface, t, x)
    P = tangential_projector(n)
    out = []
    for sign, eta in ((1, field.eta_plus), (-1, field.eta_minus)):
        G = velocity_gradient(field.side(sign), t, x)
        D = 0.5 * (G + np.swapaxes(G, -1, -2))
        outer = -sign * n
        out.append(np.einsum("...ij,...jk,...k->...i", P, 2.0 * eta * D, outer))
    return out[0], out[1]


def _tractions(field: PhaseField, t: float, x):
    if field.traction is not None:
        return field.traction(field, t, x)
    return newtonian_traction(field, t, x)


def navier_residual(field: PhaseField, t: float, x, stress_tangential_plus=None, stress_tangential_minus=None):
    """Slip-law residuals ``(res_plus, res_minus, combined)`` at interface points.

    Tractions default to those supplied by the scenario.
    """
    x = np.asarray(x, dtype=float)
    if stress_tangential_plus is None or stress_tangential_minus is None:
        tp, tm = _tractions(field, t, x)
        stress_tangential_plus = tp if stress_tangential_plus is None else stress_tangential_plus
        stress_tangential_minus = tm if stress_tangential_minus is None else stress_tangential_minus
    n = normal_at(field.interface, t, x)
    P = tangential_projector(n)
    mdot, _, _ = mass_transfer_rate(field, t, x)
    vp = np.einsum("...ij,...j->...i", P, field.v_plus(t, x))
    vm = np.einsum("...ij,...j->...i", P, field.v_minus(t, x))
    vs = interface_tangential_velocity(field, t, x)
    rp, rm, comb, _ = closure_residuals(field.alpha_plus, field.alpha_minus, mdot, vp, vm, vs,
                                        np.asarray(stress_tangential_plus), np.asarray(stress_tangential_minus))
    return rp, rm, comb


def entropy_production(field: PhaseField, t: float, x):
    """One-sided productions ``-(v - vS)_par . (S n)_par`` on the plus and minus side."""
    x = np.asarray(x, dtype=float)
    n = normal_at(field.interface, t, x)
    P = tangential_projector(n)
    vs = interface_tangential_velocity(field, t, x)
    tp, tm = _tractions(field, t, x)
    slip_p = np.einsum("...ij,...j->...i", P, field.v_plus(t, x)) - vs
    slip_m = np.einsum("...ij,...j->...i", P, field.v_minus(t, x)) - vs
    return -np.einsum("...i,...i->...", slip_p, tp), -np.einsum("...i,...i->...", slip_m, tm)


def interface_closure(field: PhaseField, t: float, x) -> InterfaceClosure:
    x = np.asarray(x, dtype=float)
    mp, mm, jump = mass_transfer_rate(field, t, x)
    rp, rm, _ = navier_residual(field, t, x)
    ep, em = entropy_production(field, t, x)
    return InterfaceClosure(float(mp), float(jump), interface_tangential_velocity(field, t, x), rp, rm,
                            float(ep), float(em))


def linear_growth_bound(field: PhaseField, box, samples: int = 41, t: float = 0.0) -> float:
    """Smallest ``c`` with ``|v| <= c (1 + |x|)`` over a grid on ``box = (lo, hi)``.

    Both one-sided fields are sampled on the closure of their phase.
    """
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    axes = [np.linspace(lo[k], hi[k], samples) for k in range(lo.size)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lo.size)
    ph = phase_of(field, t, pts)
    weight = 1.0 + np.linalg.norm(pts, axis=1)
    best = 0.0
    for sign in (1, -1):
        mask = (ph == sign) | (ph == 0)
        if np.any(mask):
            speed = np.linalg.norm(field.side(sign)(t, pts[mask]), axis=-1)
            best = max(best, float(np.max(speed / weight[mask])))
    return best


# ---------------------------------------------------------------------------
# scenario catalog


def smoothstep_cutoff(s, lower: float, upper: float) -> np.ndarray:
    """Quintic smoothstep: 1 for ``s <= lower``, 0 for ``s >= upper``, C^2 in between."""
    u = np.clip((np.asarray(s, dtype=float) - lower) / (upper - lower), 0.0, 1.0)
    return 1.0 - u**3 * (10.0 - 15.0 * u + 6.0 * u**2)


def _smoothstep_cutoff_derivative(s, lower: float, upper: float) -> np.ndarray:
    u = np.clip((np.asarray(s, dtype=float) - lower) / (upper - lower), 0.0, 1.0)
    return -30.0 * u**2 * (1.0 - u) ** 2 / (upper - lower)


def _constant(vec):
    c = np.asarray(vec, dtype=float)
    return lambda t, x: np.broadcast_to(c, np.shape(x)).copy()


def _plane(dim: int = 2) -> LevelSetField:
    e = np.zeros(dim)
    e[-1] = 1.0
    return LevelSetField(
        phi=lambda t, x: np.asarray(x)[..., -1],
        grad_phi=lambda t, x: np.broadcast_to(e, np.shape(x)).copy(),
        dphi_dt=lambda t, x: np.zeros(np.shape(x)[:-1]),
        dim=dim,
    )


def _case_a(p):
    return PhaseField(v_plus=_constant([1.0, 0.0]), v_minus=_constant([-1.0, 0.0]), interface=_plane(),
                      rho_plus=p.get("rho_plus", 1.0), rho_minus=p.get("rho_minus", 2.0))


def _case_b(p):
    return PhaseField(v_plus=_constant([0.0, 2.0]), v_minus=_constant([0.0, 1.0]), interface=_plane(),
                      rho_plus=p.get("rho_plus", 1.0), rho_minus=p.get("rho_minus", 2.0))


def _case_c(p):
    return PhaseField(v_plus=_constant([1.0, 1.0]), v_minus=_constant([0.0, 1.0]), interface=_plane(),
                      rho_plus=p.get("rho_plus", 1.0), rho_minus=p.get("rho_minus", 1.0))


def _case_d_velocity(sign: int, cutoff_at: float | None):
    def v(t, x):
        x = np.asarray(x, dtype=float)
        x1 = x[..., 0]
        base = np.stack([np.full(x1.shape, float(sign)), x1], axis=-1)
        if cutoff_at is None:
            return base
        return smoothstep_cutoff(np.abs(x1), cutoff_at, cutoff_at + 1.0)[..., None] * base

    return v


def _case_d_traction(f: "PhaseField", t: float, x):
    """Closed-form tangential tractions ``-eta+ e1`` and ``+eta- e1`` of the slip example."""
    x = np.asarray(x, dtype=float)
    e1 = np.zeros(x.shape)
    e1[..., 0] = 1.0
    return -f.eta_plus * e1, f.eta_minus * e1


def _case_d(p, cutoff: bool = False):
    M = float(p.get("M", 10.0)) if cutoff else None
    default_alpha = (M + 1.0) if cutoff else 1.0
    return PhaseField(
        v_plus=_case_d_velocity(1, M), v_minus=_case_d_velocity(-1, M), interface=_plane(),
        rho_plus=p.get("rho_plus", 1.0), rho_minus=p.get("rho_minus", 1.0),
        alpha_plus=default_alpha, alpha_minus=default_alpha,
        traction=_case_d_traction,
    )


def _single_phase_linear(p):
    A = np.asarray(p.get("matrix", np.eye(2)), dtype=float)
    b = np.asarray(p.get("offset", np.zeros(A.shape[0])), dtype=float)
    v = lambda t, x: np.asarray(x, dtype=float) @ A.T + b
    level = LevelSetField(phi=lambda t, x: np.ones(np.shape(x)[:-1]),
                          grad_phi=lambda t, x: np.zeros(np.shape(x)),
                          dphi_dt=lambda t, x: np.zeros(np.shape(x)[:-1]), dim=A.shape[0])
    return PhaseField(v_plus=v, v_minus=v, interface=level)


def _expanding_circle(p):
    r0 = float(p.get("r0", 1.0))
    speed = float(p.get("speed", 1.0))

    def radial(t, x):
        x = np.asarray(x, dtype=float)
        return speed * x / np.linalg.norm(x, axis=-1, keepdims=True)

    level = LevelSetField(
        phi=lambda t, x: np.linalg.norm(x, axis=-1) - (r0 + speed * t),
        grad_phi=lambda t, x: np.asarray(x) / np.linalg.norm(x, axis=-1, keepdims=True),
        dphi_dt=lambda t, x: np.full(np.shape(x)[:-1], -speed),
    )
    return PhaseField(v_plus=radial, v_minus=radial, interface=level)


SCENARIOS: dict[str, Callable[[dict], PhaseField]] = {
    "case_a": _case_a,
    "case_b": _case_b,
    "case_c": _case_c,
    "case_d": lambda p: _case_d(p, cutoff=False),
    "case_d_cutoff": lambda p: _case_d(p, cutoff=True),
    "single_phase_linear": _single_phase_linear,
    "expanding_circle": _expanding_circle,
}

def scenario(name: str, params: dict | None = None) -> PhaseField:
    """Build a catalog field; ``params`` may override slip, viscosity and density constants."""
    if name not in SCENARIOS:
        raise UnknownScenarioError(f"unknown scenario {name!r}; known: {sorted(SCENARIOS)}")
    params = dict(params or {})
    f = SCENARIOS[name](params)
    overrides = {k: params[k] for k in ("alpha_plus", "alpha_minus", "eta_plus", "eta_minus") if k in params}
    if overrides:
        f = replace(f, **overrides)
    return replace(f, name=name, params=params)
