"""Integrals over moving domains and residuals of the transport theorems.

Each residual compares a time derivative of an integral over a co-moving
set (left side) with integrals over the initial configuration (right side).
Left sides integrate exactly over the hull polygons of the phase-history
classes of a co-moving set; right sides split the initial body at the
interface.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import InconsistentScenarioError, TransversalityError, WrongTheoremError
from .geometry import ConvexBody
from .inclusion_solver import BranchPolicy, ComovingSet, comoving_volume, sample_body
from .moving_interface import (
    LevelSetField,
    fd_step,
    interface_segments,
    normal_at,
    normal_speed,
    project_to_interface,
    surface_divergence,
    surface_flow,
    velocity_gradient,
)
from .twophase_field import PhaseField, mass_transfer_rate, phase_of

__all__ = [
    "QuadratureGrid",
    "SurfaceQuadrature",
    "RttReport",
    "MovingDomain",
    "IsochoricReport",
    "volume_integral",
    "polygon_integral",
    "moving_integral",
    "ddt_volume_integral",
    "rtt_single_residual",
    "rtt_two_phase_residual",
    "rtt_mass_weighted_residual",
    "fixed_volume_residual",
    "surface_transport_residual",
    "isochoric_check",
    "translating_interface_field",
]

TRANSVERSALITY_MARGIN = 1e-3


# ---------------------------------------------------------------------------
# integrands


def _scalar(psi) -> Callable:
    if callable(psi):
        return lambda t, x: np.asarray(psi(t, x), dtype=float) * np.ones(np.shape(x)[:-1])
    c = float(psi)
    return lambda t, x: np.full(np.shape(x)[:-1], c)


def _pair(psi) -> tuple[Callable, Callable]:
    """``(psi_plus, psi_minus)`` from a pair or from one function used on both sides."""
    if isinstance(psi, (tuple, list)):
        return _scalar(psi[0]), _scalar(psi[1])
    f = _scalar(psi)
    return f, f


def _dt(f, t, x):
    ht = 1e-5 * (1.0 + abs(t))
    return (f(t + ht, x) - f(t - ht, x)) / (2.0 * ht)


def _div_flux(psi, v, t, x):
    """``div(psi v)`` by central differences."""
    h = fd_step(x)
    out = np.zeros(x.shape[:-1])
    for j in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[j] = 1.0
        xp, xm = x + h * e, x - h * e
        out += (psi(t, xp) * v(t, xp)[..., j] - psi(t, xm) * v(t, xm)[..., j]) / (2.0 * h[..., 0])
    return out


def _grad(psi, t, x):
    h = fd_step(x)
    cols = []
    for j in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[j] = 1.0
        cols.append((psi(t, x + h * e) - psi(t, x - h * e)) / (2.0 * h[..., 0]))
    return np.stack(cols, axis=-1)


# ---------------------------------------------------------------------------
# volume quadrature


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Uniform cell grid over a box with a membership test for the integration domain."""

    h: float
    lo: np.ndarray
    hi: np.ndarray
    membership: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("cell size must be positive")

    @classmethod
    def for_body(cls, body: ConvexBody, h: float = 0.01) -> "QuadratureGrid":
        return cls(h, body.vertices.min(axis=0), body.vertices.max(axis=0),
                   lambda x: body.contains(x, tol=0.0))

    @classmethod
    def for_set(cls, cset: ComovingSet, h: float = 0.01) -> "QuadratureGrid":
        pts = cset.points.points
        return cls(h, pts.min(axis=0), pts.max(axis=0), cset.contains)

    def centers(self) -> np.ndarray:
        lo, hi = np.asarray(self.lo, dtype=float), np.asarray(self.hi, dtype=float)
        n = np.maximum(1, np.ceil((hi - lo) / self.h - 1e-9)).astype(int)
        axes = [lo[k] + self.h * (np.arange(n[k]) + 0.5) for k in range(lo.size)]
        c = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lo.size)
        return c[self.membership(c)]

    @property
    def cell_volume(self) -> float:
        return self.h ** len(self.lo)


def volume_integral(psi, grid: QuadratureGrid, t: float = 0.0) -> float:
    """Midpoint rule over the cells whose centres belong to the domain."""
    c = grid.centers()
    if c.shape[0] == 0:
        return 0.0
    return float(np.sum(_scalar(psi)(t, c)) * grid.cell_volume)


def _triangle_rule(order: int):
    g, w = leggauss(order)
    g = 0.5 * (g + 1.0)
    w = 0.5 * w
    U, W = np.meshgrid(g, g, indexing="ij")
    WU, WW = np.meshgrid(w, w, indexing="ij")
    # collapsed square: x = a + u ((1 - s)(b - a) + s (c - a)), jacobian 2|T| u
    return U.ravel(), W.ravel(), (WU * WW * U).ravel()


def polygon_nodes(vertices, order: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature nodes and weights for a convex polygon (fan of collapsed Gauss rules)."""
    v = np.asarray(vertices, dtype=float)
    if v.shape[0] < 3:
        return np.zeros((0, 2)), np.zeros(0)
    u, s, w = _triangle_rule(order)
    a = v[0]
    b, c = v[1:-1], v[2:]
    area2 = np.abs((b[:, 0] - a[0]) * (c[:, 1] - a[1]) - (b[:, 1] - a[1]) * (c[:, 0] - a[0]))
    nodes = a + u[None, :, None] * ((1 - s)[None, :, None] * (b - a)[:, None, :] + s[None, :, None] * (c - a)[:, None, :])
    weights = area2[:, None] * w[None, :]
    return nodes.reshape(-1, 2), weights.ravel()


def polygon_integral(psi, t: float, vertices, order: int = 8) -> float:
    """Integral over a convex polygon, exact for polynomials of degree below ``2 * order - 1``."""
    x, w = polygon_nodes(vertices, order)
    if w.size == 0:
        return 0.0
    return float(np.dot(w, _scalar(psi)(t, x)))


def _clip_halfplane(poly: np.ndarray, a: np.ndarray, c: float) -> np.ndarray:
    """Part of a convex polygon where ``a . x + c >= 0``."""
    out = []
    n = poly.shape[0]
    val = poly @ a + c
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        vp, vq = val[i], val[(i + 1) % n]
        if vp >= 0:
            out.append(p)
        if (vp >= 0) != (vq >= 0):
            out.append(p + (vp / (vp - vq)) * (q - p))
    return np.array(out).reshape(-1, poly.shape[1])


def _affine_fit(F: LevelSetField, t: float, body: ConvexBody):
    """Return ``(a, c)`` when the level set is affine over the body, else ``None``."""
    pts = np.concatenate([body.vertices, body.boundary_samples(32), body.incenter[None]])
    vals = F.value(t, pts)
    A = np.column_stack([pts, np.ones(pts.shape[0])])
    coef, *_ = np.linalg.lstsq(A, vals, rcond=None)
    if np.max(np.abs(A @ coef - vals)) > 1e-12 * (1.0 + np.max(np.abs(vals))):
        return None
    return coef[:-1], float(coef[-1])


def _phase_integral(integrand_pair, F: LevelSetField, t: float, body: ConvexBody, h: float = 0.005,
                    order: int = 8) -> dict[int, float]:
    """``{+1: int over body cap Omega+, -1: int over body cap Omega-}``."""
    fit = _affine_fit(F, t, body) if body.dim == 2 else None
    out = {}
    if fit is not None:
        a, c = fit
        for s, g in zip((1, -1), integrand_pair):
            part = _clip_halfplane(body.vertices, s * a, s * c)
            out[s] = polygon_integral(g, t, part, order) if part.shape[0] >= 3 else 0.0
        return out
    for s, g in zip((1, -1), integrand_pair):
        grid = QuadratureGrid(h, body.vertices.min(axis=0), body.vertices.max(axis=0),
                              lambda x, s=s: body.contains(x, tol=0.0) & (s * F.value(t, x) > 0))
        out[s] = volume_integral(g, grid, t)
    return out


# ---------------------------------------------------------------------------
# surface quadrature


@dataclass(frozen=True, eq=False)
class SurfaceQuadrature:
    """Gauss nodes on the interface trace inside a body, with arc-length weights."""

    nodes: np.ndarray
    weights: np.ndarray
    t: float

    @classmethod
    def from_interface(cls, F: LevelSetField, t: float, body: ConvexBody,
                       nodes_per_length: int = 2048, order: int = 2) -> "SurfaceQuadrature":
        cell = order / nodes_per_length
        segs = interface_segments(F, t, body, cell=cell)
        if segs.shape[0] == 0:
            return cls(np.zeros((0, body.dim)), np.zeros(0), t)
        g, w = leggauss(order)
        g = 0.5 * (g + 1.0)
        p, q = segs[:, 0], segs[:, 1]
        length = np.linalg.norm(q - p, axis=1)
        nodes = p[:, None, :] + g[None, :, None] * (q - p)[:, None, :]
        weights = 0.5 * length[:, None] * w[None, :]
        nodes = project_to_interface(F, t, nodes.reshape(-1, body.dim))
        return cls(nodes, weights.ravel(), t)

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.weights))

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, np.asarray(values, dtype=float)))

    def __len__(self) -> int:
        return self.weights.size


# ---------------------------------------------------------------------------
# reports


@dataclass
class RttReport:
    """Left side, itemised right side and their difference."""

    lhs: float
    rhs_terms: dict
    residual: float
    relative_residual: float
    meta: dict = field(default_factory=dict)

    @classmethod
    def build(cls, lhs: float, rhs_terms: dict, **meta) -> "RttReport":
        total = float(sum(rhs_terms.values()))
        res = float(lhs - total)
        scale = max(abs(lhs), abs(total))
        rel = abs(res) / scale if scale > 1e-12 else abs(res)
        return cls(float(lhs), {k: float(v) for k, v in rhs_terms.items()}, res, float(rel), dict(meta))

    @property
    def rhs(self) -> float:
        return float(sum(self.rhs_terms.values()))

    def within(self, rel_tol: float, abs_tol: float = 0.0) -> bool:
        """Relative test, or an absolute one when both sides vanish to ``abs_tol``."""
        if self.relative_residual <= rel_tol:
            return True
        return abs(self.residual) <= abs_tol and abs(self.lhs) <= abs_tol and abs(self.rhs) <= abs_tol

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# ---------------------------------------------------------------------------
# moving domains


class MovingDomain:
    """Co-moving sets of one body, computed on demand and cached by time."""

    def __init__(self, field: PhaseField, t0: float, G0: ConvexBody, N: int = 4000, dt: float = 1e-2,
                 policy: BranchPolicy | None = None, seed: int = 0):
        self.field, self.t0, self.G0 = field, float(t0), G0
        self.N, self.dt, self.policy, self.seed = N, dt, policy or BranchPolicy(), seed
        self._cache: dict[float, ComovingSet] = {}

    def __call__(self, t: float) -> ComovingSet:
        t = float(t)
        if t not in self._cache:
            self._cache[t] = comoving_volume(self.field, self.t0, self.G0, t, N=self.N, dt=self.dt,
                                             policy=self.policy, seed=self.seed)
        return self._cache[t]


def moving_integral(psi, cset: ComovingSet, order: int = 8) -> float:
    """Integral of a phase-wise integrand over the hulls of the history classes of a co-moving set."""
    pp, pm = _pair(psi)
    total = 0.0
    for _, sign, hull in cset.class_hulls():
        total += polygon_integral(pp if sign > 0 else pm, cset.t, hull.vertices, order)
    return total


def ddt_volume_integral(psi, domain: Callable[[float], ComovingSet], t0: float, h_t: float = 1e-2,
                        scheme: str = "forward") -> float:
    """Time derivative of the integral over a co-moving set at ``t0``.

    ``forward`` combines forward differences at ``h_t`` and ``h_t/2`` by
    Richardson extrapolation; ``central`` is the plain centred difference,
    which needs the set at the earlier time as well.
    """
    I = lambda t: moving_integral(psi, domain(t))
    if scheme == "forward":
        i0 = I(t0)
        d1 = (I(t0 + h_t) - i0) / h_t
        d2 = (I(t0 + 0.5 * h_t) - i0) / (0.5 * h_t)
        return 2.0 * d2 - d1
    if scheme == "central":
        return (I(t0 + h_t) - I(t0 - h_t)) / (2.0 * h_t)
    raise ValueError(f"unknown difference scheme {scheme!r}")


def _domain(field, t0, G0, domain, N, dt, policy, seed):
    return domain if domain is not None else MovingDomain(field, t0, G0, N=N, dt=dt, policy=policy, seed=seed)


# ---------------------------------------------------------------------------
# transport residuals


def _crosses(F: LevelSetField, t: float, body: ConvexBody) -> bool:
    pts = np.concatenate([body.vertices, sample_body(body, 400)])
    vals = F.value(t, pts)
    return bool((np.any(vals > 0) and np.any(vals < 0)) or np.any(np.abs(vals) <= F.tol_surface))


def rtt_single_residual(field: PhaseField, psi, G0: ConvexBody, t0: float = 0.0, h_t: float = 1e-2,
                        N: int = 4000, dt: float = 1e-2, domain=None, scheme: str = "forward") -> RttReport:
    """Residual of the transport theorem for a continuous field on a body away from any interface."""
    F = field.interface
    if G0.dim != 2:
        raise NotImplementedError("volume transport checks are implemented in 2-D")
    if _crosses(F, t0, G0):
        raise WrongTheoremError("the interface meets the body; use the two-phase form")
    sign = 1 if F.value(t0, G0.incenter) > 0 else -1
    v = field.side(sign)
    g = _scalar(psi)
    lhs = ddt_volume_integral(g, _domain(field, t0, G0, domain, N, dt, None, 0), t0, h_t, scheme)
    bulk = polygon_integral(lambda t, x: _dt(g, t, x) + _div_flux(g, v, t, x), t0, G0.vertices)
    return RttReport.build(lhs, {"bulk": bulk}, h_t=h_t, scheme=scheme, particles=N, theorem="single_phase")


def _check_transversal(F: LevelSetField, t: float, body: ConvexBody, margin: float = TRANSVERSALITY_MARGIN):
    segs = interface_segments(F, t, body)
    if segs.shape[0] == 0:
        return
    ends = segs.reshape(-1, body.dim)
    A, b = body.halfspaces
    norms = np.linalg.norm(A, axis=1)
    gap = np.abs(ends @ A.T + b) / norms
    on_edge = gap <= 1e-9
    hit = np.any(on_edge, axis=1)
    if not np.any(hit):
        return
    n_sigma = normal_at(F, t, ends[hit])
    cosines = np.abs(n_sigma @ (A / norms[:, None]).T)
    worst = float(np.max(np.where(on_edge[hit], cosines, 0.0)))
    if worst > 1.0 - margin:
        raise TransversalityError(
            f"interface meets the body boundary tangentially (|cos| = {worst:.6f} > {1 - margin})")


def _interface_flux_jump(field: PhaseField, pp, pm, t, x):
    F = field.interface
    n = normal_at(F, t, x)
    V = normal_speed(F, t, x)
    up = np.einsum("ij,ij->i", field.v_plus(t, x), n) - V
    um = np.einsum("ij,ij->i", field.v_minus(t, x), n) - V
    return pp(t, x) * up - pm(t, x) * um


def rtt_two_phase_residual(field: PhaseField, psi, G0: ConvexBody, t0: float = 0.0, h_t: float = 1e-2,
                           N: int = 4000, dt: float = 1e-2, policy: BranchPolicy | None = None,
                           domain=None, scheme: str = "forward", nodes_per_length: int = 2048) -> RttReport:
    """Residual of the two-phase transport theorem.

    ``psi`` is one function used on both sides or a pair ``(psi_plus, psi_minus)``.
    The right side is split into the bulk integral over both phase parts of
    ``G0`` and the interface integral of the jump of the relative normal flux.
    """
    if G0.dim != 2:
        raise NotImplementedError("volume transport checks are implemented in 2-D")
    F = field.interface
    _check_transversal(F, t0, G0)
    pp, pm = _pair(psi)
    lhs = ddt_volume_integral((pp, pm), _domain(field, t0, G0, domain, N, dt, policy, 0), t0, h_t, scheme)
    integrands = (
        lambda t, x: _dt(pp, t, x) + _div_flux(pp, field.v_plus, t, x),
        lambda t, x: _dt(pm, t, x) + _div_flux(pm, field.v_minus, t, x),
    )
    bulk = _phase_integral(integrands, F, t0, G0)
    sq = SurfaceQuadrature.from_interface(F, t0, G0, nodes_per_length)
    interface = sq.integrate(_interface_flux_jump(field, pp, pm, t0, sq.nodes)) if len(sq) else 0.0
    return RttReport.build(lhs, {"bulk_plus": bulk[1], "bulk_minus": bulk[-1], "interface": interface},
                           h_t=h_t, scheme=scheme, particles=N, interface_length=sq.total_weight,
                           theorem="two_phase")


def _density_pair(field: PhaseField):
    return (lambda t, x: field.density(1, t, x) * np.ones(np.shape(x)[:-1]),
            lambda t, x: field.density(-1, t, x) * np.ones(np.shape(x)[:-1]))


def rtt_mass_weighted_residual(field: PhaseField, phi, G0: ConvexBody, t0: float = 0.0, h_t: float = 1e-2,
                               N: int = 4000, dt: float = 1e-2, policy: BranchPolicy | None = None,
                               domain=None, scheme: str = "forward", nodes_per_length: int = 2048,
                               mass_tol: float = 1e-9, continuity_tol: float = 1e-6) -> RttReport:
    """Residual of the mass-weighted transport identity.

    The right side is the bulk integral of density times the material
    derivative plus the interface integral of the mass flux times the jump of
    ``phi``.  The scenario must conserve mass in the bulk and across the
    interface; otherwise InconsistentScenarioError is raised.
    """
    if G0.dim != 2:
        raise NotImplementedError("volume transport checks are implemented in 2-D")
    F = field.interface
    _check_transversal(F, t0, G0)
    fp, fm = _pair(phi)
    rp, rm = _density_pair(field)
    sq = SurfaceQuadrature.from_interface(F, t0, G0, nodes_per_length)
    if len(sq):
        mp, mm, jump = mass_transfer_rate(field, t0, sq.nodes)
        if np.max(np.abs(jump)) > mass_tol:
            raise InconsistentScenarioError(
                f"mass flux differs across the interface by {np.max(np.abs(jump)):.3e}")
    probe = sample_body(G0, 400)
    for s, rho, v in ((1, rp, field.v_plus), (-1, rm, field.v_minus)):
        pts = probe[s * F.value(t0, probe) > 0]
        if pts.shape[0]:
            cont = _dt(rho, t0, pts) + _div_flux(rho, v, t0, pts)
            if np.max(np.abs(cont)) > continuity_tol:
                raise InconsistentScenarioError(f"bulk mass balance violated by {np.max(np.abs(cont)):.3e}")
    weighted = (lambda t, x: rp(t, x) * fp(t, x), lambda t, x: rm(t, x) * fm(t, x))
    lhs = ddt_volume_integral(weighted, _domain(field, t0, G0, domain, N, dt, policy, 0), t0, h_t, scheme)

    def material(rho, f, v):
        return lambda t, x: rho(t, x) * (_dt(f, t, x) + np.einsum("...i,...i->...", v(t, x), _grad(f, t, x)))

    bulk = _phase_integral((material(rp, fp, field.v_plus), material(rm, fm, field.v_minus)), F, t0, G0)
    if len(sq):
        interface = sq.integrate(mp * (fp(t0, sq.nodes) - fm(t0, sq.nodes)))
    else:
        interface = 0.0
    return RttReport.build(lhs, {"bulk_plus": bulk[1], "bulk_minus": bulk[-1], "interface": interface},
                           h_t=h_t, scheme=scheme, particles=N, theorem="mass_weighted")


def translating_interface_field(speed: float = 1.0, dim: int = 2) -> PhaseField:
    """Planar interface ``x_d = speed * t`` carried by a uniform material velocity."""
    e = np.zeros(dim)
    e[-1] = 1.0
    F = LevelSetField(
        phi=lambda t, x: np.asarray(x)[..., -1] - speed * np.asarray(t),
        grad_phi=lambda t, x: np.broadcast_to(e, np.shape(x)).copy(),
        dphi_dt=lambda t, x: np.full(np.shape(x)[:-1], -float(speed)),
        dim=dim,
    )
    v = lambda t, x: np.broadcast_to(speed * e, np.shape(x)).copy()
    return PhaseField(v_plus=v, v_minus=v, interface=F, name="translating_plane")


def fixed_volume_residual(field: PhaseField, psi, V: ConvexBody, t0: float = 0.0, h_t: float = 1e-3,
                          nodes_per_length: int = 2048) -> RttReport:
    """Transport identity for a fixed control volume crossed by a moving interface.

    The time derivative of the integral over ``V`` equals the bulk integral of
    the time derivative minus the interface integral of the jump of ``psi``
    times the normal speed of the interface.
    """
    F = field.interface
    pp, pm = _pair(psi)

    def I(t):
        parts = _phase_integral((pp, pm), F, t, V)
        return parts[1] + parts[-1]

    lhs = (I(t0 + h_t) - I(t0 - h_t)) / (2.0 * h_t)
    bulk = _phase_integral((lambda t, x: _dt(pp, t, x), lambda t, x: _dt(pm, t, x)), F, t0, V)
    sq = SurfaceQuadrature.from_interface(F, t0, V, nodes_per_length)
    if len(sq):
        x = sq.nodes
        interface = -sq.integrate((pp(t0, x) - pm(t0, x)) * normal_speed(F, t0, x))
    else:
        interface = 0.0
    return RttReport.build(lhs, {"bulk_plus": bulk[1], "bulk_minus": bulk[-1], "interface": interface},
                           h_t=h_t, theorem="fixed_volume")


# ---------------------------------------------------------------------------
# surface transport


def _arc_rule(panels: int, order: int = 4):
    g, w = leggauss(order)
    edges = np.linspace(0.0, 1.0, panels + 1)
    mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * np.diff(edges)
    s = (mid[:, None] + half[:, None] * g[None, :]).ravel()
    ws = (half[:, None] * w[None, :]).ravel()
    return s, ws


def surface_transport_residual(F: LevelSetField, vS, phiS, A0: Callable, t0: float = 0.0, h_t: float = 1e-3,
                               panels: int = 64, dt: float = 1e-4, ds: float = 1e-6) -> RttReport:
    """Residual of the surface transport identity on an arc of the interface.

    ``A0`` maps a parameter in ``[0, 1]`` to points of the interface at
    ``t0``.  The arc is carried by the surface flow of ``vS``; arc length along
    the image is measured through the parameter derivative of the carried
    curve.
    """
    g = _scalar(phiS)
    s, ws = _arc_rule(panels)
    s_lo, s_hi = np.clip(s - ds, 0.0, 1.0), np.clip(s + ds, 0.0, 1.0)
    base = np.concatenate([A0(s), A0(s_lo), A0(s_hi)])
    m = s.size

    def carried(t):
        return base if t == t0 else surface_flow(F, vS, t0, base, t, dt=min(dt, abs(t - t0)))

    def integral(t):
        y = carried(t)
        speed = np.linalg.norm(y[2 * m:] - y[m:2 * m], axis=1) / (s_hi - s_lo)
        return float(np.dot(ws, g(t, y[:m]) * speed)), y[:m]

    I_plus, y_plus = integral(t0 + h_t)
    I_minus, y_minus = integral(t0 - h_t)
    lhs = (I_plus - I_minus) / (2.0 * h_t)
    x0 = base[:m]
    speed0 = np.linalg.norm(base[2 * m:] - base[m:2 * m], axis=1) / (s_hi - s_lo)
    material = (g(t0 + h_t, y_plus) - g(t0 - h_t, y_minus)) / (2.0 * h_t)
    stretch = g(t0, x0) * surface_divergence(vS, F, t0, x0)
    rhs_material = float(np.dot(ws, material * speed0))
    rhs_stretch = float(np.dot(ws, stretch * speed0))
    return RttReport.build(lhs, {"material_derivative": rhs_material, "stretching": rhs_stretch},
                           h_t=h_t, panels=panels, theorem="surface")


# ---------------------------------------------------------------------------
# isochoric criterion


class IsochoricReport(NamedTuple):
    is_isochoric: bool
    div_max: float
    normal_jump_max: float
    mdot_jump_product_max: float


def isochoric_check(field: PhaseField, G0: ConvexBody, t0: float = 0.0, n_bulk: int = 1000,
                    tol: float = 1e-9, div_tol: float = 1e-6, nodes_per_length: int = 256) -> IsochoricReport:
    """Test bulk incompressibility and continuity of the relative normal velocity.

    The interface test is carried out in both equivalent forms, the jump of
    the relative normal velocity and the mass flux times the jump of the
    specific volume; they must agree for a mass-conserving scenario.
    """
    F = field.interface
    pts = sample_body(G0, n_bulk)
    ph = phase_of(field, t0, pts)
    div_max = 0.0
    for s in (1, -1):
        sel = pts[ph == s]
        if sel.shape[0]:
            G = velocity_gradient(field.side(s), t0, sel)
            div_max = max(div_max, float(np.max(np.abs(np.trace(G, axis1=-2, axis2=-1)))))
    jump = prod = 0.0
    if G0.dim == 2 and _crosses(F, t0, G0):
        sq = SurfaceQuadrature.from_interface(F, t0, G0, nodes_per_length)
        if len(sq):
            x = sq.nodes
            n = normal_at(F, t0, x)
            vj = np.einsum("ij,ij->i", field.v_plus(t0, x) - field.v_minus(t0, x), n)
            mp, _, _ = mass_transfer_rate(field, t0, x)
            vol_jump = 1.0 / field.density(1, t0, x) - 1.0 / field.density(-1, t0, x)
            jump = float(np.max(np.abs(vj)))
            prod = float(np.max(np.abs(mp * vol_jump)))
            if (jump <= tol) != (prod <= tol):
                raise InconsistentScenarioError(
                    f"interface volume criteria disagree: normal jump {jump:.3e}, mass-flux form {prod:.3e}")
    return IsochoricReport(bool(div_max <= div_tol and jump <= tol), div_max, jump, prod)
