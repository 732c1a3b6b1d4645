"""Moving interfaces described as the zero set of a level-set function.

Every function accepts a single point of shape ``(n,)`` or a stack of points
of shape ``(..., n)`` and broadcasts over the leading axes.  The sign
convention is ``Omega_plus = {phi > 0}``; normals point into it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    DegenerateLevelSetError,
    InconsistentSurfaceVelocityError,
    NoOneSidedLimitError,
    ProjectionError,
)

__all__ = [
    "LevelSetField",
    "InterfaceSample",
    "TOL_SURFACE",
    "BAND_WIDTH",
    "GRAD_FLOOR",
    "fd_step",
    "normal_at",
    "normal_speed",
    "intrinsic_velocity",
    "total_curvature",
    "surface_divergence",
    "project_to_interface",
    "surface_flow",
    "surface_jacobian",
    "jump_bracket",
    "interface_sample",
    "tangential_projector",
    "velocity_gradient",
    "interface_segments",
]

TOL_SURFACE = 1e-9
BAND_WIDTH = 0.1
GRAD_FLOOR = 1e-8
CONSISTENCY_TOL = 1e-6
CONSISTENCY_EVERY = 10

ScalarField = Callable[[float, np.ndarray], np.ndarray]
VectorField = Callable[[float, np.ndarray], np.ndarray]


def fd_step(x: np.ndarray, base: float = 1e-5) -> np.ndarray:
    """Finite-difference step ``base * (1 + |x|)`` with a trailing unit axis."""
    return base * (1.0 + np.linalg.norm(x, axis=-1, keepdims=True))


@dataclass(frozen=True, eq=False)
class LevelSetField:
    """Scalar field ``phi(t, x)`` whose zero set is the interface at time ``t``.

    ``grad_phi`` and ``dphi_dt`` are optional analytic derivatives; central
    differences are used when they are absent.
    """

    phi: ScalarField
    grad_phi: VectorField | None = None
    dphi_dt: ScalarField | None = None
    dim: int = 2
    band_width: float = BAND_WIDTH
    tol_surface: float = TOL_SURFACE
    grad_floor: float = GRAD_FLOOR

    def value(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.phi(t, x), dtype=float), x.shape[:-1])

    def gradient(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.grad_phi is not None:
            return np.broadcast_to(np.asarray(self.grad_phi(t, x), dtype=float), x.shape).copy()
        h = fd_step(x)
        out = np.empty(x.shape)
        for k in range(x.shape[-1]):
            e = np.zeros(x.shape[-1])
            e[k] = 1.0
            out[..., k] = (self.value(t, x + h * e) - self.value(t, x - h * e)) / (2.0 * h[..., 0])
        return out

    def time_derivative(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.dphi_dt is not None:
            return np.broadcast_to(np.asarray(self.dphi_dt(t, x), dtype=float), x.shape[:-1]).copy()
        ht = 1e-5 * (1.0 + abs(t))
        return (self.value(t + ht, x) - self.value(t - ht, x)) / (2.0 * ht)

    def negated(self) -> "LevelSetField":
        """Same interface with the two sides swapped."""
        g = self.grad_phi
        d = self.dphi_dt
        return LevelSetField(
            phi=lambda t, x: -self.value(t, x),
            grad_phi=None if g is None else (lambda t, x: -self.gradient(t, x)),
            dphi_dt=None if d is None else (lambda t, x: -self.time_derivative(t, x)),
            dim=self.dim, band_width=self.band_width, tol_surface=self.tol_surface,
            grad_floor=self.grad_floor,
        )


@dataclass(frozen=True)
class InterfaceSample:
    """A point on the interface together with its unit normal and normal speed."""

    t: float
    x: np.ndarray
    n_sigma: np.ndarray
    v_n: float


def _checked_gradient(F: LevelSetField, t: float, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    g = F.gradient(t, x)
    norm = np.linalg.norm(g, axis=-1)
    if np.any(norm < F.grad_floor):
        raise DegenerateLevelSetError(f"|grad phi| below {F.grad_floor} at t={t}")
    return g, norm


def normal_at(F: LevelSetField, t: float, x) -> np.ndarray:
    """Unit normal ``grad phi / |grad phi|`` pointing into ``{phi > 0}``."""
    x = np.asarray(x, dtype=float)
    g, norm = _checked_gradient(F, t, x)
    return g / norm[..., None]


def normal_speed(F: LevelSetField, t: float, x) -> np.ndarray:
    """Speed of normal displacement ``-d_t phi / |grad phi|``."""
    x = np.asarray(x, dtype=float)
    _, norm = _checked_gradient(F, t, x)
    return -F.time_derivative(t, x) / norm


def intrinsic_velocity(F: LevelSetField, t: float, x) -> np.ndarray:
    """Normal velocity ``V n`` of the interface."""
    x = np.asarray(x, dtype=float)
    g, norm = _checked_gradient(F, t, x)
    speed = -F.time_derivative(t, x) / norm
    return (speed / norm)[..., None] * g


def interface_sample(F: LevelSetField, t: float, x) -> InterfaceSample:
    x = np.asarray(x, dtype=float)
    return InterfaceSample(t=t, x=x, n_sigma=normal_at(F, t, x), v_n=float(normal_speed(F, t, x)))


def tangential_projector(n: np.ndarray) -> np.ndarray:
    """``I - n n^T`` for each unit normal in ``n`` (shape (..., n, n))."""
    d = n.shape[-1]
    return np.eye(d) - n[..., :, None] * n[..., None, :]


def velocity_gradient(v: VectorField, t: float, x, base: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian ``G[..., i, j] = d v_i / d x_j``."""
    x = np.asarray(x, dtype=float)
    h = fd_step(x, base)
    d = x.shape[-1]
    cols = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        vp = np.asarray(v(t, x + h * e), dtype=float)
        vm = np.asarray(v(t, x - h * e), dtype=float)
        cols.append((vp - vm) / (2.0 * h))
    return np.stack(cols, axis=-1)


def surface_divergence(vfield: VectorField, F: LevelSetField, t: float, x, base: float = 1e-5) -> np.ndarray:
    """Tangential divergence ``trace(P grad v P)`` with ``P = I - n n^T``."""
    x = np.asarray(x, dtype=float)
    P = tangential_projector(normal_at(F, t, x))
    G = velocity_gradient(vfield, t, x, base)
    return np.einsum("...ij,...jk,...ki->...", P, G, P)


def total_curvature(F: LevelSetField, t: float, x) -> np.ndarray:
    """Sum of principal curvatures as the tangential divergence of ``-n``.

    The normal itself comes from a gradient, so the outer difference uses a
    larger step than the inner one to keep round-off under control.
    """

    def minus_normal(tt, y):
        return -normal_at(F, tt, y)

    return surface_divergence(minus_normal, F, t, x, base=1e-4)


def project_to_interface(F: LevelSetField, t: float, x, max_iter: int = 50) -> np.ndarray:
    """Move points onto the zero set along the gradient with a damped Newton step.

    Iteration stops once ``|phi| <= tol_surface * 1e-3`` or no further progress
    is possible; a final ``|phi| > tol_surface`` raises ProjectionError.
    """
    x = np.array(x, dtype=float)
    shape = x.shape
    x = x.reshape(-1, shape[-1])
    target = F.tol_surface * 1e-3
    val = F.value(t, x).copy()
    for _ in range(max_iter):
        pending = np.abs(val) > target
        if not np.any(pending):
            break
        xs = x[pending]
        vs = val[pending]
        g, norm = _checked_gradient(F, t, xs)
        step = (vs / norm**2)[..., None] * g
        lam = np.ones(vs.shape)
        new = xs - step
        new_val = F.value(t, new)
        for _ in range(30):
            worse = np.abs(new_val) > np.abs(vs)
            if not np.any(worse):
                break
            lam = np.where(worse, 0.5 * lam, lam)
            new = xs - lam[..., None] * step
            new_val = F.value(t, new)
        stalled = np.abs(new_val) >= np.abs(vs)
        x[pending] = new
        val[pending] = new_val
        if np.all(stalled):
            break
    if np.any(np.abs(val) > F.tol_surface):
        raise ProjectionError(f"projection did not reach |phi| <= {F.tol_surface} (max {np.abs(val).max():.3e})")
    return x.reshape(shape)


def _check_consistency(F: LevelSetField, vS: VectorField, t: float, x: np.ndarray) -> None:
    n = normal_at(F, t, x)
    mismatch = np.abs(np.einsum("...i,...i->...", np.asarray(vS(t, x), dtype=float), n) - normal_speed(F, t, x))
    if np.any(mismatch > CONSISTENCY_TOL):
        raise InconsistentSurfaceVelocityError(
            f"v.n differs from the interface normal speed by {mismatch.max():.3e} at t={t}"
        )


def _rk4(f, t, y, h):
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _time_grid(t0: float, t1: float, dt: float) -> np.ndarray:
    m = max(1, int(np.ceil(abs(t1 - t0) / dt - 1e-9))) if t1 != t0 else 0
    return np.linspace(t0, t1, m + 1)


def surface_flow(F: LevelSetField, vS: VectorField, t0: float, x0, t1: float, dt: float = 1e-3,
                 return_path: bool = False):
    """Follow the surface velocity ``vS`` from ``(t0, x0)`` to time ``t1``.

    Each classical Runge-Kutta step is followed by a projection onto the
    interface at the new time.  Consistency of ``vS`` with the interface
    motion is verified at the start and every few steps.
    """
    x = np.array(x0, dtype=float)
    if np.any(np.abs(F.value(t0, x)) > F.tol_surface):
        raise ProjectionError("surface flow must start on the interface")
    grid = _time_grid(t0, t1, dt)
    path = [x.copy()]
    if grid.size:
        _check_consistency(F, vS, t0, x)
    f = lambda t, y: np.asarray(vS(t, y), dtype=float)
    for k in range(1, grid.size):
        x = _rk4(f, grid[k - 1], x, grid[k] - grid[k - 1])
        x = project_to_interface(F, grid[k], x)
        if k % CONSISTENCY_EVERY == 0:
            _check_consistency(F, vS, grid[k], x)
        if return_path:
            path.append(x.copy())
    if return_path:
        return (grid if grid.size else np.array([t0])), np.stack(path)
    return x


def surface_jacobian(F: LevelSetField, vS: VectorField, t0: float, x0, t1: float, dt: float = 1e-3) -> np.ndarray:
    """Area stretch of the surface flow: ``exp`` of the integrated surface divergence.

    Position and log-stretch are advanced together by the same Runge-Kutta
    step so both are fourth-order accurate.
    """
    x = np.array(x0, dtype=float)
    if np.any(np.abs(F.value(t0, x)) > F.tol_surface):
        raise ProjectionError("surface flow must start on the interface")
    log_j = np.zeros(x.shape[:-1])
    grid = _time_grid(t0, t1, dt)
    if grid.size:
        _check_consistency(F, vS, t0, x)

    def rhs(t, state):
        y, _ = state
        return np.asarray(vS(t, y), dtype=float), surface_divergence(vS, F, t, y)

    for k in range(1, grid.size):
        t, h = grid[k - 1], grid[k] - grid[k - 1]
        a1, b1 = rhs(t, (x, log_j))
        a2, b2 = rhs(t + h / 2, (x + h / 2 * a1, None))
        a3, b3 = rhs(t + h / 2, (x + h / 2 * a2, None))
        a4, b4 = rhs(t + h, (x + h * a3, None))
        x = x + h / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
        log_j = log_j + h / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
        x = project_to_interface(F, grid[k], x)
        if k % CONSISTENCY_EVERY == 0:
            _check_consistency(F, vS, grid[k], x)
    return np.exp(log_j)


def jump_bracket(field: Callable[[float, np.ndarray], np.ndarray], F: LevelSetField, t: float, x,
                 h0: float = 1e-3, tol: float = 1e-6):
    """One-sided difference ``psi(x + h n) - psi(x - h n)`` extrapolated to ``h -> 0``.

    Two Richardson levels over ``h0, h0/2, h0/4`` are formed; when the two
    first-level estimates disagree by more than ``tol`` (relative to the
    value) the limit is declared not to exist.
    """
    x = np.asarray(x, dtype=float)
    n = normal_at(F, t, x)

    def diff(h):
        return np.asarray(field(t, x + h * n), dtype=float) - np.asarray(field(t, x - h * n), dtype=float)

    d1, d2, d3 = diff(h0), diff(h0 / 2), diff(h0 / 4)
    r1 = 2 * d2 - d1
    r2 = 2 * d3 - d2
    spread = np.max(np.abs(r2 - r1))
    if spread > tol * (1.0 + np.max(np.abs(r2))):
        raise NoOneSidedLimitError(f"one-sided extrapolation spread {spread:.3e} exceeds tolerance")
    return (4 * r2 - r1) / 3


def _clip_segments(p: np.ndarray, q: np.ndarray, A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Clip segments ``[p, q]`` to the polygon ``A x + b <= 0`` (Cyrus-Beck)."""
    d = q - p
    num = p @ A.T + b
    den = d @ A.T
    lo = np.zeros(p.shape[0])
    hi = np.ones(p.shape[0])
    keep = np.ones(p.shape[0], dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        s = -num / den
    keep &= ~np.any((den == 0) & (num > 0), axis=1)
    lo = np.maximum(lo, np.max(np.where(den < 0, s, -np.inf), axis=1))
    hi = np.minimum(hi, np.min(np.where(den > 0, s, np.inf), axis=1))
    keep &= hi > lo
    return p[keep] + lo[keep, None] * d[keep], p[keep] + hi[keep, None] * d[keep]


def interface_segments(F: LevelSetField, t: float, body, cell: float = 1.0 / 512) -> np.ndarray:
    """Piecewise-linear trace of the 2-D interface inside a convex polygon.

    Marching squares on a grid of width ``cell`` followed by exact clipping
    against the polygon.  The trace is exact when ``phi`` is affine.
    Returns an array of shape (m, 2, 2) of segment endpoints.
    """
    if F.dim != 2:
        raise NotImplementedError("interface tracing is implemented for planar interfaces in 2-D only")
    v = body.vertices
    lo = v.min(axis=0) - cell
    n_cells = np.ceil((v.max(axis=0) + cell - lo) / cell).astype(int)
    xs = lo[0] + cell * np.arange(n_cells[0] + 1)
    ys = lo[1] + cell * np.arange(n_cells[1] + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    val = F.value(t, np.stack([X, Y], axis=-1))
    pos = val > 0
    p00, p10, p11, p01 = pos[:-1, :-1], pos[1:, :-1], pos[1:, 1:], pos[:-1, 1:]
    has = np.stack([p00 != p10, p10 != p11, p01 != p11, p00 != p01], axis=-1)
    count = has.sum(axis=-1)
    # only cells cut by the zero set are processed further
    ii, jj = np.nonzero(count > 0)
    has, count = has[ii, jj], count[ii, jj]
    c00, c10, c11, c01 = val[ii, jj], val[ii + 1, jj], val[ii + 1, jj + 1], val[ii, jj + 1]
    q00 = pos[ii, jj]
    x0, x1 = xs[ii], xs[ii + 1]
    y0, y1 = ys[jj], ys[jj + 1]

    def cross(va, vb):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.clip(va / (va - vb), 0.0, 1.0)

    # crossing points on bottom, right, top, left edges
    sb = cross(c00, c10)
    sr = cross(c10, c11)
    st = cross(c01, c11)
    sl = cross(c00, c01)
    pts = np.stack([
        np.stack([x0 + sb * (x1 - x0), y0], -1),
        np.stack([x1, y0 + sr * (y1 - y0)], -1),
        np.stack([x0 + st * (x1 - x0), y1], -1),
        np.stack([x0, y0 + sl * (y1 - y0)], -1),
    ], axis=1)
    segs = []
    two = count == 2
    if np.any(two):
        h2 = has[two]
        order = np.argsort(~h2, axis=1, kind="stable")[:, :2]
        cand = pts[two]
        rows = np.arange(cand.shape[0])
        segs.append(np.stack([cand[rows, order[:, 0]], cand[rows, order[:, 1]]], axis=1))
    four = count == 4
    if np.any(four):
        cand = pts[four]
        centre = 0.25 * (c00 + c10 + c11 + c01)[four] > 0
        same = centre == q00[four]
        # centre shares the sign of corner 00: corner 00 joins the centre, so cut off corners 10 and 01
        first = np.where(same[:, None, None], cand[:, [0, 1]], cand[:, [0, 3]])
        second = np.where(same[:, None, None], cand[:, [2, 3]], cand[:, [2, 1]])
        segs.append(first)
        segs.append(second)
    if not segs:
        return np.zeros((0, 2, 2))
    allseg = np.concatenate(segs)
    A, b = body.halfspaces
    p, q = _clip_segments(allseg[:, 0], allseg[:, 1], A, b)
    length = np.linalg.norm(q - p, axis=1)
    keep = length > 1e-14
    return np.stack([p[keep], q[keep]], axis=1)
