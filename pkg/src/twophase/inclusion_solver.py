"""Trajectories, reachable sets and co-moving sets of two-phase flows.

Particles are advanced in batches.  Inside a phase each particle follows the
one-sided field of that phase with the classical four-stage Runge-Kutta
method.  A sign change of the level set inside a step is located by
bisection; the contact is then classified.  A transversal contact continues
in the other phase.  Any other contact branches: the particle may dwell on
the interface for a while and is released into every phase it can enter,
at a grid of release times.

Fields must accept a time argument that is either a float or an array
broadcasting against the leading axes of the point array.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geometry import ConvexBody, PointCloud, body_measure, convex_hull, hausdorff_distance
from .moving_interface import interface_segments, project_to_interface
from .twophase_field import PhaseField, interface_velocity, phase_of

__all__ = [
    "CrossingEvent",
    "Trajectory",
    "BranchPolicy",
    "ReachableCloud",
    "ComovingSet",
    "FlowmapReport",
    "integrate",
    "reachable_set",
    "comoving_volume",
    "sample_body",
    "flowmap_property_check",
    "constant_inclusion_reachable",
    "BranchTruncationWarning",
]

TRANSVERSAL = "transversal_crossing"
TOUCH = "tangential_touch"
RELEASE = "dwell_release"


class BranchTruncationWarning(UserWarning):
    """More branches were requested than the per-sample cap allows."""


@dataclass(frozen=True)
class CrossingEvent:
    t_event: float
    x_event: np.ndarray
    kind: str
    relative_normal_speed_in: float
    relative_normal_speed_out: float


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One strong solution: sample times, sample points and the contact events on the way.

    Samples are ordered in the direction of integration, so ``end`` is the
    state at the requested final time also for backward runs.
    """

    times: np.ndarray
    points: np.ndarray
    events: tuple[CrossingEvent, ...]
    branch_id: int
    selection_tag: str

    @property
    def samples(self) -> list[tuple[float, np.ndarray]]:
        return list(zip(self.times.tolist(), self.points))

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]


@dataclass(frozen=True)
class BranchPolicy:
    """Sampling rule for non-unique continuations at the interface.

    ``dwell_grid`` release times are spread evenly between the contact time
    and the final time.  ``selection_grid > 1`` adds dwell motions along fixed
    convex combinations of the one-sided fields, which is only admissible
    where such a combination is tangent to the moving interface.
    """

    dwell_grid: int = 32
    selection_grid: int = 1
    max_branches: int = 4096
    touch_tol: float = 1e-8
    tol_event: float = 1e-10
    max_events: int = 10_000

    def __post_init__(self):
        if self.dwell_grid < 1 or self.selection_grid < 1 or self.max_branches < 1:
            raise ValueError("branch policy grids and cap must be at least 1")


@dataclass(frozen=True, eq=False)
class ReachableCloud:
    """Endpoints at time ``t`` of all integrated branches, with their lineage."""

    t: float
    points: PointCloud
    provenance: tuple[str, ...]
    roots: np.ndarray
    branch_ids: np.ndarray
    warnings: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.points)

    def from_root(self, root: int) -> np.ndarray:
        return self.points.points[self.roots == root]


@dataclass(frozen=True, eq=False)
class ComovingSet(ReachableCloud):
    """Reachable cloud of a body, split into the closures of its two phase parts."""

    phase: np.ndarray = field(default=None)
    plus_points: np.ndarray = field(default=None)
    minus_points: np.ndarray = field(default=None)
    initial_samples: np.ndarray = field(default=None)
    history: tuple = field(default=())
    class_points: dict = field(default_factory=dict)

    def hull(self, sign: int) -> ConvexBody | None:
        """Convex hull of the closure of one phase part (used for drawing)."""
        return _hull_or_none(self.plus_points if sign > 0 else self.minus_points)

    def class_hulls(self) -> list[tuple[str, int, ConvexBody]]:
        """Hulls of the points grouped by the sequence of phases they visited.

        Within one group the flow is a single smooth map, so its image stays
        (close to) convex even when the phase part as a whole is not, as
        happens when slip shears crossing material against resident material.
        """
        out = []
        for key in sorted(self.class_points):
            h = _hull_or_none(self.class_points[key])
            if h is not None:
                out.append((key, 1 if key[-1] == "+" else -1, h))
        return out

    def measure(self) -> float:
        return float(sum(body_measure(h) for _, _, h in self.class_hulls()))

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(x.shape[0], dtype=bool)
        for _, _, h in self.class_hulls():
            out |= h.contains(x, tol=1e-12)
        return out


def _hull_or_none(pts) -> ConvexBody | None:
    if pts is None or pts.shape[0] < pts.shape[1] + 1:
        return None
    body = convex_hull(pts)
    return None if body.lower_dimensional else body


# ---------------------------------------------------------------------------
# batched engine


@dataclass
class _Seg:
    parent: int
    cut: int | None
    root: int
    kind: str
    side: int
    tag: str
    event: CrossingEvent | None
    t_end: float = np.nan
    x_end: np.ndarray | None = None
    times: list | None = None
    points: list | None = None
    leaf: bool = False


def _rk4_batch(f, t, y, h):
    hh = h[:, None]
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * hh * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * hh * k2)
    k4 = f(t + h, y + hh * k3)
    return y + (hh / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class _Engine:
    def __init__(self, field: PhaseField, t1: float, dt: float, policy: BranchPolicy, record: bool):
        self.f = field
        self.F = field.interface
        self.t1 = float(t1)
        self.dt = float(dt)
        self.pol = policy
        self.record = record
        self.segs: list[_Seg] = []
        self.branches: dict[int, int] = {}
        self.events: dict[int, int] = {}
        self.warnings: list[str] = []
        self.classify_q: list[tuple] = []
        self.bulk_q: list[tuple[int, float, np.ndarray]] = []
        self.dwell_q: list[tuple] = []

    # -- field helpers -------------------------------------------------
    def _vel(self, sides: np.ndarray):
        vp, vm = self.f.v_plus, self.f.v_minus

        def f(t, y):
            out = np.empty_like(y)
            t = np.broadcast_to(np.asarray(t, dtype=float), y.shape[:1])
            p = sides > 0
            if np.any(p):
                out[p] = vp(t[p], y[p])
            if not np.all(p):
                out[~p] = vm(t[~p], y[~p])
            return out

        return f

    def _rel_speeds(self, t, x):
        return _relative_speeds(self.f, t, x)

    def _new_seg(self, **kw) -> int:
        self.segs.append(_Seg(**kw))
        return len(self.segs) - 1

    # -- public entry ----------------------------------------------------
    def run(self, t0: np.ndarray, x0: np.ndarray, roots: np.ndarray):
        ph = phase_of(self.f, t0, x0)
        for i in range(x0.shape[0]):
            if ph[i] == 0:
                self.classify_q.append((t0[i], x0[i], int(roots[i]), -1, None, 0))
            else:
                sid = self._new_seg(parent=-1, cut=None, root=int(roots[i]), kind="bulk", side=int(ph[i]),
                                    tag="+" if ph[i] > 0 else "-", event=None)
                self.bulk_q.append((sid, float(t0[i]), x0[i].copy()))
        while self.classify_q or self.bulk_q or self.dwell_q:
            if self.classify_q:
                q, self.classify_q = self.classify_q, []
                self._classify(q)
            if self.dwell_q:
                q, self.dwell_q = self.dwell_q, []
                self._dwell(q)
            if self.bulk_q:
                q, self.bulk_q = self.bulk_q, []
                self._bulk(q)
        return self

    # -- classification at the interface ----------------------------------
    def _classify(self, items):
        t = np.array([it[0] for it in items], dtype=float)
        x = np.array([it[1] for it in items], dtype=float)
        up, um, _, _ = self._rel_speeds(t, x)
        tt = self.pol.touch_tol
        for k, (tk, xk, root, parent, cut, s_in) in enumerate(items):
            if tk >= self.t1 - self.pol.tol_event:
                self._leaf_point(root, parent, cut, tk, xk, s_in)
                continue
            u = {1: up[k], -1: um[k]}
            if s_in != 0:
                u_in, u_out = u[s_in], u[-s_in]
                crossing = abs(u_in) > tt and np.sign(u_in) == -s_in and (-s_in) * u_out > tt
                if crossing:
                    ev = CrossingEvent(float(tk), xk.copy(), TRANSVERSAL, float(u_in), float(u_out))
                    self._start_bulk(root, parent, cut, -s_in, tk, xk, ev)
                    continue
                ev = CrossingEvent(float(tk), xk.copy(), TOUCH, float(u_in), float(u_out))
            else:
                if up[k] > tt and um[k] > tt:
                    self._start_bulk(root, parent, cut, 1, tk, xk, None)
                    continue
                if up[k] < -tt and um[k] < -tt:
                    self._start_bulk(root, parent, cut, -1, tk, xk, None)
                    continue
                ev = CrossingEvent(float(tk), xk.copy(), TOUCH, 0.0, 0.0)
            self._count_event(root)
            self.dwell_q.append((tk, xk, root, parent, cut, ev))

    def _count_event(self, root):
        self.events[root] = self.events.get(root, 0) + 1

    def _start_bulk(self, root, parent, cut, side, t, x, ev):
        if ev is not None:
            self._count_event(root)
            if self.events[root] > self.pol.max_events:
                self.warnings.append(f"sample {root}: event limit reached at t={t:.6g}; branch stopped")
                self._leaf_point(root, parent, cut, t, x, side)
                return
        tag = ("x" if ev is not None and ev.kind == TRANSVERSAL else "") + ("+" if side > 0 else "-")
        sid = self._new_seg(parent=parent, cut=cut, root=root, kind="bulk", side=side, tag=tag, event=ev)
        self.bulk_q.append((sid, float(t), np.asarray(x, dtype=float).copy()))

    def _leaf_point(self, root, parent, cut, t, x, side):
        sid = self._new_seg(parent=parent, cut=cut, root=root, kind="bulk", side=int(side), tag="|", event=None,
                            t_end=float(t), x_end=np.asarray(x, dtype=float).copy(), leaf=True)
        if self.record:
            self.segs[sid].times = [float(t)]
            self.segs[sid].points = [np.asarray(x, dtype=float).copy()]

    # -- bulk propagation ------------------------------------------------
    def _bulk(self, items):
        sids = np.array([it[0] for it in items])
        T0 = np.array([it[1] for it in items], dtype=float)
        X = np.array([it[2] for it in items], dtype=float)
        S = np.array([self.segs[s].side for s in sids])
        M = len(items)
        span = self.t1 - T0
        m = np.where(span > 0, np.maximum(1, np.ceil(span / self.dt - 1e-9)).astype(int), 0)
        h = np.where(m > 0, span / np.maximum(m, 1), 0.0)
        T = T0.copy()
        running = m > 0
        if self.record:
            hist_t = [[T0[i]] for i in range(M)]
            hist_x = [[X[i].copy()] for i in range(M)]
        events = []  # (i, t_a, x_a, h, kind)
        F = self.F
        tol = F.tol_surface
        for k in range(int(m.max()) if M else 0):
            idx = np.nonzero(running & (k < m))[0]
            if idx.size == 0:
                break
            f = self._vel(S[idx])
            xa, ta, hi = X[idx], T[idx], h[idx]
            xn = _rk4_batch(f, ta, xa, hi)
            tn = np.where(k + 1 == m[idx], self.t1, T0[idx] + (k + 1) * hi)
            hi = tn - ta
            ga = S[idx] * F.value(ta, xa)
            gn = S[idx] * F.value(tn, xn)
            exit_ = gn < -tol
            graze = np.zeros(idx.size, dtype=bool)
            near = ~exit_ & (ga > tol) & (gn < F.band_width)
            if np.any(near):
                graze[near] = self._graze_candidates(S[idx][near], ta[near], xa[near], tn[near], xn[near])
            for j in np.nonzero(exit_)[0]:
                events.append((idx[j], ta[j], xa[j].copy(), hi[j], "exit"))
            for j in np.nonzero(graze)[0]:
                events.append((idx[j], ta[j], xa[j].copy(), hi[j], "graze"))
            stop = exit_ | graze
            ok = idx[~stop]
            X[ok] = xn[~stop]
            T[ok] = tn[~stop]
            running[idx[stop]] = False
            if self.record:
                for j, i in enumerate(idx):
                    if not stop[j]:
                        hist_t[i].append(tn[j])
                        hist_x[i].append(xn[j].copy())
        ev_points = self._refine(events, S) if events else {}
        for i in range(M):
            seg = self.segs[sids[i]]
            if self.record:
                seg.times = hist_t[i]
                seg.points = hist_x[i]
            if i in ev_points:
                te, xe, mode = ev_points[i]
                seg.t_end, seg.x_end = te, xe
                if self.record:
                    seg.times = seg.times + [te]
                    seg.points = seg.points + [xe.copy()]
                self.classify_q.append((te, xe, seg.root, int(sids[i]), None, int(S[i])))
            else:
                seg.t_end, seg.x_end, seg.leaf = float(T[i]), X[i].copy(), True

    def _graze_candidates(self, S, ta, xa, tn, xn):
        """Detect a touch from inside a phase: the signed level set reaches a minimum near zero."""
        F = self.F
        f = self._vel(S)
        da = S * (F.time_derivative(ta, xa) + np.einsum("ij,ij->i", F.gradient(ta, xa), f(ta, xa)))
        dn = S * (F.time_derivative(tn, xn) + np.einsum("ij,ij->i", F.gradient(tn, xn), f(tn, xn)))
        gn = S * F.value(tn, xn)
        scale = np.linalg.norm(F.gradient(tn, xn), axis=-1)
        at_end = (np.abs(gn) <= F.tol_surface) & (np.abs(dn) <= self.pol.touch_tol * scale)
        inside = (da < 0) & (dn > 0)
        if not np.any(inside):
            return at_end
        h = tn - ta
        lo = np.zeros(S.size)
        hi = np.ones(S.size)
        sel = np.nonzero(inside)[0]
        for _ in range(60):
            mid = 0.5 * (lo[sel] + hi[sel])
            hm = mid * h[sel]
            xm = _rk4_batch(self._vel(S[sel]), ta[sel], xa[sel], hm)
            tm = ta[sel] + hm
            dm = S[sel] * (F.time_derivative(tm, xm) + np.einsum("ij,ij->i", F.gradient(tm, xm),
                                                                 self._vel(S[sel])(tm, xm)))
            neg = dm < 0
            lo[sel] = np.where(neg, mid, lo[sel])
            hi[sel] = np.where(neg, hi[sel], mid)
            if np.all((hi[sel] - lo[sel]) * h[sel] < self.pol.tol_event):
                break
        hm = hi[sel] * h[sel]
        xm = _rk4_batch(self._vel(S[sel]), ta[sel], xa[sel], hm)
        gmin = S[sel] * F.value(ta[sel] + hm, xm)
        hit = at_end.copy()
        hit[sel] |= np.abs(gmin) <= F.tol_surface
        return hit

    def _refine(self, events, S_all):
        """Locate contact times by bisection on the fraction of the step."""
        F = self.F
        idx = np.array([e[0] for e in events])
        ta = np.array([e[1] for e in events], dtype=float)
        xa = np.array([e[2] for e in events], dtype=float)
        h = np.array([e[3] for e in events], dtype=float)
        graze = np.array([e[4] == "graze" for e in events])
        S = S_all[idx]
        f = self._vel(S)
        lo = np.zeros(idx.size)
        hi = np.ones(idx.size)

        def sign_fn(theta):
            hm = theta * h
            xm = _rk4_batch(f, ta, xa, hm)
            tm = ta + hm
            g = S * F.value(tm, xm)
            dg = S * (F.time_derivative(tm, xm) + np.einsum("ij,ij->i", F.gradient(tm, xm), f(tm, xm)))
            # exits bracket the sign change of the level set; grazes bracket its minimum
            return np.where(graze, dg < 0, g >= 0)

        for _ in range(80):
            if np.all((hi - lo) * h <= self.pol.tol_event):
                break
            mid = 0.5 * (lo + hi)
            before = sign_fn(mid)
            lo = np.where(before, mid, lo)
            hi = np.where(before, hi, mid)
        hm = hi * h
        xe = _rk4_batch(f, ta, xa, hm)
        te = ta + hm
        out = {}
        for j in range(idx.size):
            xp = project_to_interface(F, te[j], xe[j])
            out[int(idx[j])] = (float(te[j]), xp, "graze" if graze[j] else "exit")
        return out

    # -- dwelling and release ----------------------------------------------
    def _dwell_velocity(self, mode, lam):
        f = self.f
        if mode == "closure":
            return lambda t, y: interface_velocity(f, t, y)
        if mode == "sliding":
            def w(t, y):
                up, um, _, _ = self._rel_speeds(t, y)
                with np.errstate(divide="ignore", invalid="ignore"):
                    lamb = np.clip(np.where(um != up, um / (um - up), 0.5), 0.0, 1.0)
                return lamb[:, None] * f.v_plus(t, y) + (1 - lamb[:, None]) * f.v_minus(t, y)
            return w
        return lambda t, y: lam * f.v_plus(t, y) + (1 - lam) * f.v_minus(t, y)

    def _dwell_valid(self, t, y, w):
        """A dwell motion must be tangent to the moving interface and a hull selection."""
        f = self.f
        up, um, n, V = self._rel_speeds(t, y)
        vp, vm = f.v_plus(t, y), f.v_minus(t, y)
        tol = self.pol.touch_tol
        normal_ok = np.abs(np.einsum("ij,ij->i", w, n) - V) <= tol * (1 + np.abs(V))
        ab = vp - vm
        den = np.einsum("ij,ij->i", ab, ab)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.clip(np.where(den > 0, np.einsum("ij,ij->i", w - vm, ab) / den, 0.0), 0.0, 1.0)
        dist = np.linalg.norm(w - (vm + s[:, None] * ab), axis=1)
        hull_ok = dist <= tol * (1 + np.linalg.norm(vp, axis=1) + np.linalg.norm(vm, axis=1))
        return normal_ok & hull_ok

    def _dwell(self, items):
        pol = self.pol
        K = pol.dwell_grid
        up, um, _, _ = self._rel_speeds(np.array([it[0] for it in items], dtype=float),
                                        np.array([it[1] for it in items], dtype=float))
        jobs = []  # (item index, mode, lam)
        for k in range(len(items)):
            jobs.append((k, "closure", 0.0))
            if up[k] * um[k] < 0:
                jobs.append((k, "sliding", 0.0))
            if pol.selection_grid > 1:
                for lam in np.linspace(0.0, 1.0, pol.selection_grid):
                    jobs.append((k, "fixed", float(lam)))
        groups: dict[tuple, list[int]] = {}
        for j, (k, mode, lam) in enumerate(jobs):
            groups.setdefault((mode, lam), []).append(j)
        for (mode, lam), js in groups.items():
            self._dwell_group([jobs[j][0] for j in js], items, mode, lam, K)

    def _dwell_group(self, ks, items, mode, lam, K):
        F = self.F
        t_star = np.array([items[k][0] for k in ks], dtype=float)
        Y = np.array([items[k][1] for k in ks], dtype=float)
        n_sub = max(1, int(np.ceil((self.t1 - t_star.min()) / (K * self.dt) - 1e-9)))
        H = (self.t1 - t_star) / (K * n_sub)
        w = self._dwell_velocity(mode, lam)
        valid = self._dwell_valid(t_star, Y, w(t_star, Y))
        alive_until = np.where(valid, 0, -1)  # last valid release index
        grid_pts = [Y.copy()]
        samples_t = [[t_star[i]] for i in range(len(ks))] if self.record else None
        samples_x = [[Y[i].copy()] for i in range(len(ks))] if self.record else None
        T = t_star.copy()
        alive = valid.copy()
        for j in range(1, K + 1):
            for _ in range(n_sub):
                a = np.nonzero(alive)[0]
                if a.size == 0:
                    break
                Yn = _rk4_batch(lambda tt, yy: w(tt, yy), T[a], Y[a], H[a])
                Tn = T[a] + H[a]
                try:
                    Yn = project_to_interface(F, Tn, Yn)
                except Exception:
                    alive[a] = False
                    break
                Y[a] = Yn
                T[a] = Tn
                if self.record:
                    for q, i in enumerate(a):
                        samples_t[i].append(Tn[q])
                        samples_x[i].append(Yn[q].copy())
            T = np.where(alive, t_star + j * (self.t1 - t_star) / K, T)
            a = np.nonzero(alive)[0]
            if a.size:
                ok = self._dwell_valid(T[a], Y[a], w(T[a], Y[a]))
                alive[a[~ok]] = False
                alive_until[a[ok]] = j
            grid_pts.append(Y.copy())
        grid = np.stack(grid_pts)  # (K+1, m, n)
        for q, k in enumerate(ks):
            tk, xk, root, parent, cut, ev = items[k]
            last = alive_until[q]
            if last < 0:
                if mode == "closure":
                    # no admissible dwell: release immediately into admissible phases
                    self._releases(root, parent, cut, ev, [(float(tk), xk)], mode, lam, dwell_sid=None)
                continue
            tag = f"dwell[{mode}{'' if mode != 'fixed' else f'={lam:.4g}'}]"
            sid = self._new_seg(parent=parent, cut=cut, root=root, kind="dwell", side=0, tag=tag, event=ev)
            seg = self.segs[sid]
            taus = [float(tk + j * (self.t1 - tk) / K) for j in range(last + 1)]
            pts = [grid[j, q].copy() for j in range(last + 1)]
            if self.record:
                keep = n_sub * last + 1
                seg.times = samples_t[q][:keep]
                seg.points = samples_x[q][:keep]
            seg.t_end, seg.x_end = taus[-1], pts[-1]
            if last == K:
                seg.leaf = True
                rel = list(zip(taus[:-1], pts[:-1]))
            else:
                rel = list(zip(taus, pts))
            self._releases(root, sid, None, None, rel, mode, lam, dwell_sid=sid, sub=n_sub)

    def _admissible(self, t, y, side):
        """Whether leaving the interface into ``side`` is possible at ``(t, y)``."""
        F = self.F
        up, um, _, _ = self._rel_speeds(t, y)
        u = up if side > 0 else um
        tt = self.pol.touch_tol
        res = side * u > tt
        unsure = np.abs(u) <= tt
        if np.any(unsure):
            i = np.nonzero(unsure)[0]
            hp = np.minimum(self.dt, np.maximum(self.t1 - t[i], 0.0)) * 0.5
            hp = np.where(hp > 0, hp, 1e-6)
            yp = _rk4_batch(self._vel(np.full(i.size, side)), t[i], y[i], hp)
            res[i] = side * F.value(t[i] + hp, yp) >= -F.tol_surface
        return res, u

    def _releases(self, root, parent, cut, ev, rel, mode, lam, dwell_sid, sub=1):
        if not rel:
            return
        t = np.array([r[0] for r in rel], dtype=float)
        y = np.array([r[1] for r in rel], dtype=float)
        opts = []
        for side in (1, -1):
            ok, u = self._admissible(t, y, side)
            for j in np.nonzero(ok)[0]:
                opts.append((j, side, float(u[j])))
        opts.sort(key=lambda o: (o[0], -o[1]))
        used = self.branches.get(root, 0)
        room = self.pol.max_branches - used
        if len(opts) > room:
            self.warnings.append(
                f"sample {root}: {len(opts)} releases requested, {max(room, 0)} allowed; release grid thinned")
            keep = np.unique(np.linspace(0, len(opts) - 1, max(room, 0)).round().astype(int)) if room > 0 else []
            opts = [opts[i] for i in keep]
        self.branches[root] = used + len(opts)
        for j, side, u in opts:
            rev = CrossingEvent(float(t[j]), y[j].copy(), RELEASE, 0.0, u)
            c = None if dwell_sid is None else j * sub + 1
            par = parent if dwell_sid is None else dwell_sid
            cc = cut if dwell_sid is None else c
            if dwell_sid is None and ev is not None:
                # immediate release straight from the contact
                rev = CrossingEvent(ev.t_event, ev.x_event, ev.kind, ev.relative_normal_speed_in, u)
            sid = self._new_seg(parent=par, cut=cc, root=root, kind="bulk", side=side,
                                tag=f"release{'+' if side > 0 else '-'}@{t[j]:.6g}", event=rev)
            self.bulk_q.append((sid, float(t[j]), y[j].copy()))

    # -- output ------------------------------------------------------------
    def leaves(self):
        return [i for i, s in enumerate(self.segs) if s.leaf]

    def history(self, leaf: int) -> str:
        """Sequence of phases visited in the bulk, e.g. ``"-+"`` for one upward crossing."""
        out = ""
        for sid in self.lineage(leaf):
            seg = self.segs[sid]
            if seg.kind != "bulk" or seg.side == 0 or (seg.tag == "|" and out):
                continue
            c = "+" if seg.side > 0 else "-"
            if not out or out[-1] != c:
                out += c
        return out

    def lineage(self, sid: int) -> list[int]:
        chain = []
        while sid >= 0:
            chain.append(sid)
            sid = self.segs[sid].parent
        return chain[::-1]

    def trajectory(self, leaf: int, branch_id: int, t_map=None) -> Trajectory:
        chain = self.lineage(leaf)
        times: list[float] = []
        pts: list[np.ndarray] = []
        events = []
        for pos, sid in enumerate(chain):
            seg = self.segs[sid]
            if seg.event is not None:
                events.append(seg.event)
            ts, xs = seg.times, seg.points
            if pos + 1 < len(chain):
                cut = self.segs[chain[pos + 1]].cut
                if cut is not None:
                    ts, xs = ts[:cut], xs[:cut]
            for tv, xv in zip(ts, xs):
                if times and tv <= times[-1] + 1e-15:
                    continue
                times.append(float(tv))
                pts.append(np.asarray(xv))
        tag = "/".join(self.segs[s].tag for s in chain)
        times_arr = np.array(times)
        pts_arr = np.array(pts)
        if t_map is not None:
            times_arr = t_map(times_arr)
            events = [CrossingEvent(float(t_map(np.array(e.t_event))), e.x_event, e.kind,
                                    -e.relative_normal_speed_in, -e.relative_normal_speed_out) for e in events]
        return Trajectory(times_arr, pts_arr, tuple(events), branch_id, tag)


def _prepare(field: PhaseField, t0: float, t1: float):
    """Return the field to integrate forward in time and the map back to physical time."""
    if t1 >= t0:
        return field, t0, t1, None
    rev = field.time_reversed(t0)
    return rev, 0.0, t0 - t1, (lambda s: t0 - s)


def integrate(field: PhaseField, t0: float, x0, t1: float, dt: float = 1e-2,
              policy: BranchPolicy | None = None) -> list[Trajectory]:
    """All sampled strong solutions from ``(t0, x0)`` up to ``t1`` (which may precede ``t0``)."""
    policy = policy or BranchPolicy()
    x0 = np.asarray(x0, dtype=float)
    if t1 == t0:
        return [Trajectory(np.array([t0]), x0[None].copy(), (), 0, "identity")]
    fw, s0, s1, t_map = _prepare(field, t0, t1)
    eng = _Engine(fw, s1, dt, policy, record=True).run(np.array([s0]), x0[None], np.array([0]))
    for w in eng.warnings:
        warnings.warn(w, BranchTruncationWarning, stacklevel=2)
    return [eng.trajectory(leaf, b, t_map) for b, leaf in enumerate(eng.leaves())]


def _propagate(field, t0, X0, t1, dt, policy):
    fw, s0, s1, _ = _prepare(field, t0, t1)
    X0 = np.asarray(X0, dtype=float)
    eng = _Engine(fw, s1, dt, policy, record=False)
    eng.run(np.full(X0.shape[0], s0), X0, np.arange(X0.shape[0]))
    leaves = eng.leaves()
    pts = np.array([eng.segs[i].x_end for i in leaves]).reshape(-1, X0.shape[1])
    roots = np.array([eng.segs[i].root for i in leaves], dtype=int)
    prov = tuple(f"{eng.segs[i].root}:" + "/".join(eng.segs[s].tag for s in eng.lineage(i)) for i in leaves)
    order = np.argsort(roots, kind="stable")
    branch = np.zeros(len(leaves), dtype=int)
    if len(leaves):
        starts = np.r_[0, np.nonzero(np.diff(roots[order]))[0] + 1]
        counts = np.diff(np.r_[starts, len(leaves)])
        branch[order] = np.arange(len(leaves)) - np.repeat(starts, counts)
    hist = tuple(eng.history(i) for i in leaves)
    for w in eng.warnings:
        warnings.warn(w, BranchTruncationWarning, stacklevel=3)
    return pts, roots, branch, prov, tuple(eng.warnings), hist


# ---------------------------------------------------------------------------
# initial sampling


def sample_body(body: ConvexBody, n: int, field: PhaseField | None = None, t0: float = 0.0,
                fractions=(0.7, 0.2, 0.1), seed: int = 0) -> np.ndarray:
    """Stratified sample: interior grid, boundary grid and a grid on the interface inside the body.

    The grids are deterministic; ``seed`` only drives the face sampling of
    3-D boundaries.
    """
    n_int = int(round(fractions[0] * n))
    n_bd = int(round(fractions[1] * n))
    n_sig = max(0, n - n_int - n_bd)
    rng = np.random.default_rng(seed)
    parts = []
    sig_pts = np.zeros((0, body.dim))
    if field is not None and n_sig > 0 and body.dim == 2 and _has_interface(field, t0, body):
        segs = interface_segments(field.interface, t0, body)
        if segs.shape[0]:
            lengths = np.linalg.norm(segs[:, 1] - segs[:, 0], axis=1)
            cum = np.concatenate([[0.0], np.cumsum(lengths)])
            s = np.linspace(0.0, cum[-1], n_sig)
            k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(lengths) - 1)
            frac = np.clip((s - cum[k]) / lengths[k], 0.0, 1.0)
            sig_pts = segs[k, 0] + frac[:, None] * (segs[k, 1] - segs[k, 0])
            sig_pts = project_to_interface(field.interface, t0, sig_pts)
    if sig_pts.shape[0] == 0:
        n_int += n_sig
    lo, hi = body.vertices.min(axis=0), body.vertices.max(axis=0)
    vol = body_measure(body)
    spacing = (vol / max(n_int, 1)) ** (1.0 / body.dim)
    axes = [np.arange(lo[k] + 0.5 * spacing, hi[k], spacing) for k in range(body.dim)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, body.dim)
    A, b = body.halfspaces
    interior = grid[np.all(grid @ A.T + b < -1e-12, axis=1)]
    parts.append(interior)
    parts.append(body.boundary_samples(n_bd, rng=rng))
    parts.append(sig_pts)
    return np.concatenate(parts)


def _has_interface(field: PhaseField, t0: float, body: ConvexBody) -> bool:
    probe = np.concatenate([body.vertices, body.boundary_samples(64)])
    vals = field.interface.value(t0, probe)
    return bool(np.any(vals > 0) and np.any(vals < 0)) or bool(np.any(np.abs(vals) <= field.interface.tol_surface))


# ---------------------------------------------------------------------------
# reachable and co-moving sets


def reachable_set(field: PhaseField, t0: float, X0, t1: float, dt: float = 1e-2, N: int = 2000,
                  policy: BranchPolicy | None = None, seed: int = 0) -> ReachableCloud:
    """Endpoints at ``t1`` of all sampled strong solutions starting in ``X0``.

    ``X0`` is a point array, a PointCloud or a ConvexBody (sampled with ``N``
    stratified points).
    """
    policy = policy or BranchPolicy()
    if isinstance(X0, ConvexBody):
        X = sample_body(X0, N, field, t0, seed=seed)
    elif isinstance(X0, PointCloud):
        X = X0.points
    else:
        X = np.atleast_2d(np.asarray(X0, dtype=float))
    if t1 == t0:
        n = X.shape[0]
        return ReachableCloud(t1, PointCloud(X.copy(), t1), tuple(f"{i}:identity" for i in range(n)),
                              np.arange(n), np.zeros(n, dtype=int))
    pts, roots, branch, prov, warns, _ = _propagate(field, t0, X, t1, dt, policy)
    return ReachableCloud(t1, PointCloud(pts, t1), prov, roots, branch, warns)


def comoving_volume(field: PhaseField, t0: float, G0: ConvexBody, t: float, N: int = 4000,
                    dt: float = 1e-2, policy: BranchPolicy | None = None, seed: int = 0) -> ComovingSet:
    """Co-moving set of a convex body, grouped into phase-history classes with their closures.

    A class collects the endpoints that visited the same sequence of phases.
    A finite sample misses parts of the closure of a class, which are added
    back in two ways:

    * images of samples that started on the interface belong to the closure
      of the classes arriving from either side;
    * the interface part of the closure is built directly: a point of the
      interface at time ``t`` belongs to it when its backward trajectory under
      the one-sided field of the preceding phase stays in that phase and ends
      in ``G0``.  Transitions are located by bisection along the interface.
    """
    policy = policy or BranchPolicy()
    X0 = sample_body(G0, N, field, t0, seed=seed)
    ph0 = phase_of(field, t0, X0)
    if t == t0:
        pts, roots, branch = X0.copy(), np.arange(X0.shape[0]), np.zeros(X0.shape[0], dtype=int)
        prov, warns = tuple(f"{i}:identity" for i in range(X0.shape[0])), ()
        hist = tuple({1: "+", -1: "-"}.get(int(p), "") for p in ph0)
    else:
        pts, roots, branch, prov, warns, hist = _propagate(field, t0, X0, t, dt, policy)
    ph = phase_of(field, t, pts)
    on_sigma_root = ph0[roots] == 0
    members: dict[str, list[int]] = {}
    for i, h in enumerate(hist):
        if not h or ph[i] != (1 if h[-1] == "+" else -1):
            continue
        members.setdefault(h, []).append(i)
        if on_sigma_root[i]:
            members.setdefault(("-" if h[0] == "+" else "+") + h, []).append(i)
    classes = {}
    for key in sorted(members):
        own = pts[np.array(members[key])]
        parts = [own]
        if G0.dim == 2 and len(key) <= 2:
            parts.append(_interface_closure(field, t0, G0, t, key, own, dt))
        classes[key] = np.concatenate(parts)
    plus = [v for k, v in classes.items() if k[-1] == "+"]
    minus = [v for k, v in classes.items() if k[-1] == "-"]
    d = G0.dim
    return ComovingSet(t=t, points=PointCloud(pts, t), provenance=prov, roots=roots, branch_ids=branch,
                       warnings=warns, phase=ph,
                       plus_points=np.concatenate(plus) if plus else np.zeros((0, d)),
                       minus_points=np.concatenate(minus) if minus else np.zeros((0, d)),
                       initial_samples=X0, history=tuple(hist), class_points=classes)


def _interface_closure(field: PhaseField, t0: float, G0: ConvexBody, t: float, key: str, own: np.ndarray,
                       dt: float, cell: float = 1.0 / 512) -> np.ndarray:
    """Interface points at time ``t`` in the closure of one history class."""
    F = field.interface
    lo, hi = own.min(axis=0), own.max(axis=0)
    pad = 0.05 * float(np.max(hi - lo)) + 4 * cell
    box = ConvexBody.box(lo - pad, hi + pad)
    segs = interface_segments(F, t, box, cell=cell)
    if segs.shape[0] == 0:
        return np.zeros((0, 2))
    side = 1 if key[0] == "+" else -1

    def accepted(x):
        return _backward_lands(field, side, t, x, t0, G0, dt)

    a = project_to_interface(F, t, segs[:, 0])
    b = project_to_interface(F, t, segs[:, 1])
    ok_a, ok_b = accepted(a), accepted(b)
    out = [a[ok_a], b[ok_b]]
    flip = np.nonzero(ok_a != ok_b)[0]
    if flip.size:
        good = np.where(ok_a[flip, None], a[flip], b[flip])
        bad = np.where(ok_a[flip, None], b[flip], a[flip])
        for _ in range(40):
            mid = project_to_interface(F, t, 0.5 * (good + bad))
            m_ok = accepted(mid)
            good = np.where(m_ok[:, None], mid, good)
            bad = np.where(m_ok[:, None], bad, mid)
        out.append(good)
    return np.concatenate(out)


def _backward_lands(field: PhaseField, side: int, t: float, x: np.ndarray, t0: float, G0: ConvexBody,
                    dt: float) -> np.ndarray:
    """Whether the one-sided backward trajectory from ``(t, x)`` stays in ``side`` and ends in ``G0``."""
    F = field.interface
    v = field.side(side)
    y = np.array(x, dtype=float)
    ok = np.ones(y.shape[0], dtype=bool)
    span = t - t0
    if span != 0:
        m = max(1, int(np.ceil(abs(span) / dt - 1e-9)))
        h = -span / m
        tc = float(t)
        f = lambda tt, yy: v(tt, yy)
        for k in range(m):
            y = _rk4_batch(f, np.full(y.shape[0], tc), y, np.full(y.shape[0], h))
            tc = t - (k + 1) * span / m
            ok &= side * F.value(tc, y) >= -F.tol_surface
    return ok & G0.contains(y, tol=1e-9)


def _relative_speeds(field: PhaseField, t: float, x: np.ndarray):
    F = field.interface
    g = F.gradient(t, x)
    gn = np.linalg.norm(g, axis=-1)
    n = g / gn[..., None]
    V = -F.time_derivative(t, x) / gn
    up = np.einsum("ij,ij->i", field.v_plus(t, x), n) - V
    um = np.einsum("ij,ij->i", field.v_minus(t, x), n) - V
    return up, um, n, V


def _max_relative_speed(field: PhaseField, t: float, x: np.ndarray) -> float:
    if x.shape[0] == 0:
        return 0.0
    up, um, _, _ = _relative_speeds(field, t, x)
    return float(max(np.max(np.abs(up)), np.max(np.abs(um))))


def _perimeter(body: ConvexBody) -> float:
    v = body.vertices
    if body.dim == 2:
        return float(np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1).sum())
    return float(np.sqrt(body_measure(body)) * 6.0)


# ---------------------------------------------------------------------------
# flow-map laws


@dataclass(frozen=True)
class FlowmapReport:
    identity: bool
    nonempty_bounded: bool
    semigroup_distance: float
    reversibility_distance: float
    lipschitz_ratio: float
    speed_bound: float
    usc_distance: float | None
    tol: float
    margin: float

    @property
    def semigroup_ok(self) -> bool:
        return self.semigroup_distance <= self.tol

    @property
    def reversibility_ok(self) -> bool:
        return self.reversibility_distance <= self.tol

    @property
    def lipschitz_ok(self) -> bool:
        return self.lipschitz_ratio <= self.speed_bound + self.margin

    @property
    def passed(self) -> bool:
        return (self.identity and self.nonempty_bounded and self.semigroup_ok and self.reversibility_ok
                and self.lipschitz_ok)


def _cloud(field, t0, X, t1, dt, policy):
    return reachable_set(field, t0, np.atleast_2d(X), t1, dt=dt, policy=policy).points.points


def flowmap_property_check(field: PhaseField, t_list, x_samples, dt: float = 1e-2,
                           policy: BranchPolicy | None = None, tol: float = 2e-3, margin: float = 0.1,
                           usc_sequence=None, reverse_policy: BranchPolicy | None = None) -> FlowmapReport:
    """Check identity, semigroup, reversibility and time continuity of the multivalued flow map.

    ``t_list = (s, tau, t)`` with ``s <= tau <= t``.  Distances are maxima
    over ``x_samples``.  ``usc_sequence`` optionally gives points converging
    to the first sample for a graph-closedness spot check.

    Reversibility is a membership test, so the backward sets only need to
    contain some branch returning to ``x``.  They are computed with
    ``reverse_policy`` (one release time by default), which yields a subset of
    the backward set: the reported distance can only be larger.
    """
    policy = policy or BranchPolicy()
    reverse_policy = reverse_policy or BranchPolicy(dwell_grid=1, selection_grid=1,
                                                    max_branches=policy.max_branches,
                                                    touch_tol=policy.touch_tol, tol_event=policy.tol_event)
    s, tau, t = (float(v) for v in t_list)
    X = np.atleast_2d(np.asarray(x_samples, dtype=float))
    identity = True
    bounded = True
    semi = rev = 0.0
    ratio = 0.0
    speed = 0.0
    for x in X:
        same = _cloud(field, s, x, s, dt, policy)
        identity &= bool(same.shape[0] == 1 and np.array_equal(same[0], x))
        direct = _cloud(field, s, x, t, dt, policy)
        bounded &= bool(direct.shape[0] > 0 and np.all(np.isfinite(direct)))
        mid = _cloud(field, s, x, tau, dt, policy)
        composed = _cloud(field, tau, mid, t, dt, policy)
        semi = max(semi, hausdorff_distance(direct, composed))
        back = _cloud(field, t, direct, s, dt, reverse_policy)
        rev = max(rev, float(np.min(np.linalg.norm(back - x, axis=1))))
        if t > tau:
            ratio = max(ratio, hausdorff_distance(direct, mid) / (t - tau))
        allpts = np.concatenate([direct, mid, x[None]])
        lo, hi = allpts.min(axis=0) - 1e-9, allpts.max(axis=0) + 1e-9
        speed = max(speed, _sup_speed(field, (lo, hi), np.linspace(s, t, 5)))
    usc = None
    if usc_sequence is not None:
        target = _cloud(field, s, X[0], t, dt, policy)
        seq = np.atleast_2d(np.asarray(usc_sequence, dtype=float))
        far = _cloud(field, s, seq[-1], t, dt, policy)
        usc = float(np.max(np.min(np.linalg.norm(far[:, None, :] - target[None], axis=2), axis=1)))
    return FlowmapReport(identity, bounded, semi, rev, ratio, speed, usc, tol, margin)


def _sup_speed(field: PhaseField, box, times, samples: int = 21) -> float:
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    axes = [np.linspace(lo[k], hi[k], samples) for k in range(lo.size)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lo.size)
    best = 0.0
    for t in times:
        for v in (field.v_plus, field.v_minus):
            best = max(best, float(np.max(np.linalg.norm(v(t, pts), axis=-1))))
    return best


def constant_inclusion_reachable(generators, x0, t0: float, t1: float, n_per_axis: int = 41) -> np.ndarray:
    """Reachable points of ``x' in conv(generators)`` (time-independent): ``x0 + |t1 - t0| conv``.

    The convex hull is sampled by a grid of convex weights.
    """
    g = np.atleast_2d(np.asarray(generators, dtype=float))
    if g.shape[0] == 1:
        return np.asarray(x0, dtype=float)[None] + abs(t1 - t0) * g
    hull = convex_hull(g)
    lo, hi = g.min(axis=0), g.max(axis=0)
    axes = [np.linspace(lo[k], hi[k], n_per_axis) for k in range(g.shape[1])]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, g.shape[1])
    inside = grid[hull.contains(grid, tol=1e-12)] if not hull.lower_dimensional else g
    pts = np.concatenate([inside, hull.vertices])
    sign = 1.0 if t1 >= t0 else -1.0
    return np.asarray(x0, dtype=float)[None] + sign * abs(t1 - t0) * pts


def unit_ball_generators(dim: int = 2, n: int = 256) -> np.ndarray:
    """Vertices of a fine polygon (2-D) approximating the unit ball."""
    if dim != 2:
        raise NotImplementedError("only the planar unit ball is provided")
    th = 2 * np.pi * np.arange(n) / n
    return np.column_stack([np.cos(th), np.sin(th)])


CallableField = Callable[[float, np.ndarray], np.ndarray]
