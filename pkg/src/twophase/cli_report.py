"""Command-line driver: run scenarios, write point clouds, reports and figures.

Commands::

    twophase run --scenario case_a --t0 0 --t1 0.5 --snap 0,0.25,0.5
    twophase run --scenario case_d --g0 "-1,0,0,0.5" --snap 0,0.25,0.5
    twophase run --suite acceptance
    twophase validate --config run.json
    twophase list-scenarios

Configuration files are flat JSON objects; scenario parameters use dotted
keys such as ``"field.alpha_plus"``.  Every flag mirrors a key.  Exit codes:
0 success, 1 configuration error, 2 numerical failure (or a failed
acceptance criterion).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import TwoPhaseError
from .geometry import ConvexBody, body_measure
from .inclusion_solver import BranchPolicy, ComovingSet, comoving_volume
from .transport_verify import MovingDomain, _crosses, isochoric_check, rtt_single_residual, rtt_two_phase_residual
from .twophase_field import SCENARIOS, scenario

__all__ = ["RunConfig", "validate", "run", "main", "load_config", "render_svg", "write_cloud_csv"]

log = logging.getLogger("twophase")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2
OUTPUT_KINDS = ("csv", "json", "svg")
FIELD_KEYS = ("alpha_plus", "alpha_minus", "eta_plus", "eta_minus", "rho_plus", "rho_minus", "M", "r0", "speed")


@dataclass
class RunConfig:
    scenario: str = "case_a"
    overrides: dict = field(default_factory=dict)
    t0: float = 0.0
    t1: float = 0.5
    dt: float = 1e-2
    h: float = 0.01
    h_t: float = 1e-2
    particles: int = 2000
    seed: int = 0
    snap: list = field(default_factory=list)
    g0: list = field(default_factory=lambda: [-1.0, -1.0, 1.0, 1.0])
    dwell_grid: int = 32
    outputs: list = field(default_factory=lambda: list(OUTPUT_KINDS))
    out_dir: str = ""
    suite: str = ""
    only: list = field(default_factory=list)

    def snapshots(self) -> list[float]:
        return sorted(set(float(s) for s in self.snap)) if self.snap else [self.t0, self.t1]

    def body(self) -> ConvexBody:
        x0, y0, x1, y1 = (float(v) for v in self.g0)
        return ConvexBody.box((x0, y0), (x1, y1))


# ---------------------------------------------------------------------------
# configuration


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def load_config(raw: dict) -> tuple[RunConfig, list[str]]:
    """Build a RunConfig from a flat dict; unknown or malformed keys become diagnostics."""
    cfg = RunConfig()
    diags: list[str] = []
    names = {f.name for f in fields(RunConfig)}
    for key, value in raw.items():
        if value is None:
            continue
        if key.startswith("field."):
            name = key.split(".", 1)[1]
            if name not in FIELD_KEYS:
                diags.append(f"unknown field parameter {name!r}")
                continue
            try:
                cfg.overrides[name] = float(value)
            except (TypeError, ValueError):
                diags.append(f"field parameter {name!r} must be a number, got {value!r}")
            continue
        key = key.replace("-", "_")
        if key not in names or key == "overrides":
            diags.append(f"unknown configuration key {key!r}")
            continue
        try:
            if key in ("t0", "t1", "dt", "h", "h_t"):
                value = float(value)
            elif key in ("particles", "seed", "dwell_grid"):
                if float(value) != int(float(value)):
                    raise ValueError
                value = int(float(value))
            elif key in ("snap", "g0"):
                value = _floats(value)
            elif key == "only":
                value = [int(v) for v in _floats(value)]
            elif key == "outputs":
                value = [v.strip() for v in (value if isinstance(value, list) else str(value).split(",")) if v.strip()]
            else:
                value = str(value)
        except (TypeError, ValueError):
            diags.append(f"{key} has an invalid value {value!r}")
            continue
        setattr(cfg, key, value)
    return cfg, diags


def validate(cfg: RunConfig) -> list[str]:
    """Schema and range checks; an empty list means the configuration is usable."""
    d: list[str] = []
    if cfg.suite:
        if cfg.suite != "acceptance":
            d.append(f"unknown suite {cfg.suite!r} (known: acceptance)")
        from .acceptance import CRITERIA

        bad = [k for k in cfg.only if k not in CRITERIA]
        if bad:
            d.append(f"unknown acceptance criteria {bad}")
        return d
    if cfg.scenario not in SCENARIOS:
        d.append(f"unknown scenario {cfg.scenario!r} (known: {', '.join(sorted(SCENARIOS))})")
    if not cfg.t1 > cfg.t0:
        d.append(f"t1 must exceed t0 (got t0={cfg.t0}, t1={cfg.t1})")
    for name in ("dt", "h", "h_t"):
        if not getattr(cfg, name) > 0:
            d.append(f"{name} must be positive (got {getattr(cfg, name)})")
    if cfg.particles < 1:
        d.append(f"particles must be at least 1 (got {cfg.particles})")
    if cfg.dwell_grid < 1:
        d.append(f"dwell_grid must be at least 1 (got {cfg.dwell_grid})")
    if len(cfg.g0) != 4 or not (cfg.g0[2] > cfg.g0[0] and cfg.g0[3] > cfg.g0[1]):
        d.append(f"g0 must be 'xmin,ymin,xmax,ymax' with positive extent (got {cfg.g0})")
    bad_snap = [s for s in cfg.snap if not cfg.t0 <= s <= cfg.t1]
    if bad_snap:
        d.append(f"snapshot times outside [t0, t1]: {bad_snap}")
    bad_out = [o for o in cfg.outputs if o not in OUTPUT_KINDS]
    if bad_out:
        d.append(f"unknown outputs {bad_out} (known: {', '.join(OUTPUT_KINDS)})")
    return d


# ---------------------------------------------------------------------------
# writers


def _num(x: float) -> str:
    return repr(float(x))


def _fmt9(x: float) -> str:
    return f"{float(x):.9g}"


def _time_tag(t: float) -> str:
    return f"{t:.6g}".replace("-", "m")


def write_cloud_csv(path: Path, cs: ComovingSet) -> None:
    pts = cs.points.points
    order = np.lexsort((cs.branch_ids, cs.roots))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = ["t", "branch_id"] + [f"x{k + 1}" for k in range(pts.shape[1])] + ["phase", "on_interface",
                                                                                   "root", "lineage"]
        w.writerow(head)
        for i in order:
            lineage = cs.provenance[i].split(":", 1)[1]
            w.writerow([_num(cs.t), int(cs.branch_ids[i])] + [_num(v) for v in pts[i]]
                       + [int(cs.phase[i]), int(cs.phase[i] == 0), int(cs.roots[i]), lineage])


def render_svg(snaps: list[ComovingSet], title: str, curves=(), clouds=()) -> str:
    """SVG of co-moving set snapshots: one polyline per history-class hull, circles on the interface.

    ``curves`` are reference polylines (drawn dashed) and ``clouds`` are
    extra point arrays drawn as markers.  Coordinates carry 9 significant digits.
    """
    parts = [c.points.points for c in snaps] + [np.asarray(c, dtype=float) for c in curves]
    parts += [np.asarray(c, dtype=float) for c in clouds]
    boxes = np.concatenate(parts)
    lo, hi = boxes.min(axis=0), boxes.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    lo, hi = lo - 0.08 * span, hi + 0.08 * span
    W = 640.0
    H = W * (hi[1] - lo[1]) / (hi[0] - lo[0])
    sx = lambda x: (x - lo[0]) / (hi[0] - lo[0]) * W + 50
    sy = lambda y: H - (y - lo[1]) / (hi[1] - lo[1]) * H + 30
    colors = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt9(W + 100)}" height="{_fmt9(H + 80)}">',
           f'<text x="50" y="18" font-size="14">{title}</text>']
    # axes with end labels
    out.append(f'<line x1="50" y1="{_fmt9(H + 30)}" x2="{_fmt9(W + 50)}" y2="{_fmt9(H + 30)}" stroke="black"/>')
    out.append(f'<line x1="50" y1="30" x2="50" y2="{_fmt9(H + 30)}" stroke="black"/>')
    out.append(f'<text x="50" y="{_fmt9(H + 48)}" font-size="11">x1={_fmt9(lo[0])}</text>')
    out.append(f'<text x="{_fmt9(W)}" y="{_fmt9(H + 48)}" font-size="11">x1={_fmt9(hi[0])}</text>')
    out.append(f'<text x="2" y="{_fmt9(H + 26)}" font-size="11">x2={_fmt9(lo[1])}</text>')
    out.append(f'<text x="2" y="40" font-size="11">x2={_fmt9(hi[1])}</text>')

    def polyline(v, style):
        pts = " ".join(f"{_fmt9(sx(a))},{_fmt9(sy(b))}" for a, b in v)
        return f'<polyline fill="none" {style} points="{pts}">'

    def markers(pts, col):
        pts = np.unique(np.round(pts, 3), axis=0)
        return [f'<circle cx="{_fmt9(sx(a))}" cy="{_fmt9(sy(b))}" r="1.5" fill="{col}"/>' for a, b in pts]

    for k, cs in enumerate(snaps):
        col = colors[k % len(colors)]
        for key, _, hull in cs.class_hulls():
            v = np.vstack([hull.vertices, hull.vertices[:1]])
            out.append(polyline(v, f'stroke="{col}" stroke-width="1.5"')
                       + f"<title>t={_fmt9(cs.t)} history {key}</title></polyline>")
        on = cs.points.points[cs.phase == 0]
        if on.shape[0]:
            out.extend(markers(on, col))
        out.append(f'<text x="{_fmt9(W - 60)}" y="{_fmt9(48 + 14 * k)}" font-size="11" fill="{col}">'
                   f't={_fmt9(cs.t)}</text>')
    for c in curves:
        out.append(polyline(np.asarray(c, dtype=float), 'stroke="black" stroke-dasharray="4 3"') + "</polyline>")
    for c in clouds:
        out.extend(markers(np.asarray(c, dtype=float), "#444444"))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _json_dump(path: Path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


# ---------------------------------------------------------------------------
# commands


def _out_dir(cfg: RunConfig) -> Path:
    d = Path(cfg.out_dir or os.environ.get("TWOPHASE_OUT_DIR", "") or "twophase_out")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _run_suite(cfg: RunConfig, out: Path) -> int:
    from .acceptance import run_suite

    results = run_suite(cfg.only or None)
    for r in results:
        print(r.line())
    payload = {"suite": "acceptance",
               "criteria": [{k: v for k, v in r.to_dict().items() if k != "seconds"} for r in results],
               "all_passed": all(r.passed for r in results)}
    if "json" in cfg.outputs:
        _json_dump(out / "report.json", payload)
    return EXIT_OK if payload["all_passed"] else EXIT_NUMERIC


def _transport_reports(cfg: RunConfig, f, G0: ConvexBody) -> dict:
    reports = {}
    crosses = _crosses(f.interface, cfg.t0, G0)
    dom = MovingDomain(f, cfg.t0, G0, N=cfg.particles, dt=cfg.dt, policy=BranchPolicy(dwell_grid=cfg.dwell_grid),
                       seed=cfg.seed)
    try:
        if crosses:
            reports["two_phase_psi_1"] = rtt_two_phase_residual(f, 1.0, G0, cfg.t0, h_t=cfg.h_t, N=cfg.particles, domain=dom).to_dict()
        else:
            reports["single_phase_psi_1"] = rtt_single_residual(f, 1.0, G0, cfg.t0, h_t=cfg.h_t, N=cfg.particles, domain=dom).to_dict()
    except TwoPhaseError as exc:
        reports["transport_error"] = f"{type(exc).__name__}: {exc}"
    try:
        reports["isochoric"] = isochoric_check(f, G0, cfg.t0)._asdict()
    except TwoPhaseError as exc:
        reports["isochoric_error"] = f"{type(exc).__name__}: {exc}"
    return reports


def run(cfg: RunConfig) -> int:
    diags = validate(cfg)
    if diags:
        for d in diags:
            print(f"config error: {d}", file=sys.stderr)
        return EXIT_CONFIG
    out = _out_dir(cfg)
    if cfg.suite:
        return _run_suite(cfg, out)
    f = scenario(cfg.scenario, cfg.overrides)
    G0 = cfg.body()
    policy = BranchPolicy(dwell_grid=cfg.dwell_grid)
    snaps: list[ComovingSet] = []
    report: dict = {"config": asdict(cfg) | {"out_dir": ""}, "snapshots": [], "status": "ok"}
    try:
        for t in cfg.snapshots():
            cs = comoving_volume(f, cfg.t0, G0, t, N=cfg.particles, dt=cfg.dt, policy=policy, seed=cfg.seed)
            snaps.append(cs)
            if "csv" in cfg.outputs:
                write_cloud_csv(out / f"sets_{_time_tag(t)}.csv", cs)
            report["snapshots"].append({
                "t": t, "points": len(cs), "measure": cs.measure(),
                "classes": {k: {"phase": s, "measure": body_measure(h)} for k, s, h in cs.class_hulls()},
                "warnings": list(cs.warnings),
            })
        if "json" in cfg.outputs:
            report["transport"] = _transport_reports(cfg, f, G0)
    except TwoPhaseError as exc:
        report["status"] = f"numerical failure: {type(exc).__name__}: {exc}"
        if "json" in cfg.outputs:
            _json_dump(out / "report.json", report)
        print(report["status"], file=sys.stderr)
        return EXIT_NUMERIC
    if "json" in cfg.outputs:
        _json_dump(out / "report.json", report)
    if "svg" in cfg.outputs and snaps:
        (out / f"figure_{cfg.scenario}.svg").write_text(render_svg(snaps, f"{cfg.scenario}: co-moving set"))
    print(f"wrote {len(snaps)} snapshot(s) of {cfg.scenario} to {out}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="twophase", description="Two-phase kinematics: co-moving sets and transport checks")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "validate"):
        s = sub.add_parser(name)
        s.add_argument("--config", help="flat JSON configuration file")
        s.add_argument("--scenario")
        s.add_argument("--t0", type=float)
        s.add_argument("--t1", type=float)
        s.add_argument("--dt", type=float)
        s.add_argument("--h", type=float)
        s.add_argument("--h-t", dest="h_t", type=float)
        s.add_argument("--particles", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--snap", help="comma-separated snapshot times")
        s.add_argument("--g0", help="initial box as xmin,ymin,xmax,ymax")
        s.add_argument("--dwell-grid", dest="dwell_grid", type=int)
        s.add_argument("--outputs", help="comma-separated subset of csv,json,svg")
        s.add_argument("--out-dir", dest="out_dir")
        s.add_argument("--suite", help="run a verification suite instead of a scenario (acceptance)")
        s.add_argument("--only", help="comma-separated criterion numbers for the suite")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a dotted configuration key, e.g. field.alpha_plus=2")
    sub.add_parser("list-scenarios")
    return p


def _collect(args) -> tuple[RunConfig, list[str]]:
    raw: dict = {}
    diags: list[str] = []
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
            if not isinstance(data, dict):
                raise ValueError("top level must be an object")
            raw.update(data)
        except (OSError, ValueError) as exc:
            diags.append(f"cannot read config {args.config}: {exc}")
    for key in ("scenario", "t0", "t1", "dt", "h", "h_t", "particles", "seed", "snap", "g0", "dwell_grid",
                "outputs", "out_dir", "suite", "only"):
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = val
    for item in args.set:
        if "=" not in item:
            diags.append(f"--set expects KEY=VALUE, got {item!r}")
            continue
        k, v = item.split("=", 1)
        raw[k.strip()] = v.strip()
    cfg, more = load_config(raw)
    return cfg, diags + more


def _join_negative_values(argv: list[str]) -> list[str]:
    """Turn ``--g0 -1,0,0,0.5`` into ``--g0=-1,0,0,0.5`` so argparse does not read it as a flag."""
    out: list[str] = []
    i = 0
    while i < len(argv):
        a = argv[i]
        nxt = argv[i + 1] if i + 1 < len(argv) else ""
        if a.startswith("--") and "=" not in a and len(nxt) > 1 and nxt[0] == "-" and (nxt[1].isdigit() or nxt[1] == "."):
            out.append(f"{a}={nxt}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    argv = list(sys.argv[1:] if argv is None else argv)
    args = _parser().parse_args(_join_negative_values(argv))
    if args.command == "list-scenarios":
        for name in sorted(SCENARIOS):
            print(name)
        return EXIT_OK
    cfg, diags = _collect(args)
    diags += validate(cfg)
    if args.command == "validate":
        for d in diags:
            print(d)
        return EXIT_OK if not diags else EXIT_CONFIG
    if diags:
        for d in diags:
            print(f"config error: {d}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run(cfg)
    except TwoPhaseError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
