"""Slip case: attainable set from the origin and the co-moving set of a corner box.

The attainable set is drawn against its closed-form boundary arcs.

    python scripts/figure_slip_case.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from twophase.acceptance import parabola_arcs
from twophase.cli_report import main, render_svg
from twophase.inclusion_solver import BranchPolicy, reachable_set
from twophase.twophase_field import scenario

out = Path(sys.argv[1] if len(sys.argv) > 1 else "figures") / "case_d"
out.mkdir(parents=True, exist_ok=True)

cloud = reachable_set(scenario("case_d"), 0.0, np.zeros((1, 2)), 0.5, policy=BranchPolicy(dwell_grid=256))
arcs = parabola_arcs(0.5)
upper = arcs[arcs[:, 1] >= 0]
lower = arcs[arcs[:, 1] < 0]
curves = [c[np.argsort(c[:, 0])][::200] for c in (upper, lower) if c.shape[0] > 1]
(out / "figure_case_d_attainable.svg").write_text(
    render_svg([], "case_d: attainable set from the origin at t=0.5", curves=curves, clouds=[cloud.points.points]))

sys.exit(main(["run", "--scenario", "case_d", "--g0=-1,0,0,0.5", "--snap", "0,0.25,0.5", "--dwell-grid", "128",
               "--particles", "4000", "--out-dir", str(out)]))
