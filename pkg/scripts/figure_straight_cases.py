"""Co-moving sets of the unit square for the three straight-interface cases.

Writes figure_case_{a,b,c}.svg plus point clouds and a report per case.

    python scripts/figure_straight_cases.py [out_dir]
"""

import sys
from pathlib import Path

from twophase.cli_report import main

out = Path(sys.argv[1] if len(sys.argv) > 1 else "figures")
status = 0
for name in ("case_a", "case_b", "case_c"):
    status |= main(["run", "--scenario", name, "--snap", "0,0.25,0.5", "--particles", "4000",
                    "--out-dir", str(out / name)])
sys.exit(status)
