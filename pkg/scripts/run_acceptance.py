"""Run the acceptance suite, print one PASS/FAIL line per criterion and write report.json.

    python scripts/run_acceptance.py [out_dir] [criterion numbers...]
"""

import sys

from twophase.cli_report import main

out = sys.argv[1] if len(sys.argv) > 1 else "acceptance_out"
args = ["run", "--suite", "acceptance", "--out-dir", out]
if len(sys.argv) > 2:
    args += ["--only", ",".join(sys.argv[2:])]
sys.exit(main(args))
