#!/usr/bin/env python3
"""Run the desk-scale trade-off sweep with the reference seed.

Thin wrapper over `coexsim sweep`; extra arguments are passed through, so
e.g. `python3 scripts/run_desk_sweep.py --jobs 4 --trials 2000` works.
"""

import sys
from pathlib import Path

from coexsim.cli import entrypoint

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    argv = ["sweep", str(ROOT / "scenarios" / "desk_scale.yaml"),
            "--seed", "20260814", "--out-dir", "out/desk_sweep"]
    sys.exit(entrypoint(argv + sys.argv[1:]))
