#!/usr/bin/env python3
"""Run the oracle verification suites (solver, Schur, steering derivative).

Thin wrapper over `coexsim verify`; extra arguments are passed through, so
e.g. `python3 scripts/run_verification.py --instances 500` works.
Exits 3 if any instance violates a certificate.
"""

import sys

from coexsim.cli import entrypoint

if __name__ == "__main__":
    sys.exit(entrypoint(["verify"] + sys.argv[1:]))
