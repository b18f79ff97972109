#!/usr/bin/env python3
"""Run the finite-difference gradient suite and exit non-zero on any failure."""
import sys

from dpformer.gradcheck import main_report

if __name__ == "__main__":
    ok, report = main_report(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
    print(report)
    sys.exit(0 if ok else 1)
