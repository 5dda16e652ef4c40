#!/usr/bin/env python3
"""Direction of f_opt under one-at-a-time parameter sweeps.

Sweeps beta, the time-law asymptote, m1 and gamma over their acceptance
ranges around the canonical model, plus a temperature sweep that rescales
gamma through the leakage law.  Prints the f_opt trajectory and whether it
rises or falls.
"""

import argparse
import sys

import numpy as np

from dvfs_energy import model, optimize

SWEEPS = {
    "beta": np.linspace(0.8, 1.6, 9),
    "asymptote": np.linspace(0.05, 0.15, 11),
    "m1": np.linspace(0.1, 0.5, 9),
    "gamma": np.linspace(0.05, 0.6, 12),
}


def direction(f):
    d = np.diff(f)
    if np.all(d >= -1e-9):
        return "non-decreasing"
    if np.all(d <= 1e-9):
        return "non-increasing"
    return "mixed"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--temps", type=float, nargs="+", default=list(np.linspace(25, 85, 7)), help="degrees C")
    args = ap.parse_args(argv)

    m = model.canonical_model()
    for param, values in SWEEPS.items():
        pts = optimize.sensitivity_sweep(m, param, values, tol=1e-8)
        f = [p.f_opt for p in pts]
        print(f"{param:<11} {direction(f):<15} " + " ".join(f"{x:.3f}" for x in f))
    pts = optimize.temperature_sweep(m, model.ILLUSTRATIVE_THERMAL, args.temps, 37.0, 1e-8)
    f = [p.f_opt for p in pts]
    print(f"{'temperature':<11} {direction(f):<15} " + " ".join(f"{x:.3f}" for x in f))
    return 0


if __name__ == "__main__":
    sys.exit(main())
