#!/usr/bin/env python3
"""Tabulate E(f) for a model and locate its continuous and discrete optima.

    python3 scripts/energy_curve.py --points 200 -o curve.csv
"""

import argparse
import sys

import numpy as np

from dvfs_energy import cli, model, optimize


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model", help="model file or fit report (default: canonical)")
    ap.add_argument("--points", type=int, default=1000)
    ap.add_argument("-o", "--output", help="CSV destination for the curve")
    args = ap.parse_args(argv)

    table = model.default_table()
    m = cli.load_model_file(args.model) if args.model else model.canonical_model(table)
    chk = optimize.check_unimodal(m, args.points)
    cont = optimize.find_fopt_continuous(m)
    disc = optimize.find_fopt_discrete(m, table)

    print(f"unimodal on [{m.f_min}, {m.f_max}] GHz: {chk.unimodal}")
    print(f"continuous f_opt = {cont.f_opt:.6f} GHz  E = {cont.e_min:.6f} J  interior = {cont.interior}")
    print(f"discrete   f_opt = {disc.f_opt:.6f} GHz  E = {disc.e_min:.6f} J")
    for f in (m.f_min, m.f_max):
        print(f"E({f}) / E_min = {float(model.cpu_energy(m, f)) / cont.e_min:.4f}")
    if args.output:
        cols = cli.curve_data(m, args.points)
        np.savetxt(args.output, np.column_stack(list(cols.values())), delimiter=",",
                   header=",".join(cols), comments="", fmt="%.9g")
    return 0


if __name__ == "__main__":
    sys.exit(main())
