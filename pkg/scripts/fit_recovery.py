#!/usr/bin/env python3
"""Parameter recovery of the time and power fits on synthetic traces.

For every noise level, generates traces from the ground-truth parameters for
a range of seeds, refits them, and prints the median and worst relative error
of each parameter together with the recovered asymptote.
"""

import argparse
import sys

import numpy as np

from dvfs_energy import fit, model, traces


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--noise", type=float, nargs="+", default=[0.0, 0.5, 1.0, 2.0], help="percent")
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--samples-per-freq", type=int, default=32)
    args = ap.parse_args(argv)

    table = model.default_table()
    tp, pp = model.GENERATOR_TIME, model.GENERATOR_POWER
    truth = np.array([tp.cc_b, tp.cc_k, tp.beta, pp.p_system, pp.gamma, pp.eta_alpha_c])
    names = ("cc_b", "cc_k", "beta", "p_system", "gamma", "eta_alpha_c")
    print("noise%  param        median_rel   worst_rel")
    for noise in args.noise:
        errs, asym = [], []
        for seed in range(args.seeds):
            ts = traces.synth_generate(tp, pp, table, noise, seed, samples_per_freq=args.samples_per_freq)
            t = fit.fit_time_model(ts.time_pairs()).params
            p = fit.fit_power_model(ts.power_pairs(), table).params
            got = np.array([t.cc_b, t.cc_k, t.beta, p.p_system, p.gamma, p.eta_alpha_c])
            errs.append(np.abs(got / truth - 1))
            asym.append(t.asymptote)
        errs = np.array(errs)
        for name, col in zip(names, errs.T):
            print(f"{noise:6.2f}  {name:<11}  {np.median(col):10.3e}  {col.max():10.3e}")
        print(f"{noise:6.2f}  asymptote    median {np.median(asym):.5f} GHz (truth {tp.asymptote:.5f})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
