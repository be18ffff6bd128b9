"""Sweet-spot frequency and flux-offset shifts per thermal cycle, relative to cycle 1."""

import argparse

import numpy as np

from stabilitylab.experiment import ExperimentPlan, OutlierSpec, run_longitudinal
from stabilitylab.io import DEVIATION_COLUMNS, deviation_rows, write_table


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--outlier", metavar="QUBIT:CYCLE:MHZ", help="inject one large shift, e.g. Q5:3:45")
    ap.add_argument("--out", default="deviations.csv")
    args = ap.parse_args()

    outliers = ()
    if args.outlier:
        q, c, mhz = args.outlier.split(":")
        outliers = (OutlierSpec(q, int(c), float(mhz)),)
    rec = run_longitudinal(ExperimentPlan(root_seed=args.seed, outliers=outliers))
    write_table(args.out, DEVIATION_COLUMNS, deviation_rows(rec.deviations))

    for c in range(2, rec.plan.n_cycles + 1):
        df = np.array([d.df01max_mhz for d in rec.deviations if d.cycle == c])
        di = np.array([d.abs_dibmax_phi0 for d in rec.deviations if d.cycle == c])
        rel = np.abs(df) * 1e-3 / np.median([s.true_f01_max for s in rec.sessions])
        print(f"cycle {c}: |df01max| max {np.abs(df).max():5.1f} MHz (rel {rel.max():.2%}), "
              f"|dIb| median {np.median(di):.3f} max {di.max():.3f} Phi0")
    print(f"table in {args.out}")


if __name__ == "__main__":
    main()
