"""Per qubit and cycle: mean T1 over sessions (bar) and the peak fitted T1 (star)."""

import argparse

import numpy as np

from stabilitylab.experiment import ExperimentPlan, run_longitudinal


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--qubits", type=int, default=8, help="rows to print")
    args = ap.parse_args()

    rec = run_longitudinal(ExperimentPlan(root_seed=args.seed))
    cycles = range(1, rec.plan.n_cycles + 1)
    print("qubit  baseline  " + "  ".join(f"c{c} bar/star" for c in cycles))
    ratios = []
    for q in rec.plan.qubits:
        cells = []
        for c in cycles:
            ss = [s for s in rec.for_qubit(q.name) if s.cycle == c and s.t1_stats]
            bar = np.mean([s.t1_stats.mean_t1 for s in ss])
            star = max(s.t1_stats.max_t1 for s in ss)
            ratios.append(star * q.gamma0)
            cells.append(f"{bar:5.1f}/{star:5.1f}")
        if len(ratios) <= args.qubits * len(cycles):
            print(f"{q.name:<5}  {1 / q.gamma0:7.1f}  " + "  ".join(cells))
    ratios = np.array(ratios)
    print(f"peak T1 / baseline over all qubit-cycles: min {ratios.min():.3f}, max {ratios.max():.3f}")


if __name__ == "__main__":
    main()
