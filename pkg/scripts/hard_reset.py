"""Compare inter-cycle fidelity with fidelity between independently drawn baths.

Runs 100 qubits through two cycles with the default perturbation and again
with cycling disabled; reports two-sample Kolmogorov-Smirnov p-values.
"""

import argparse

import numpy as np
from scipy import stats

from stabilitylab.analysis import AnalysisConfig
from stabilitylab.experiment import (ExperimentPlan, calibrate_plan_alpha, default_qubits, fresh_bath_stf,
                                     run_longitudinal, stf_matrix)
from stabilitylab.model import CyclePerturbation


def sample(perturbation, n, seed):
    plan = ExperimentPlan(qubits=tuple(default_qubits(n, seed=77)), n_cycles=2, session_hours=(1.0,),
                          perturbation=perturbation, root_seed=seed)
    cfg = AnalysisConfig(calibrate_plan_alpha(plan))
    inter = [r.rho for r in stf_matrix(run_longitudinal(plan), cfg).inter()]
    fresh = [r.rho for r in fresh_bath_stf(plan, cfg, n=n)]
    return np.array(inter), np.array(fresh)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--seed", type=int, default=5)
    args = ap.parse_args()
    for label, pert in (("thermal cycle", CyclePerturbation()), ("no cycling", CyclePerturbation.disabled())):
        inter, fresh = sample(pert, args.n, args.seed)
        res = stats.ks_2samp(inter, fresh)
        print(f"{label:>13}: median rho {np.median(inter):.3f} vs fresh {np.median(fresh):.3f}, "
              f"KS D={res.statistic:.3f} p={res.pvalue:.3g}")


if __name__ == "__main__":
    main()
