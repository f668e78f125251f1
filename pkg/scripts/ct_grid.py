"""Combes-Thomas constant over a (g, E) grid and the measured resolvent ratio on small volumes."""

import argparse
import csv
import math
import sys

import numpy as np

from fockloc.bounds import CtParams, ct_constant, ct_verify
from fockloc.configspace import enumerate_configs
from fockloc.disorder_mc import realization_seed, sample_disorder
from fockloc.operators import ModelParams


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--gs", type=float, nargs="+", default=[4.0, 6.0, 10.0])
    ap.add_argument("--mu-T", type=float, default=0.1)
    ap.add_argument("--L", type=int, default=3)
    ap.add_argument("--n", type=int, default=3)
    ap.add_argument("--lambda", dest="lam", type=float, default=1.0)
    ap.add_argument("--realizations", type=int, default=10)
    ap.add_argument("--seed", type=int, default=1)
    a = ap.parse_args()

    space = enumerate_configs(a.L, a.n)
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["g", "E", "C_T", "max_ratio", "violations"])
    for g in a.gs:
        E_max = 4 * g - 12 * math.exp(a.mu_T)
        for E in np.linspace(0.0, 0.9 * E_max, 4):
            p = CtParams(g, a.mu_T, float(E))
            reps = [ct_verify(space, ModelParams(g, a.lam), sample_disorder(a.L, "uniform", realization_seed(a.seed, i)), p)
                    for i in range(a.realizations)]
            out.writerow([g, float(E), ct_constant(p), max(r.ratio for r in reps), sum(not r.ok for r in reps)])


if __name__ == "__main__":
    main()
