"""Compare the regularized flow with the c = 0 baseline on the rank-deficient problem.

Without the Tikhonov term the kernel coordinates stay where the initial
condition puts them, so the limit is a zero of A that depends on the start.
"""
import argparse
import warnings
from dataclasses import replace

import numpy as np

from tikhoflow.dynamics import CoefficientSignWarning, FlowParams, integrate, log_schedule
from tikhoflow.problems import get_problem

X_STAR = np.array([1.0, 1.0, 0.0, 0.0])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--t-end", type=float, default=1e4)
    args = ap.parse_args()
    warnings.simplefilter("ignore", CoefficientSignWarning)

    op = get_problem("rankdef")
    reg = FlowParams(2.0, 0.75, 1 / 6, 0.5, 1.0, 0.25)
    base = replace(reg, c=0.0)
    ts = log_schedule(1.0, args.t_end, 20)
    print("seed  ||x(T)-x*|| baseline  ||x(T)-x*|| regularized  ||A(x(T))|| baseline")
    for seed in range(args.seeds):
        u0 = np.random.default_rng(seed).normal(size=4) + np.array([0.0, 0.0, 1.0, 1.0])
        tb = integrate(op, base, u0, np.zeros(4), ts)
        tr = integrate(op, reg, u0, np.zeros(4), ts)
        print(f"{seed:4d}  {np.linalg.norm(tb.x[-1] - X_STAR):22.6f}  "
              f"{np.linalg.norm(tr.x[-1] - X_STAR):25.6f}  {tb.norm_Ax[-1]:21.3e}")


if __name__ == "__main__":
    main()
