"""Primal-dual flow on min ||x||^2/2 s.t. x1 + x2 = 1, with metrics CSV and plot."""
import argparse
import warnings
from pathlib import Path

import numpy as np

from tikhoflow.diagnostics import ratio_growth
from tikhoflow.dynamics import CoefficientSignWarning, FlowParams, log_schedule
from tikhoflow.plotting import plot
from tikhoflow.primal_dual import gap_bound_check, solve_pd, write_pd_csv
from tikhoflow.problems import get_problem


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="tikhoflow_out/primal_dual_toy")
    ap.add_argument("--t-end", type=float, default=1e4)
    args = ap.parse_args()
    warnings.simplefilter("ignore", CoefficientSignWarning)

    q = 0.75
    params = FlowParams(2.0, q, 2 * (1 - q) / 3, 0.5, 1.0, 0.25)
    res = solve_pd(get_problem("toy_qp"), params, (np.array([2.0, -1.0, 1.0]), np.zeros(3)),
                   log_schedule(1.0, args.t_end, 50))
    m = res.metrics
    csv = write_pd_csv(Path(args.out) / "pd.csv", m)
    plot(csv, ["feasibility", "dual_residual", "gap", "dist_saddle"],
         ref_slopes=[-(1 + 5 * q) / 3], title="primal-dual toy QP")
    rate = [-(1 + 5 * q) / 3]
    hi = args.t_end
    print(f"saddle point: x*={res.saddle.x_star}, y*={res.saddle.y_star}")
    print(f"||w(T) - w*|| = {m.dist_saddle[-1]:.3e}")
    for name in ("feasibility", "gap"):
        sup, _, growth = ratio_growth(m.t, getattr(m, name), rate, hi / 100, hi)
        print(f"{name}: sup ratio {sup:.3g}, growth {growth:.3f}")
    print(f"gap bounds hold at every sample: {gap_bound_check(m, res.saddle).passed}")
    print(f"wrote {csv}")


if __name__ == "__main__":
    main()
