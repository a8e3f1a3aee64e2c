"""Certify a sweep of admissible parameters and report the leading-term signs."""
import argparse
import warnings
from dataclasses import replace

from tikhoflow.diagnostics import (certify, coefficients, default_grid, s5_interval,
                                   select_proof_constants)
from tikhoflow.dynamics import CoefficientSignWarning, FlowParams
from tikhoflow.errors import NotCertified

SWEEP = [  # (alpha, q, s, beta, gamma, c)
    (2.0, 0.5, 0.3, 1.0, 1.0, 0.5),
    (3.0, 0.5, 0.3, 1.0, 1.0, 0.5),
    (2.0, 0.4, 0.4, 1.5, 1.0, 0.3),
    (5.0, 0.45, 0.35, 0.6, 1.0, 1.0),
    (2.5, 0.3, 0.5, 1.0, 1.0, 0.4),
    (2.0, 0.75, 1 / 6, 1.0, 1.0, 0.5),   # certifies only past t ~ 2e8
    (2.0, 0.75, 1 / 6, 0.5, 1.0, 0.25),  # benchmark: alpha beta = 1
]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--t-max", type=float, default=1e6)
    args = ap.parse_args()
    warnings.simplefilter("ignore", CoefficientSignWarning)
    cols = "alpha q s beta gamma c | disc_stated disc_exact R4_lead R5_lead | T_star violating"
    print(cols)
    for row in SWEEP:
        p = FlowParams(*row)
        k = select_proof_constants(p)
        cv = coefficients(1.0, p, k)
        rep = certify(p, k, default_grid(p, args.t_max), raise_on_fail=False)
        print(" ".join(f"{v:.4g}" for v in row),
              f"| {cv.discriminant_leading:+.3g} {cv.discriminant_leading_exact:+.3g} "
              f"{cv.R4_leading_coef:+.3g} {cv.R5_leading_coef:+.3g} |",
              f"{rep.T_star:.4g}", ",".join(rep.violating) or "-")

    p = FlowParams(*SWEEP[0])
    k = select_proof_constants(p)
    lo, _ = s5_interval(p, k)
    for label, bad in (("K doubled", replace(k, K=2 * k.K)), ("s5 = lo/2", replace(k, s5=lo / 2))):
        try:
            certify(p, bad)
            print(f"{label}: certified (unexpected)")
        except NotCertified as exc:
            print(f"{label}: NotCertified ({', '.join(exc.report.violating)})")


if __name__ == "__main__":
    main()
