"""Quadratic approximation error of each model's nonlinearity across interval centres.

Prints, per model, the fitted coefficients and the maximum absolute error on
the fitting grid, and writes the curves to CSV for plotting.

    python scripts/approximation_quality.py --out approx.csv
"""
import argparse
import csv

import numpy as np

from palgpfa.obs_models import HALF_WIDTH, approximated_term, binomial, negbinom, poisson
from palgpfa.poly_approx import Interval, fit_quadratic, grid, max_abs_error


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--centers", nargs="+", type=float, default=[-2.0, 0.0, 2.0])
    ap.add_argument("--out", default="approx.csv")
    args = ap.parse_args(argv)

    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "center", "x", "f", "quadratic"])
        for model in (poisson(), binomial(1), negbinom(1.0)):
            f = approximated_term(model)
            hw = HALF_WIDTH[model.kind]
            for c in args.centers:
                q = fit_quadratic(f, Interval(c - hw, c + hw))
                print(f"{model.kind:9s} centre {c:+.1f}: a={q.a:.5f} b={q.b:.5f} c={q.c:.5f} "
                      f"max error {max_abs_error(q, f):.4g}")
                x = grid(Interval(c - 2 * hw, c + 2 * hw), 0.05)
                for xi, fi, qi in zip(x, f(x), q(x)):
                    w.writerow([model.kind, c, f"{xi:.4f}", f"{fi:.6g}", f"{qi:.6g}"])


if __name__ == "__main__":
    main()
