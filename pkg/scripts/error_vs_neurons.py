"""Aligned-latent error against the number of observed neurons (CSV: model,seed,N,error).

    python scripts/error_vs_neurons.py --models poisson --seeds 0 1 --neurons 2 5 10 20 --out curve.csv
"""
import argparse
import sys

import numpy as np

from palgpfa.evaluate import error_vs_neurons, write_curve_csv
from palgpfa.inference import FitConfig


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--models", nargs="+", default=["poisson", "binomial", "negbinom"])
    ap.add_argument("--seeds", nargs="+", type=int, default=list(range(5)))
    ap.add_argument("--neurons", nargs="+", type=int, default=[2, 4, 6, 8, 10, 12, 14, 16, 18, 20])
    ap.add_argument("--restarts", type=int, default=1)
    ap.add_argument("--noiseless", action="store_true", help="replace counts by the true rates")
    ap.add_argument("--out", default="curve.csv")
    args = ap.parse_args(argv)

    rows = []
    for kind in args.models:
        for seed in args.seeds:
            cfg = FitConfig(seed=seed, restarts=args.restarts)
            for N, err in error_vs_neurons(kind, seed, args.neurons, cfg, noiseless=args.noiseless):
                rows.append((kind, seed, N, err))
                print(f"{kind} seed={seed} N={N} error={err:.4g}", file=sys.stderr)
    write_curve_csv(args.out, rows)
    for kind in args.models:
        means = [np.nanmean([e for k, _, n, e in rows if k == kind and n == N]) for N in args.neurons]
        print(kind, " ".join(f"N={N}:{m:.3g}" for N, m in zip(args.neurons, means)))


if __name__ == "__main__":
    main()
