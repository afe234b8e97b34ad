"""Command-line interface: ``palgpfa {simulate,fit,infer,evaluate,export-hyper}``.

Exit codes: 0 success, 2 usage error, 3 data or I/O error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import io
from .evaluate import align_latents, error_vs_neurons, rate_mse, write_curve_csv
from .inference import ConvergenceError, FitConfig, fit, map_latents, reconstruct_rates
from .kernels import GpPrior
from .obs_models import ObservationModel, make_model
from .pal_core import export_hyperparameters, parse_hyperparameters
from .simulate import (PAPER_LENGTH_SCALES, PAPER_N, PAPER_P, PAPER_R, PAPER_T, SimSpec,
                       default_model, simulate)

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4

log = logging.getLogger("palgpfa")


class UsageError(Exception):
    pass


def _out(args, name: str) -> str:
    return os.path.join(io.ensure_dir(args.out), name)


def _model_for_sim(args) -> ObservationModel:
    if args.model == "binomial" and args.n is not None:
        return make_model("binomial", n=args.n)
    if args.model == "negbinom" and args.alpha is not None:
        return make_model("negbinom", alpha=args.alpha)
    return default_model(args.model)


def cmd_simulate(args) -> None:
    if args.preset == "paper":
        N, T, R, P, ls = PAPER_N, PAPER_T, PAPER_R, PAPER_P, PAPER_LENGTH_SCALES
    else:
        N, T, R, P, ls = args.neurons, args.bins, args.trials, args.latents, PAPER_LENGTH_SCALES
    if args.length_scales:
        ls = tuple(args.length_scales)
    if len(ls) != P:
        ls = tuple(np.resize(np.asarray(ls, dtype=float), P))
    io.ensure_dir(args.out)
    spec = SimSpec(N, T, R, P, ls, _model_for_sim(args), args.w_low, args.w_high, args.seed)
    sim = simulate(spec)
    io.write_counts_csv(_out(args, "counts.csv"), sim.Y)
    truth = dict(sim.metadata)
    truth.update({
        "length_scales": list(spec.length_scales),
        "X_true": io.matrix_record(sim.X_true),
        "W_true": io.matrix_record(sim.W_true),
        "rates_true": io.matrix_record(sim.rates_true),
    })
    io.write_json(_out(args, "truth.json"), truth)
    manifest = {
        "command": "simulate", "model": spec.model.kind, "seed": spec.seed,
        "N": N, "T": T, "R": R, "P": P, "length_scales": list(spec.length_scales),
        "w_low": spec.w_low, "w_high": spec.w_high,
        "files": {"counts": "counts.csv", "truth": "truth.json"},
    }
    if spec.model.kind == "binomial":
        manifest["n"] = list(spec.model.n)
    if spec.model.kind == "negbinom":
        manifest["alpha"] = spec.model.alpha
    io.write_json(_out(args, "manifest.json"), manifest)


def cmd_fit(args) -> None:
    Y = io.read_counts_csv(args.counts)
    if not 1 <= args.latents < Y.N:
        raise UsageError(f"--latents must satisfy 1 <= P < N = {Y.N}, got {args.latents}")
    io.ensure_dir(args.out)
    model = make_model(args.model, n=args.n, alpha=args.alpha, Y=Y)
    cfg = FitConfig(max_iters=args.max_iters, tol=args.tol, restarts=args.restarts, seed=args.seed,
                    optimize_alpha=args.optimize_alpha)
    res = fit(Y, args.latents, model, cfg)
    rec = res.to_dict()
    rec["model"] = model.kind
    rec["seed"] = args.seed
    rec["hyperparameters"] = export_hyperparameters(res.W, res.length_scales, res.model)
    io.write_json(_out(args, "fit.json"), rec)
    print(f"final_evidence={res.final_evidence!r} converged={str(res.converged).lower()} "
          f"iterations={res.iterations}")


def _load_fit(path):
    rec = io.read_json(path)
    return parse_hyperparameters(rec.get("hyperparameters", rec))


def cmd_infer(args) -> None:
    Y = io.read_counts_csv(args.counts)
    W, ls, model = _load_fit(args.fit)
    if W.shape[0] != Y.N:
        raise ValueError(f"fit has {W.shape[0]} neurons but counts file has {Y.N}")
    io.ensure_dir(args.out)
    x_map, _ = map_latents(Y, W, GpPrior(ls, Y.T), model)
    io.write_matrix_csv(_out(args, "x_map.csv"), x_map.reshape(W.shape[1], Y.T))
    io.write_matrix_csv(_out(args, "rates.csv"), reconstruct_rates(W, x_map, model))


def cmd_evaluate(args) -> None:
    io.ensure_dir(args.out)
    rows = []
    if args.inferred:
        if not args.truth or not os.path.exists(args.truth):
            raise FileNotFoundError(
                f"evaluation needs simulation ground truth; truth file not found: {args.truth}")
        truth = io.read_json(args.truth)
        X_true = io.matrix_from_record(truth["X_true"])
        X_hat = io.read_matrix_csv(os.path.join(args.inferred, "x_map.csv"))
        align = align_latents(X_hat, X_true)
        mse = float("nan")
        rates_path = os.path.join(args.inferred, "rates.csv")
        if "rates_true" in truth and os.path.exists(rates_path):
            mse = rate_mse(io.read_matrix_csv(rates_path), io.matrix_from_record(truth["rates_true"]))
        with open(_out(args, "metrics.csv"), "w") as fh:
            fh.write("model,seed,alignment_error,rate_mse\n")
            fh.write(f"{truth.get('model', '')},{truth.get('seed', '')},"
                     f"{align.normalized_error!r},{mse!r}\n")
    if args.curve_neurons:
        if not args.model:
            raise UsageError("--curve-neurons requires --model")
        cfg = FitConfig(max_iters=args.max_iters, tol=args.tol, restarts=args.restarts, seed=args.seed)
        for N, err in error_vs_neurons(args.model, args.seed, args.curve_neurons, cfg):
            rows.append((args.model, args.seed, N, err))
        write_curve_csv(_out(args, "curve.csv"), rows)
    if not args.inferred and not args.curve_neurons:
        raise UsageError("evaluate needs --inferred DIR (with --truth) and/or --curve-neurons")


def cmd_export_hyper(args) -> None:
    W, ls, model = _load_fit(args.fit)
    export_hyperparameters(W, ls, model, _out(args, "hyperparameters.json"))


def _int_list(s: str) -> list[int]:
    return [int(v) for v in s.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="palgpfa", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model_required=True):
        sp.add_argument("--model", choices=["binomial", "poisson", "negbinom"], required=model_required)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", required=True, help="existing output directory")

    def fitting(sp):
        sp.add_argument("--restarts", type=int, default=1)
        sp.add_argument("--max-iters", type=int, default=500)
        sp.add_argument("--tol", type=float, default=1e-6)

    s = sub.add_parser("simulate", help="generate a synthetic count-GPFA data set")
    common(s)
    s.add_argument("--preset", choices=["paper"])
    s.add_argument("--neurons", type=int, default=PAPER_N)
    s.add_argument("--bins", type=int, default=PAPER_T)
    s.add_argument("--trials", type=int, default=PAPER_R)
    s.add_argument("--latents", type=int, default=PAPER_P)
    s.add_argument("--length-scales", type=float, nargs="+")
    s.add_argument("--w-low", type=float, default=0.0)
    s.add_argument("--w-high", type=float, default=2.0)
    s.add_argument("--n", type=int)
    s.add_argument("--alpha", type=float)
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="maximise PAL evidence over loadings and length scales")
    common(f)
    f.add_argument("--counts", required=True)
    f.add_argument("--latents", type=int, required=True)
    f.add_argument("--n", type=int, help="shared binomial n (default: per-neuron observed maximum)")
    f.add_argument("--alpha", type=float, help="negative-binomial alpha (default 1)")
    f.add_argument("--optimize-alpha", action="store_true")
    fitting(f)
    f.set_defaults(func=cmd_fit)

    i = sub.add_parser("infer", help="MAP latents and rates from a fit")
    i.add_argument("--counts", required=True)
    i.add_argument("--fit", required=True)
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("evaluate", help="alignment error, rate MSE, error-vs-neurons curve")
    common(e, model_required=False)
    e.add_argument("--truth")
    e.add_argument("--inferred", help="directory holding x_map.csv and rates.csv")
    e.add_argument("--curve-neurons", type=_int_list)
    fitting(e)
    e.set_defaults(func=cmd_evaluate)

    x = sub.add_parser("export-hyper", help="write the hyperparameter record of a fit")
    x.add_argument("--fit", required=True)
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_export_hyper)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"palgpfa: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (np.linalg.LinAlgError, ConvergenceError) as exc:
        print(f"palgpfa: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError, KeyError) as exc:
        print(f"palgpfa: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
