"""Recovery metrics: regression alignment of latents, rate MSE, error vs neuron count."""
from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .dataset import CountDataset
from .inference import FitConfig, FitResult, fit, map_latents, reconstruct_rates
from .kernels import GpPrior
from .obs_models import ObservationModel
from .simulate import SimOutput, paper_setup

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AlignmentResult:
    transform: np.ndarray
    aligned_latents: np.ndarray
    normalized_error: float
    rank_deficient: bool = False


def align_latents(X_hat, X_true) -> AlignmentResult:
    """Regress estimated latents onto the true ones.

    Finds ``A`` minimising ``||A X_hat - X_true||_F``; latent factors are
    only identifiable up to such a linear map. ``X_hat`` may have fewer
    rows than ``X_true`` (``A`` is then rectangular).
    """
    X_hat = np.atleast_2d(np.asarray(X_hat, dtype=float))
    X_true = np.atleast_2d(np.asarray(X_true, dtype=float))
    if X_hat.shape[1] != X_true.shape[1]:
        raise ValueError(f"time axes differ: {X_hat.shape} vs {X_true.shape}")
    if not np.any(X_hat):
        raise ValueError("estimated latents are identically zero")
    At, _, rank, _ = np.linalg.lstsq(X_hat.T, X_true.T, rcond=None)
    A = At.T
    aligned = A @ X_hat
    err = float(np.sum((aligned - X_true) ** 2) / np.sum(X_true ** 2))
    return AlignmentResult(A, aligned, err, rank < X_hat.shape[0])


def rate_mse(rates_hat, rates_true) -> float:
    rates_hat = np.asarray(rates_hat, dtype=float)
    rates_true = np.asarray(rates_true, dtype=float)
    if rates_hat.shape != rates_true.shape:
        raise ValueError(f"shape mismatch: {rates_hat.shape} vs {rates_true.shape}")
    return float(np.mean((rates_hat - rates_true) ** 2))


@dataclass(frozen=True)
class PipelineResult:
    fit: FitResult
    x_map: np.ndarray
    alignment: AlignmentResult
    rates: np.ndarray
    rate_mse: float


def run_pipeline(Y: CountDataset, model: ObservationModel, P: int, X_true, rates_true=None,
                 cfg: FitConfig = FitConfig()) -> PipelineResult:
    """Fit by PAL evidence, take MAP latents under the exact likelihood, align to truth."""
    res = fit(Y, P, model, cfg)
    x_map, _ = map_latents(Y, res.W, GpPrior(res.length_scales, Y.T), res.model)
    rates = reconstruct_rates(res.W, x_map, res.model)
    align = align_latents(x_map.reshape(P, Y.T), X_true)
    mse = float("nan") if rates_true is None else rate_mse(rates, rates_true)
    return PipelineResult(res, x_map, align, rates, mse)


def noiseless_counts(sim: SimOutput) -> CountDataset:
    """Diagnostic data set whose every trial holds the true rates instead of counts."""
    lam = sim.rates_true
    return CountDataset(np.repeat(lam[:, :, None], sim.Y.R, axis=2))


def error_vs_neurons(model, seed: int, neuron_counts: Sequence[int], cfg: FitConfig | None = None,
                     noiseless: bool = False, sim: SimOutput | None = None) -> list[tuple[int, float]]:
    """Aligned-latent error as a function of how many neurons are observed.

    One default-setup simulation is drawn and its first ``N`` neurons are used for
    each requested ``N``. The number of fitted latents is ``min(P, N - 1)``.
    Failed fits give ``nan``.
    """
    if sim is None:
        sim = paper_setup(model, seed)
    cfg = cfg or FitConfig(seed=seed)
    Y = noiseless_counts(sim) if noiseless else sim.Y
    N_max, P = sim.spec.N, sim.spec.P
    curve = []
    for N in neuron_counts:
        if not 2 <= N <= N_max:
            raise ValueError(f"neuron count {N} outside [2, {N_max}]")
        idx = np.arange(N)
        try:
            out = run_pipeline(Y.subset(idx), sim.spec.model.subset(idx), min(P, N - 1), sim.X_true, cfg=cfg)
            err = out.alignment.normalized_error
        except (np.linalg.LinAlgError, RuntimeError, ValueError) as exc:
            log.warning("N=%d failed: %s", N, exc)
            err = float("nan")
        curve.append((N, err))
    return curve


def write_curve_csv(path: str | os.PathLike, rows: Iterable[tuple[str, int, int, float]]) -> None:
    """Rows of ``(model, seed, N, error)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "seed", "N", "error"])
        for model, seed, N, err in rows:
            w.writerow([model, seed, N, repr(float(err))])
