"""Synthetic count-GPFA datasets.

All randomness comes from one :class:`numpy.random.SeedSequence`; latents,
loadings and counts each draw from their own spawned child stream, so
identical specs give bit-identical outputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import CountDataset
from .kernels import GpPrior, build_prior
from .obs_models import ObservationModel, binomial, negbinom, poisson, rate

PAPER_N, PAPER_T, PAPER_R, PAPER_P = 20, 200, 20, 2
PAPER_LENGTH_SCALES = (15.0, 60.0)
PAPER_W_RANGE = (0.0, 2.0)
SIM_BINOMIAL_N = 10


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class SimSpec:
    N: int
    T: int
    R: int
    P: int
    length_scales: tuple[float, ...]
    model: ObservationModel
    w_low: float = 0.0
    w_high: float = 2.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "length_scales", tuple(float(v) for v in self.length_scales))
        if min(self.N, self.T, self.R, self.P) < 1:
            raise ValueError("N, T, R and P must all be >= 1")
        if len(self.length_scales) != self.P:
            raise ValueError(f"need {self.P} length scales, got {len(self.length_scales)}")
        if self.w_low > self.w_high:
            raise ValueError("w_low must not exceed w_high")


@dataclass(frozen=True)
class SimOutput:
    Y: CountDataset
    X_true: np.ndarray
    W_true: np.ndarray
    spec: SimSpec
    metadata: dict = field(default_factory=dict)

    @property
    def rates_true(self) -> np.ndarray:
        return rate(self.spec.model, self.W_true @ self.X_true)


def sample_gp_latents(prior: GpPrior, seed) -> np.ndarray:
    """Draw ``X`` (``P x T``), row ``j`` as ``L_j z`` with ``z`` standard normal."""
    rng = _rng(seed)
    fact = build_prior(prior)
    return np.stack([L @ rng.standard_normal(prior.T) for L in fact.chols])


def sample_counts(model: ObservationModel, W, X, R: int, seed) -> CountDataset:
    """``R`` independent trials of counts at rates ``rate(model, W X)``.

    Negative binomial counts are drawn as a gamma-mixed Poisson with shape
    ``1/alpha`` and mean ``m``.
    """
    rng = _rng(seed)
    lam = rate(model, np.asarray(W, dtype=float) @ np.asarray(X, dtype=float))
    N, T = lam.shape
    size = (R, N, T)
    if model.kind == "poisson":
        y = rng.poisson(lam, size=size)
    elif model.kind == "binomial":
        n = model.n_vector(N)[:, None]
        y = rng.binomial(n.astype(np.int64), lam / n, size=size)
    else:
        shape = 1.0 / model.alpha
        g = rng.gamma(shape, lam * model.alpha, size=size)
        y = rng.poisson(g)
    return CountDataset(np.moveaxis(y, 0, -1).astype(float))


def simulate(spec: SimSpec) -> SimOutput:
    ss_lat, ss_w, ss_y = np.random.SeedSequence(spec.seed).spawn(3)
    X = sample_gp_latents(GpPrior(spec.length_scales, spec.T), np.random.default_rng(ss_lat))
    W = np.random.default_rng(ss_w).uniform(spec.w_low, spec.w_high, size=(spec.N, spec.P))
    Y = sample_counts(spec.model, W, X, spec.R, np.random.default_rng(ss_y))
    meta = {"model": spec.model.kind, "seed": spec.seed}
    if spec.model.kind == "binomial":
        meta["n"] = list(spec.model.n)
    if spec.model.kind == "negbinom":
        meta["alpha"] = spec.model.alpha
    return SimOutput(Y, X, W, spec, meta)


def default_model(kind: str) -> ObservationModel:
    """Simulation defaults: binomial ``n = 10`` shared, negative binomial ``alpha = 1``."""
    if kind == "binomial":
        return binomial(SIM_BINOMIAL_N)
    if kind == "negbinom":
        return negbinom(1.0)
    if kind == "poisson":
        return poisson()
    raise ValueError(f"unknown model kind {kind!r}")


def paper_spec(model, seed: int = 0) -> SimSpec:
    if isinstance(model, str):
        model = default_model(model)
    return SimSpec(PAPER_N, PAPER_T, PAPER_R, PAPER_P, PAPER_LENGTH_SCALES, model,
                   *PAPER_W_RANGE, seed=seed)


def paper_setup(model, seed: int = 0) -> SimOutput:
    """20 neurons, 200 bins, 20 trials, 2 latents with length scales 15 and 60,
    loadings uniform on [0, 2]; one latent path shared by every trial."""
    return simulate(paper_spec(model, seed))
