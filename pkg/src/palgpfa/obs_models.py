"""Count observation models: binomial, Poisson and negative binomial.

Each model maps a linear predictor ``eta = W x`` to a rate, has an exact
log-likelihood, and has one nonlinear term that PAL replaces by a
per-neuron quadratic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit, gammaln, logit

from .dataset import CountDataset
from .poly_approx import DEFAULT_GRID_STEP, Interval, QuadApprox, fit_quadratic

KINDS = ("binomial", "poisson", "negbinom")
EXP_CLAMP = 30.0
HALF_WIDTH = {"poisson": 2.0, "binomial": 4.0, "negbinom": 4.0}


def _softplus(x):
    return np.logaddexp(0.0, x)


def _clamped_exp(x):
    return np.exp(np.minimum(x, EXP_CLAMP))


@dataclass(frozen=True)
class ObservationModel:
    """Tagged count model.

    ``n`` holds the per-neuron binomial maximum count (a single entry is
    shared by all neurons); ``alpha`` is the negative-binomial dispersion
    (variance ``m + alpha m**2``).
    """

    kind: str
    n: tuple[int, ...] | None = None
    alpha: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "binomial":
            if self.n is None:
                raise ValueError("binomial model requires n")
            n = (self.n,) if np.isscalar(self.n) else tuple(self.n)
            n = tuple(int(v) for v in n)
            if not n or min(n) < 1:
                raise ValueError(f"binomial n must be >= 1, got {n}")
            object.__setattr__(self, "n", n)
        elif self.n is not None:
            raise ValueError(f"n is only meaningful for the binomial model, not {self.kind}")
        if self.kind == "negbinom":
            alpha = 1.0 if self.alpha is None else float(self.alpha)
            if not (math.isfinite(alpha) and alpha > 0):
                raise ValueError(f"negbinom alpha must be positive, got {alpha}")
            object.__setattr__(self, "alpha", alpha)
        elif self.alpha is not None:
            raise ValueError(f"alpha is only meaningful for the negbinom model, not {self.kind}")

    def n_vector(self, N: int) -> np.ndarray:
        if self.kind != "binomial":
            raise ValueError("n_vector is only defined for the binomial model")
        if len(self.n) == 1:
            return np.full(N, self.n[0], dtype=float)
        if len(self.n) != N:
            raise ValueError(f"model has {len(self.n)} binomial counts but data has {N} neurons")
        return np.asarray(self.n, dtype=float)

    def subset(self, neurons) -> "ObservationModel":
        if self.kind == "binomial" and len(self.n) > 1:
            return ObservationModel("binomial", tuple(np.asarray(self.n)[np.asarray(neurons)]))
        return self

    def with_alpha(self, alpha: float) -> "ObservationModel":
        return ObservationModel("negbinom", alpha=alpha)

    def validate(self, Y: CountDataset) -> None:
        if self.kind == "binomial":
            n = self.n_vector(Y.N)
            over = Y.counts > n[:, None, None]
            if over.any():
                i, t, r = np.argwhere(over)[0]
                raise ValueError(
                    f"count {Y.counts[i, t, r]:g} exceeds binomial n={n[i]:g} "
                    f"at neuron {i}, bin {t}, trial {r}"
                )


def poisson() -> ObservationModel:
    return ObservationModel("poisson")


def binomial(n) -> ObservationModel:
    return ObservationModel("binomial", n=n)


def negbinom(alpha: float = 1.0) -> ObservationModel:
    return ObservationModel("negbinom", alpha=alpha)


def make_model(kind: str, *, n=None, alpha: float | None = None, Y: CountDataset | None = None,
               shared_n: bool = False) -> ObservationModel:
    """Build a model by name; binomial ``n`` defaults to the observed maxima in ``Y``."""
    if kind == "binomial":
        if n is None:
            if Y is None:
                raise ValueError("binomial model needs n or data to infer it from")
            return binomial_from_counts(Y, shared=shared_n)
        return binomial(n)
    if kind == "negbinom":
        return negbinom(1.0 if alpha is None else alpha)
    if kind == "poisson":
        return poisson()
    raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}")


def binomial_from_counts(Y: CountDataset, shared: bool = False) -> ObservationModel:
    """Binomial model whose ``n`` is the largest count seen in a single bin."""
    per_neuron = np.maximum(np.ceil(Y.counts.max(axis=(1, 2))), 1).astype(int)
    if shared:
        return binomial((int(per_neuron.max()),))
    return binomial(tuple(per_neuron))


def rate(model: ObservationModel, eta) -> np.ndarray:
    """Expected count per bin.

    ``eta`` is either an ``(N, T)`` predictor matrix or a single neuron's
    predictors (binomial then needs a shared ``n``).
    """
    eta = np.asarray(eta, dtype=float)
    if model.kind == "binomial":
        if eta.ndim == 2:
            n = model.n_vector(eta.shape[0])[:, None]
        else:
            n = model.n_vector(1)[0] if len(model.n) == 1 else np.asarray(model.n, float)
        return n * expit(eta)
    return _clamped_exp(eta)


def _as_matrix(eta, N: int, T: int) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    if eta.size != N * T:
        raise ValueError(f"predictor has {eta.size} entries, expected N*T = {N * T}")
    return eta.reshape(N, T)


def exact_loglik(model: ObservationModel, Y: CountDataset, eta) -> float:
    """Exact log-likelihood summed over neurons, bins and trials.

    Includes all combinatorial constants, so values are proper log
    probabilities.
    """
    model.validate(Y)
    eta = _as_matrix(eta, Y.N, Y.T)[:, :, None]
    y = Y.counts
    if model.kind == "poisson":
        ll = y * eta - _clamped_exp(eta) - gammaln(y + 1)
    elif model.kind == "binomial":
        n = model.n_vector(Y.N)[:, None, None]
        ll = (gammaln(n + 1) - gammaln(y + 1) - gammaln(n - y + 1)
              + (y - n) * eta - n * _softplus(-eta))
    else:
        r = 1.0 / model.alpha
        la = math.log(model.alpha)
        ll = (gammaln(y + r) - gammaln(r) - gammaln(y + 1)
              + y * (eta + la) - (r + y) * _softplus(eta + la))
    return float(ll.sum())


def loglik_derivatives(model: ObservationModel, Y: CountDataset, eta) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Log-likelihood (without constants), gradient and negative curvature in ``eta``.

    Returns ``(ll, g, h)`` each of shape ``(N, T)``, already summed over
    trials; ``h >= 0`` for all three models.
    """
    eta = _as_matrix(eta, Y.N, Y.T)
    S, R = Y.summed, Y.R
    if model.kind == "poisson":
        lam = _clamped_exp(eta)
        return S * eta - R * lam, S - R * lam, R * lam
    if model.kind == "binomial":
        n = model.n_vector(Y.N)[:, None]
        s = expit(eta)
        return (S - R * n) * eta - R * n * _softplus(-eta), S - R * n * s, R * n * s * (1 - s)
    r = 1.0 / model.alpha
    z = eta + math.log(model.alpha)
    weight = R * r + S
    s = expit(z)
    return S * eta - weight * _softplus(z), S - weight * s, weight * s * (1 - s)


def nonlinear_term(model: ObservationModel) -> Callable:
    """The nonlinear term of the log-likelihood, with the sign used in the model tables."""
    if model.kind == "poisson":
        return np.exp
    if model.kind == "binomial":
        return lambda x: -_softplus(-np.asarray(x, dtype=float))
    la = math.log(model.alpha)
    return lambda x: _softplus(np.asarray(x, dtype=float) + la)


def approximated_term(model: ObservationModel) -> Callable:
    """Convex function whose quadratic fit enters PAL.

    Poisson ``exp(x)``, binomial ``log(1 + exp(-x))``, negative binomial
    ``log(1 + alpha exp(x))``. Each is subtracted (with a positive weight)
    from the log-likelihood, so the fitted ``a`` is positive.
    """
    if model.kind == "binomial":
        return lambda x: _softplus(-np.asarray(x, dtype=float))
    return nonlinear_term(model)


@dataclass(frozen=True)
class NeuronIntervals:
    intervals: tuple[Interval, ...]
    centers: np.ndarray

    def __len__(self):
        return len(self.intervals)


def select_intervals(model: ObservationModel, Y: CountDataset) -> NeuronIntervals:
    """Per-neuron approximation interval centred on the empirical mean predictor.

    Poisson and negative binomial centre on the log mean count; binomial on
    the logit of mean count / n. Zero (or saturated) neurons are clipped to a
    rate of one count in the whole recording.
    """
    floor = 1.0 / (Y.T * Y.R)
    mean = np.maximum(Y.mean_rates(), floor)
    if model.kind == "binomial":
        n = model.n_vector(Y.N)
        p = np.clip(mean / n, floor / n, 1.0 - floor / n)
        centers = logit(p)
    else:
        centers = np.log(mean)
    hw = HALF_WIDTH[model.kind]
    intervals = tuple(Interval(float(c - hw), float(c + hw)) for c in centers)
    return NeuronIntervals(intervals, np.asarray(centers, dtype=float))


def fit_neuron_quadratics(model: ObservationModel, intervals: NeuronIntervals,
                          grid_step: float = DEFAULT_GRID_STEP) -> list[QuadApprox]:
    f = approximated_term(model)
    cache: dict[Interval, QuadApprox] = {}
    out = []
    for iv in intervals.intervals:
        if iv not in cache:
            cache[iv] = fit_quadratic(f, iv, grid_step)
        out.append(cache[iv])
    return out


def quad_arrays(quads: Sequence[QuadApprox]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack per-neuron coefficients into ``(a, b, c)`` arrays."""
    coef = np.array([q.coefficients for q in quads], dtype=float).reshape(-1, 3)
    return coef[:, 0], coef[:, 1], coef[:, 2]
