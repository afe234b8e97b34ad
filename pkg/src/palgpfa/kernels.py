"""Squared-exponential GP priors over stacked latent time series.

Latents are stacked latent-major: ``x[j * T + t] = X[j, t]``. The prior
covariance is block diagonal with one ``T x T`` block per latent and is
never formed densely.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

DEFAULT_JITTER = 1e-6
MAX_JITTER = 1e-2


def se_kernel(t, t_prime, length_scale):
    """``exp(-(t - t')**2 / (2 l**2))``; broadcasts over array inputs."""
    d = np.subtract(t, t_prime)
    return np.exp(-0.5 * d * d / (length_scale * length_scale))


def se_gram(T: int, length_scale: float) -> np.ndarray:
    lag = np.arange(T)
    return se_kernel(lag[:, None], lag[None, :], length_scale)


@dataclass(frozen=True)
class GpPrior:
    length_scales: tuple[float, ...]
    T: int
    jitter: float = DEFAULT_JITTER

    def __post_init__(self):
        object.__setattr__(self, "length_scales", tuple(float(v) for v in self.length_scales))
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if not all(math.isfinite(v) and v > 0 for v in self.length_scales):
            raise ValueError(f"length scales must be positive, got {self.length_scales}")
        if self.jitter < 0:
            raise ValueError(f"jitter must be >= 0, got {self.jitter}")

    @property
    def P(self) -> int:
        return len(self.length_scales)


@dataclass(frozen=True)
class PriorFactorization:
    """Per-latent Cholesky factors of ``K_j + jitter_j I``."""

    prior: GpPrior
    chols: tuple[np.ndarray, ...]
    jitters: tuple[float, ...]
    logdet: float
    _inverses: list = field(default_factory=list, repr=False, compare=False)

    @property
    def P(self) -> int:
        return len(self.chols)

    @property
    def T(self) -> int:
        return self.prior.T

    def block(self, j: int) -> np.ndarray:
        """Covariance block ``K_j`` including its jitter."""
        L = self.chols[j]
        return L @ L.T

    def inverse_blocks(self) -> list[np.ndarray]:
        """Explicit ``K_j^{-1}`` for each latent (computed once, cached)."""
        if not self._inverses:
            eye = np.eye(self.T)
            for L in self.chols:
                Kinv = cho_solve((L, True), eye)
                self._inverses.append(0.5 * (Kinv + Kinv.T))
        return self._inverses


def build_prior(prior: GpPrior) -> PriorFactorization:
    """Factorise the block-diagonal SE prior.

    Jitter starts at ``prior.jitter`` and is escalated tenfold (up to 1e-2)
    whenever a block fails to factorise.
    """
    chols, jitters, logdet = [], [], 0.0
    for j, ell in enumerate(prior.length_scales):
        K = se_gram(prior.T, ell)
        jit = prior.jitter
        while True:
            try:
                L = cholesky(K + jit * np.eye(prior.T), lower=True)
                if np.all(np.diag(L) > 0):
                    break
            except np.linalg.LinAlgError:
                pass
            jit = max(10.0 * jit, DEFAULT_JITTER)
            if jit > MAX_JITTER * (1 + 1e-12):
                raise np.linalg.LinAlgError(
                    f"prior block for latent {j} (length scale {ell}) is not positive definite "
                    f"even with jitter {MAX_JITTER}"
                )
        chols.append(L)
        jitters.append(jit)
        logdet += 2.0 * float(np.sum(np.log(np.diag(L))))
    return PriorFactorization(prior, tuple(chols), tuple(jitters), logdet)


def prior_solve(fact: PriorFactorization, v: np.ndarray) -> np.ndarray:
    """``K^{-1} v`` by two triangular solves per block."""
    v = np.asarray(v, dtype=float)
    if v.shape != (fact.P * fact.T,):
        raise ValueError(f"expected vector of length {fact.P * fact.T}, got shape {v.shape}")
    out = np.empty_like(v)
    T = fact.T
    for j, L in enumerate(fact.chols):
        z = solve_triangular(L, v[j * T:(j + 1) * T], lower=True)
        out[j * T:(j + 1) * T] = solve_triangular(L.T, z, lower=False)
    return out


def prior_matvec(fact: PriorFactorization, v: np.ndarray) -> np.ndarray:
    """``K v`` for a stacked vector."""
    v = np.asarray(v, dtype=float)
    T = fact.T
    return np.concatenate([fact.block(j) @ v[j * T:(j + 1) * T] for j in range(fact.P)])
