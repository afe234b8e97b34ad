"""Closed-form PAL evidence for count-GPFA models.

With every neuron's nonlinear term replaced by its quadratic fit, the
log-joint is quadratic in the stacked latents ``x``:

    log p(y, x) ~ -1/2 x' (H + K^-1) x + v' x - 1/2 log|K| + const

so the latents integrate out exactly. Writing ``Sigma^-1 = H + K^-1`` and
``mu = Sigma v`` the log evidence is

    1/2 log|Sigma| + 1/2 mu' Sigma^-1 mu - 1/2 log|K|

with every term independent of ``W`` and the length scales dropped.
``H = W~' diag(h) W~`` where ``W~ = W kron I_T`` is never materialised: ``H``
is assembled from one ``P x P`` block per time bin.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Sequence

import jsonschema
import numpy as np
from scipy.linalg import block_diag, cho_solve, cholesky, solve_triangular

from .dataset import CountDataset
from .kernels import GpPrior, PriorFactorization, build_prior, se_gram
from .obs_models import (ObservationModel, fit_neuron_quadratics, quad_arrays,
                         select_intervals)
from .poly_approx import QuadApprox


class EvidenceError(np.linalg.LinAlgError):
    """The approximate posterior precision is not positive definite."""


@dataclass(frozen=True)
class ApproxPosterior:
    """Gaussian approximate posterior over stacked latents.

    ``cov_factor`` is a square root of the covariance (``Sigma = F F'``),
    not necessarily triangular; ``sigma_chol`` gives the Cholesky factor.
    """

    mu: np.ndarray
    log_evidence: float
    whitened_chol: np.ndarray  # Cholesky factor of B = I + L' H L
    prior_chol: np.ndarray  # block-diagonal L with K = L L'

    @property
    def cov_factor(self) -> np.ndarray:
        return solve_triangular(self.whitened_chol, self.prior_chol.T, lower=True).T

    @property
    def cov(self) -> np.ndarray:
        F = self.cov_factor
        return F @ F.T

    @property
    def sigma_chol(self) -> np.ndarray:
        return cholesky(self.cov, lower=True)


def _check_shapes(W: np.ndarray, Y: CountDataset, quads: Sequence[QuadApprox]) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if W.ndim != 2:
        raise ValueError(f"W must be an N x P matrix, got shape {W.shape}")
    if W.shape[0] != Y.N:
        raise ValueError(f"W has {W.shape[0]} rows but data has {Y.N} neurons")
    if len(quads) != Y.N:
        raise ValueError(f"got {len(quads)} quadratic fits for {Y.N} neurons")
    if not np.all(np.isfinite(W)):
        raise ValueError("W has non-finite entries")
    return W


def data_terms(model: ObservationModel, quads: Sequence[QuadApprox], Y: CountDataset
               ) -> tuple[np.ndarray, np.ndarray]:
    """Per-(neuron, bin) curvature weights and linear coefficients, summed over trials.

    Returns ``(h, u)`` of shape ``(N, T)`` such that ``H = W~' diag(h) W~``
    and ``v = W~' u``.
    """
    a, b, _ = quad_arrays(quads)
    a, b = a[:, None], b[:, None]
    S, R = Y.summed, Y.R
    if model.kind == "poisson":
        h = np.broadcast_to(2 * R * a, S.shape)
        u = S - R * b
    elif model.kind == "binomial":
        n = model.n_vector(Y.N)[:, None]
        h = np.broadcast_to(2 * R * n * a, S.shape)
        u = S - R * n - R * n * b
    else:
        r = 1.0 / model.alpha
        h = 2 * a * (R * r + S)
        u = S - S * b - R * r * b
    return np.array(h, dtype=float), np.asarray(u, dtype=float)


def _data_precision(W: np.ndarray, h: np.ndarray, T: int) -> np.ndarray:
    """Dense ``H = W~' diag(h) W~``: one ``P x P`` block per time bin."""
    P = W.shape[1]
    blocks = np.einsum("ij,it,ik->jkt", W, h, W)
    H = np.zeros((P * T, P * T))
    t = np.arange(T)
    for j in range(P):
        for k in range(P):
            H[j * T + t, k * T + t] = blocks[j, k]
    return H


def _precision(W: np.ndarray, h: np.ndarray, fact: PriorFactorization) -> np.ndarray:
    J = _data_precision(W, h, fact.T)
    T = fact.T
    for j, Kinv in enumerate(fact.inverse_blocks()):
        J[j * T:(j + 1) * T, j * T:(j + 1) * T] += Kinv
    return J


def assemble_precision(model: ObservationModel, W, quads: Sequence[QuadApprox],
                       prior_fact: PriorFactorization, Y: CountDataset) -> np.ndarray:
    """Dense ``Sigma^-1 = H + K^-1`` of size ``P*T``."""
    W = _check_shapes(W, Y, quads)
    if prior_fact.P != W.shape[1] or prior_fact.T != Y.T:
        raise ValueError(
            f"prior has P={prior_fact.P}, T={prior_fact.T}; W and data imply P={W.shape[1]}, T={Y.T}"
        )
    h, _ = data_terms(model, quads, Y)
    return _precision(W, h, prior_fact)


def assemble_linear(model: ObservationModel, W, quads: Sequence[QuadApprox],
                    Y: CountDataset) -> np.ndarray:
    """The vector ``v`` with ``mu = Sigma v``, latent-major."""
    W = _check_shapes(W, Y, quads)
    _, u = data_terms(model, quads, Y)
    return (W.T @ u).ravel()


class PalObjective:
    """Evidence as a function of ``(W, length_scales)`` for fixed data.

    Intervals, quadratic fits and the data-dependent weights are computed
    once; they do not depend on ``W`` or the length scales.
    """

    def __init__(self, model: ObservationModel, Y: CountDataset,
                 quads: Sequence[QuadApprox] | None = None, jitter: float = 1e-6):
        model.validate(Y)
        self.model = model
        self.Y = Y
        if quads is None:
            quads = fit_neuron_quadratics(model, select_intervals(model, Y))
        self.quads = list(quads)
        self.h, self.u = data_terms(model, self.quads, Y)
        self.jitter = jitter

    def prior(self, length_scales) -> GpPrior:
        return GpPrior(tuple(length_scales), self.Y.T, self.jitter)

    def posterior(self, W, length_scales=None, fact: PriorFactorization | None = None):
        """Approximate posterior and evidence, computed in whitened coordinates.

        With ``K = L L'`` (blockwise) and ``B = I + L' H L``:
        ``log|Sigma| - log|K| = -log|B|``, ``mu = L B^-1 L' v`` and
        ``mu' Sigma^-1 mu = v' mu``. No inverse of ``K`` is needed.
        """
        W = _check_shapes(W, self.Y, self.quads)
        if fact is None:
            fact = build_prior(self.prior(length_scales))
        if fact.P != W.shape[1]:
            raise ValueError(f"W has {W.shape[1]} columns but the prior has {fact.P} latents")
        P, T = fact.P, fact.T
        blocks = np.einsum("ij,it,ik->jkt", W, self.h, W)
        B = np.empty((P * T, P * T))
        for j in range(P):
            for k in range(j, P):
                Bjk = (fact.chols[j].T * blocks[j, k]) @ fact.chols[k]
                B[j * T:(j + 1) * T, k * T:(k + 1) * T] = Bjk
                B[k * T:(k + 1) * T, j * T:(j + 1) * T] = Bjk.T
        B[np.diag_indices_from(B)] += 1.0
        L = block_diag(*fact.chols)
        try:
            C = cholesky(B, lower=True)
        except np.linalg.LinAlgError:
            pivot = float(np.linalg.eigvalsh(B)[0]) - 1.0
            raise EvidenceError(
                f"posterior precision is not positive definite (most negative eigenvalue of the "
                f"whitened data precision {pivot:.3g})"
            ) from None
        v = (W.T @ self.u).ravel()
        beta = cho_solve((C, True), L.T @ v)
        mu = L @ beta
        value = -float(np.sum(np.log(np.diag(C)))) + 0.5 * float(v @ mu)
        return ApproxPosterior(mu, value, C, L), fact

    def __call__(self, W, length_scales) -> float:
        return self.posterior(W, length_scales)[0].log_evidence

    def value_and_grad(self, W, length_scales):
        """Evidence and its gradients w.r.t. ``W`` and ``log(length_scales)``."""
        post, fact = self.posterior(W, length_scales)
        W = np.asarray(W, dtype=float)
        P, T = W.shape[1], self.Y.T
        Sigma = post.cov
        M = Sigma + np.outer(post.mu, post.mu)
        mu = post.mu.reshape(P, T)
        M4 = M.reshape(P, T, P, T)
        t = np.arange(T)
        Mdiag = M4[:, t, :, t]  # (T, P, P): Mdiag[t, l, j] = M[(l,t),(j,t)]
        gW = self.u @ mu.T - np.einsum("it,il,tlj->ij", self.h, W, Mdiag)

        g_ell = np.empty(P)
        for j, ell in enumerate(fact.prior.length_scales):
            Kinv = fact.inverse_blocks()[j]
            Mjj = M4[j, :, j, :]
            A = Kinv @ Mjj @ Kinv - Kinv
            lag = t[:, None] - t[None, :]
            dK = se_gram(T, ell) * (lag * lag) / (ell * ell)
            g_ell[j] = 0.5 * float(np.sum(A * dK))
        return post.log_evidence, gW, g_ell


def evidence(model: ObservationModel, W, prior: GpPrior, Y: CountDataset,
             quads: Sequence[QuadApprox] | None = None) -> tuple[float, ApproxPosterior]:
    """PAL approximate log evidence and the Gaussian approximate posterior."""
    obj = PalObjective(model, Y, quads, jitter=prior.jitter)
    post, _ = obj.posterior(W, fact=build_prior(prior))
    return post.log_evidence, post


# -- hyperparameter export -------------------------------------------------

HYPER_SCHEMA = {
    "type": "object",
    "required": ["model", "W", "length_scales"],
    "properties": {
        "model": {"enum": ["binomial", "poisson", "negbinom"]},
        "n": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "alpha": {"type": "number", "exclusiveMinimum": 0},
        "W": {
            "type": "object",
            "required": ["rows", "cols", "data"],
            "properties": {
                "rows": {"type": "integer", "minimum": 1},
                "cols": {"type": "integer", "minimum": 1},
                "data": {"type": "array", "items": {"type": "number"}},
            },
        },
        "length_scales": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
    },
}


def hyperparameter_record(W, length_scales, model: ObservationModel) -> dict:
    W = np.asarray(W, dtype=float)
    rec = {"model": model.kind}
    if model.kind == "binomial":
        rec["n"] = [int(v) for v in model.n]
    if model.kind == "negbinom":
        rec["alpha"] = float(model.alpha)
    rec["W"] = {"rows": int(W.shape[0]), "cols": int(W.shape[1]),
                "data": [float(v) for v in W.ravel()]}
    rec["length_scales"] = [float(v) for v in length_scales]
    return rec


def parse_hyperparameters(rec: dict) -> tuple[np.ndarray, tuple[float, ...], ObservationModel]:
    jsonschema.validate(rec, HYPER_SCHEMA)
    shape = (rec["W"]["rows"], rec["W"]["cols"])
    data = rec["W"]["data"]
    if len(data) != shape[0] * shape[1]:
        raise ValueError(f"W data has {len(data)} entries, header says {shape}")
    if len(rec["length_scales"]) != shape[1]:
        raise ValueError("number of length scales does not match the columns of W")
    W = np.array(data, dtype=float).reshape(shape)
    model = ObservationModel(rec["model"], n=rec.get("n"), alpha=rec.get("alpha"))
    return W, tuple(float(v) for v in rec["length_scales"]), model


def export_hyperparameters(W, prior, model: ObservationModel, path: str | os.PathLike | None = None) -> dict:
    """Serialise fitted loadings, length scales and model parameters.

    ``prior`` may be a :class:`GpPrior` or a sequence of length scales.
    Floats are written with ``repr`` precision, so importing reproduces the
    values bit for bit.
    """
    ls = prior.length_scales if isinstance(prior, GpPrior) else prior
    rec = hyperparameter_record(W, ls, model)
    if path is not None:
        with open(path, "w") as fh:
            json.dump(rec, fh, indent=2)
            fh.write("\n")
    return rec


def import_hyperparameters(path: str | os.PathLike):
    with open(path) as fh:
        rec = json.load(fh)
    if "hyperparameters" in rec:
        rec = rec["hyperparameters"]
    return parse_hyperparameters(rec)
