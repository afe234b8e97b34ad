"""Fitting loadings and length scales by maximising PAL evidence, and MAP latents.

Parameters are packed as ``[W.ravel(), log(length_scales), log(alpha)?]``
and ascended with BFGS plus a backtracking Armijo line search.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import cho_solve, cholesky

from .dataset import CountDataset
from .kernels import GpPrior, PriorFactorization, build_prior
from .obs_models import ObservationModel, loglik_derivatives, rate
from .pal_core import PalObjective, _precision

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class FitConfig:
    max_iters: int = 500
    tol: float = 1e-6
    restarts: int = 1
    seed: int = 0
    optimize_alpha: bool = False
    finite_diff_step: float = 1e-5
    gradient: str = "analytic"  # or "fd"
    init_scale: float = 0.1
    patience: int = 3

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if not self.finite_diff_step > 0:
            raise ValueError("finite_diff_step must be > 0")
        if self.gradient not in ("analytic", "fd"):
            raise ValueError(f"gradient must be 'analytic' or 'fd', got {self.gradient!r}")


@dataclass(frozen=True)
class FitResult:
    W: np.ndarray
    length_scales: tuple[float, ...]
    alpha: float | None
    final_evidence: float
    iterations: int
    converged: bool
    restart_evidences: list[float]
    model: ObservationModel
    history: list[float] = field(default_factory=list, repr=False)
    restart_errors: list[str | None] = field(default_factory=list)

    def prior(self, T: int, jitter: float = 1e-6) -> GpPrior:
        return GpPrior(self.length_scales, T, jitter)

    def to_dict(self) -> dict:
        return {
            "W": {"rows": int(self.W.shape[0]), "cols": int(self.W.shape[1]),
                  "data": [float(v) for v in self.W.ravel()]},
            "length_scales": [float(v) for v in self.length_scales],
            "alpha": None if self.alpha is None else float(self.alpha),
            "final_evidence": float(self.final_evidence),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "restart_evidences": [float(v) for v in self.restart_evidences],
            "restart_errors": list(self.restart_errors),
        }


# -- parameter packing ------------------------------------------------------

def pack(W, length_scales, alpha: float | None = None) -> np.ndarray:
    parts = [np.ravel(W), np.log(np.asarray(length_scales, dtype=float))]
    if alpha is not None:
        parts.append([math.log(alpha)])
    return np.concatenate(parts)


def unpack(theta, N: int, P: int, has_alpha: bool = False):
    theta = np.asarray(theta, dtype=float)
    W = theta[:N * P].reshape(N, P)
    ls = np.exp(theta[N * P:N * P + P])
    alpha = float(np.exp(theta[N * P + P])) if has_alpha else None
    return W, ls, alpha


class PackedEvidence:
    """Evidence as a function of the packed parameter vector.

    When ``optimize_alpha`` is set the negative-binomial dispersion is the
    last coordinate; quadratic fits are recomputed per distinct alpha.
    """

    def __init__(self, model: ObservationModel, Y: CountDataset, P: int,
                 optimize_alpha: bool = False, fd_step: float = 1e-5, jitter: float = 1e-6):
        if optimize_alpha and model.kind != "negbinom":
            raise ValueError("alpha can only be optimised for the negbinom model")
        self.model, self.Y, self.P = model, Y, P
        self.has_alpha = optimize_alpha
        self.fd_step = fd_step
        self.jitter = jitter
        self._objectives: dict[float, PalObjective] = {}

    @property
    def size(self) -> int:
        return self.Y.N * self.P + self.P + int(self.has_alpha)

    def objective(self, alpha: float | None = None) -> PalObjective:
        key = alpha if self.has_alpha else None
        if key not in self._objectives:
            model = self.model.with_alpha(alpha) if self.has_alpha else self.model
            if len(self._objectives) > 64:
                self._objectives.clear()
            self._objectives[key] = PalObjective(model, self.Y, jitter=self.jitter)
        return self._objectives[key]

    def __call__(self, theta) -> float:
        W, ls, alpha = unpack(theta, self.Y.N, self.P, self.has_alpha)
        return self.objective(alpha)(W, ls)

    def value_and_grad(self, theta):
        W, ls, alpha = unpack(theta, self.Y.N, self.P, self.has_alpha)
        value, gW, gl = self.objective(alpha).value_and_grad(W, ls)
        grad = [gW.ravel(), gl]
        if self.has_alpha:
            e = np.zeros(self.size)
            e[-1] = self.fd_step
            grad.append([(self(theta + e) - self(theta - e)) / (2 * self.fd_step)])
        return value, np.concatenate(grad)


def evidence_gradient_fd(fun: Callable[[np.ndarray], float], params, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of ``fun`` at ``params``."""
    if not step > 0:
        raise ValueError("finite-difference step must be > 0")
    params = np.asarray(params, dtype=float)
    grad = np.empty_like(params)
    for k in range(params.size):
        e = np.zeros_like(params)
        e[k] = step
        grad[k] = (fun(params + e) - fun(params - e)) / (2 * step)
    return grad


# -- quasi-Newton ascent ----------------------------------------------------

@dataclass
class _AscentResult:
    theta: np.ndarray
    value: float
    iterations: int
    converged: bool
    history: list


def _safe(fg, theta):
    try:
        value, grad = fg(theta)
    except (np.linalg.LinAlgError, ValueError, FloatingPointError):
        return -np.inf, None
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        return -np.inf, None
    return value, grad


def bfgs_ascent(fg: Callable, theta0, max_iters: int = 500, tol: float = 1e-6,
                patience: int = 3, c1: float = 1e-4, max_backtracks: int = 40) -> _AscentResult:
    """Maximise ``f`` given ``fg(theta) -> (f, grad)``.

    Every accepted step satisfies the Armijo condition, so the recorded
    values never decrease. Converged means the relative change stayed
    below ``tol`` for ``patience`` consecutive iterations.
    """
    theta = np.array(theta0, dtype=float)
    f, g = _safe(fg, theta)
    if g is None:
        raise np.linalg.LinAlgError("objective is not finite at the initial point")
    n = theta.size
    Hinv = np.eye(n)
    scaled = False
    history = [f]
    small = 0
    for it in range(1, max_iters + 1):
        d = Hinv @ g
        slope = float(g @ d)
        if slope <= 0 or not np.isfinite(slope):
            Hinv, scaled = np.eye(n), False
            d, slope = g.copy(), float(g @ g)
        step = 1.0 if scaled else min(1.0, 1.0 / max(np.max(np.abs(g)), 1e-12))
        accepted = False
        for _ in range(max_backtracks):
            cand = theta + step * d
            f_new, g_new = _safe(fg, cand)
            if g_new is not None and f_new >= f + c1 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if scaled:
                # stale curvature; retry once along the gradient
                Hinv, scaled = np.eye(n), False
                continue
            return _AscentResult(theta, f, it, small >= 1, history)

        s = cand - theta
        y = g - g_new  # gradient change of -f
        sy = float(s @ y)
        if sy > 1e-12 * float(np.sqrt((s @ s) * (y @ y))):
            if not scaled:
                Hinv = np.eye(n) * (sy / float(y @ y))
                scaled = True
            rho = 1.0 / sy
            Hy = Hinv @ y
            Hinv = (Hinv - rho * (np.outer(s, Hy) + np.outer(Hy, s))
                    + (rho * rho * float(y @ Hy) + rho) * np.outer(s, s))

        rel = abs(f_new - f) / max(abs(f), 1.0)
        theta, f, g = cand, f_new, g_new
        history.append(f)
        small = small + 1 if rel < tol else 0
        if small >= patience:
            return _AscentResult(theta, f, it, True, history)
    return _AscentResult(theta, f, max_iters, False, history)


def initial_params(N: int, P: int, T: int, rng: np.random.Generator, scale: float = 0.1,
                   alpha: float | None = None) -> np.ndarray:
    """Loadings ``scale * N(0, 1)``, length scales ``T / 10``."""
    W = scale * rng.standard_normal((N, P))
    return pack(W, np.full(P, max(T / 10.0, 1.0)), alpha)


def fit(Y: CountDataset, P: int, model: ObservationModel, cfg: FitConfig = FitConfig(),
        init: np.ndarray | None = None) -> FitResult:
    """Maximise PAL evidence over loadings and log length scales.

    Runs ``cfg.restarts`` independent initialisations (one RNG stream each,
    spawned from ``cfg.seed``) and keeps the best. A restart whose evidence
    cannot be evaluated is recorded and skipped.
    """
    if P < 1 or P >= Y.N:
        raise ValueError(f"need 1 <= P < N, got P={P}, N={Y.N}")
    model.validate(Y)
    packed = PackedEvidence(model, Y, P, cfg.optimize_alpha, cfg.finite_diff_step)
    if cfg.gradient == "fd":
        def fg(theta):
            return packed(theta), evidence_gradient_fd(packed, theta, cfg.finite_diff_step)
    else:
        fg = packed.value_and_grad

    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)
    best, values, errors = None, [], []
    for r, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        alpha0 = model.alpha if cfg.optimize_alpha else None
        theta0 = initial_params(Y.N, P, Y.T, rng, cfg.init_scale, alpha0)
        if init is not None and r == 0:
            theta0 = np.asarray(init, dtype=float)
        try:
            res = bfgs_ascent(fg, theta0, cfg.max_iters, cfg.tol, cfg.patience)
        except (np.linalg.LinAlgError, ValueError) as exc:
            log.warning("restart %d failed: %s", r, exc)
            values.append(float("-inf"))
            errors.append(str(exc))
            continue
        log.info("restart %d: evidence %.6g after %d iterations", r, res.value, res.iterations)
        values.append(float(res.value))
        errors.append(None)
        if best is None or res.value > best.value:
            best = res
    if best is None:
        raise ConvergenceError(f"all {cfg.restarts} restarts failed: {errors}")

    W, ls, alpha = unpack(best.theta, Y.N, P, cfg.optimize_alpha)
    if model.kind == "negbinom" and alpha is None:
        alpha = model.alpha
    fitted_model = model.with_alpha(alpha) if cfg.optimize_alpha else model
    return FitResult(W, tuple(float(v) for v in ls), alpha, float(best.value), best.iterations,
                     best.converged, values, fitted_model, best.history, errors)


# -- MAP latents --------------------------------------------------------------

def log_posterior(Y: CountDataset, W, fact: PriorFactorization, model: ObservationModel, x):
    """Exact log conditional posterior (up to constants), its gradient and negative Hessian."""
    W = np.asarray(W, dtype=float)
    P, T = W.shape[1], Y.T
    X = np.asarray(x, dtype=float).reshape(P, T)
    ll, g, h = loglik_derivatives(model, Y, W @ X)
    Kinv_x = np.concatenate([fact.inverse_blocks()[j] @ X[j] for j in range(P)])
    x = X.ravel()
    value = float(ll.sum()) - 0.5 * float(x @ Kinv_x)
    grad = (W.T @ g).ravel() - Kinv_x
    neg_hess = _precision(W, h, fact)
    return value, grad, neg_hess


def _newton_map(Y, W, fact, model, x, max_steps, gtol):
    f, g, A = log_posterior(Y, W, fact, model, x)
    gnorm = float(np.max(np.abs(g)))
    for steps in range(max_steps + 1):
        if gnorm < gtol:
            return x, A, steps
        if steps == max_steps:
            break
        d = cho_solve((cholesky(A, lower=True), True), g)
        t = 1.0
        while t >= 1e-10:
            xn = x + t * d
            fn, gn, An = log_posterior(Y, W, fact, model, xn)
            gn_norm = float(np.max(np.abs(gn)))
            # near the mode f is flat to rounding; a smaller gradient is progress
            if fn >= f + 1e-4 * t * float(g @ d) or (fn >= f - 1e-12 * abs(f) and gn_norm < gnorm):
                break
            t *= 0.5
        else:
            if gnorm < gtol * (1.0 + abs(f)):
                return x, A, steps
            break
        x, f, g, A, gnorm = xn, fn, gn, An, gn_norm
    if gnorm < gtol * (1.0 + abs(f)):
        # rounding floor of an ill-conditioned prior
        return x, A, steps
    raise ConvergenceError(f"Newton did not converge in {max_steps} steps; gradient norm {gnorm:.3g}")


def map_latents(Y: CountDataset, W, prior: GpPrior, model: ObservationModel,
                x0=None, max_steps: int = 100, gtol: float = 1e-6, return_steps: bool = False):
    """Mode of the exact conditional posterior over latents, by damped Newton.

    Starts from the PAL posterior mean unless ``x0`` is given. Returns the
    mode (latent-major, length ``P*T``) and the negative Hessian there; the
    infinity norm of the gradient at the mode is below ``gtol``, or below
    ``gtol * (1 + |objective|)`` when rounding stops further progress.
    """
    W = np.asarray(W, dtype=float)
    model.validate(Y)
    fact = build_prior(prior)
    if x0 is None:
        post, _ = PalObjective(model, Y, jitter=prior.jitter).posterior(W, fact=fact)
        x0 = post.mu
    x, A, steps = _newton_map(Y, W, fact, model, np.array(x0, dtype=float), max_steps, gtol)
    if return_steps:
        return x, A, steps
    return x, A


def reconstruct_rates(W, x, model: ObservationModel) -> np.ndarray:
    """Rates ``(N, T)`` implied by loadings and stacked latents."""
    W = np.asarray(W, dtype=float)
    X = np.asarray(x, dtype=float).reshape(W.shape[1], -1)
    return rate(model, W @ X)
