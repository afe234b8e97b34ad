"""Least-squares quadratic approximations of scalar nonlinearities.

A nonlinearity ``f`` is replaced on an interval by ``a x**2 + b x + c``,
with coefficients chosen to minimise the squared error on a uniform grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

DEFAULT_GRID_STEP = 0.01


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError(f"interval bounds must be finite, got [{self.lo}, {self.hi}]")
        if not self.lo < self.hi:
            raise ValueError(f"interval requires lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)


@dataclass(frozen=True)
class QuadApprox:
    """Quadratic ``a x**2 + b x + c`` fitted on ``interval``."""

    a: float
    b: float
    c: float
    interval: Interval

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.a, self.b, self.c)):
            raise ValueError(f"non-finite quadratic coefficients {(self.a, self.b, self.c)}")

    @property
    def coefficients(self) -> tuple[float, float, float]:
        return (self.a, self.b, self.c)

    def __call__(self, x):
        return eval_quadratic(self, x)


def grid(interval: Interval, grid_step: float) -> np.ndarray:
    """Uniform grid ``lo, lo + dx, ...`` that always ends exactly at ``hi``."""
    if not grid_step > 0:
        raise ValueError(f"grid_step must be positive, got {grid_step}")
    n_steps = math.floor(interval.width / grid_step + 1e-9)
    pts = interval.lo + grid_step * np.arange(n_steps + 1)
    if interval.hi - pts[-1] > 1e-9 * max(1.0, abs(interval.hi)):
        pts = np.append(pts, interval.hi)
    else:
        pts[-1] = interval.hi
    return pts


def _evaluate(f: Callable, x: np.ndarray) -> np.ndarray:
    with np.errstate(all="ignore"):
        try:
            y = np.asarray(f(x), dtype=float)
        except TypeError:
            y = None
        if y is None or y.shape != x.shape:
            y = np.array([float(f(float(xi))) for xi in x])
    bad = ~np.isfinite(y)
    if bad.any():
        x_bad = float(x[np.argmax(bad)])
        raise ValueError(f"function is not finite at x={x_bad!r}")
    return y


def _solve3(A: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    # Gaussian elimination with partial pivoting on the 3x3 normal equations.
    M = np.column_stack([A.astype(float), rhs.astype(float)])
    scale = np.abs(A).max()
    for k in range(3):
        p = k + int(np.argmax(np.abs(M[k:, k])))
        if abs(M[p, k]) <= 1e-14 * scale:
            raise np.linalg.LinAlgError("singular normal equations")
        if p != k:
            M[[k, p]] = M[[p, k]]
        for r in range(k + 1, 3):
            M[r, k:] -= (M[r, k] / M[k, k]) * M[k, k:]
    sol = np.zeros(3)
    for k in (2, 1, 0):
        sol[k] = (M[k, 3] - M[k, k + 1:3] @ sol[k + 1:]) / M[k, k]
    return sol


def fit_quadratic(f: Callable, interval: Interval, grid_step: float = DEFAULT_GRID_STEP) -> QuadApprox:
    """Least-squares quadratic fit of ``f`` over a uniform grid on ``interval``.

    The normal equations are formed in the centred, rescaled variable
    ``u = (x - mid) / half`` (which keeps them well conditioned for intervals
    far from the origin) and the result is mapped back to the monomial basis
    in ``x``.

    Parameters
    ----------
    f : callable
        Scalar function; called on a numpy array of abscissae when possible.
    interval : Interval
    grid_step : float
        Grid resolution ``dx``; must be smaller than the interval width.

    Returns
    -------
    QuadApprox

    Raises
    ------
    ValueError
        If ``f`` is not finite somewhere on the grid, or the step is invalid.
    numpy.linalg.LinAlgError
        If the grid has fewer than three points.
    """
    if not 0 < grid_step < interval.width:
        raise ValueError(f"grid_step must lie in (0, {interval.width}), got {grid_step}")
    x = grid(interval, grid_step)
    if x.size < 3:
        raise np.linalg.LinAlgError(f"grid of {x.size} points cannot determine a quadratic")
    y = _evaluate(f, x)

    mid, half = interval.center, 0.5 * interval.width
    u = (x - mid) / half
    V = np.column_stack([u * u, u, np.ones_like(u)])
    alpha, beta, gamma = _solve3(V.T @ V, V.T @ y)

    # alpha u^2 + beta u + gamma with u = (x - mid) / half
    a = alpha / half**2
    b = beta / half - 2.0 * alpha * mid / half**2
    c = gamma - beta * mid / half + alpha * mid**2 / half**2
    return QuadApprox(float(a), float(b), float(c), interval)


def eval_quadratic(q: QuadApprox, x):
    return (q.a * x + q.b) * x + q.c


def max_abs_error(q: QuadApprox, f: Callable, grid_step: float = DEFAULT_GRID_STEP) -> float:
    """Largest ``|f(x) - q(x)|`` over the grid of the fitted interval."""
    x = grid(q.interval, grid_step)
    return float(np.max(np.abs(_evaluate(f, x) - eval_quadratic(q, x))))


def sum_squared_error(q: QuadApprox, f: Callable, grid_step: float = DEFAULT_GRID_STEP) -> float:
    x = grid(q.interval, grid_step)
    r = _evaluate(f, x) - eval_quadratic(q, x)
    return float(r @ r)
