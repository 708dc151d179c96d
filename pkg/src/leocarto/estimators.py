"""Weighted least squares by damped Gauss-Newton, Huber IRLS, weighted means."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .weights import NORM_TOL, UnnormalizedWeightsError, WeightVector


class IllConditionedError(np.linalg.LinAlgError):
    pass


@dataclass
class WlsProblem:
    """Nonlinear WLS: minimise (y - h(x))^T W (y - h(x)).

    ``model(x)`` returns ``(h(x), J(x))``. ``weights`` is an N-vector (diagonal
    W) or an N x N PSD matrix.
    """

    y: np.ndarray
    model: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
    init: np.ndarray
    weights: np.ndarray | None = None
    max_iters: int = 100
    tol: float = 1e-8
    ridge: float = 0.0

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.init = np.asarray(self.init, dtype=float)
        if self.weights is None:
            self.weights = np.ones_like(self.y)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.ndim == 1 and np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")

    def W(self) -> np.ndarray:
        return np.diag(self.weights) if self.weights.ndim == 1 else self.weights


@dataclass
class WlsResult:
    estimate: np.ndarray
    iters: int
    final_residual: float
    converged: bool
    gradient_norm: float = np.nan
    diagnostics: dict = field(default_factory=dict)


def range_model(sat_pos):
    """Range measurement function and Jacobian for static satellites."""
    S = np.atleast_2d(np.asarray(sat_pos, dtype=float))

    def model(x):
        d = x[None, :] - S
        rho = np.linalg.norm(d, axis=1)
        return rho, d / rho[:, None]

    return model


def _cost(p: WlsProblem, W, x):
    h, _ = p.model(x)
    r = p.y - h
    return float(r @ W @ r)


def gauss_newton_solve(p: WlsProblem) -> WlsResult:
    """Gauss-Newton with Levenberg damping that doubles on cost increase.

    Damping starts at ``ridge`` (or 0) and is relaxed after every accepted
    step. Non-convergence is reported through ``converged``; only a singular
    normal matrix with nothing to regularise it raises.
    """
    W = p.W()
    x = p.init.astype(float).copy()
    lam = p.ridge
    cost = _cost(p, W, x)
    converged = False
    it = 0
    for it in range(1, p.max_iters + 1):
        h, J = p.model(x)
        r = p.y - h
        A = J.T @ W @ J
        g = J.T @ W @ r
        d = x.size
        while True:
            M = A + lam * np.eye(d)
            if np.linalg.matrix_rank(M) < d:
                if lam == 0.0 and p.ridge == 0.0:
                    raise IllConditionedError("singular normal equations; set ridge > 0")
                lam = max(2 * lam, 1e-12 * max(np.trace(A), 1.0))
                continue
            step = np.linalg.solve(M, g)
            new_cost = _cost(p, W, x + step)
            if new_cost <= cost * (1 + 1e-12) or np.linalg.norm(step) < p.tol:
                break
            lam = max(2 * lam, 1e-9 * max(np.trace(A), 1.0))
            if lam > 1e12 * max(np.trace(A), 1.0):
                step = np.zeros(d)
                new_cost = cost
                break
        x = x + step
        cost = min(cost, new_cost)
        lam = max(lam / 4, p.ridge)
        if np.linalg.norm(step) < p.tol:
            converged = True
            break
    h, J = p.model(x)
    r = p.y - h
    gnorm = float(np.linalg.norm(J.T @ W @ r))
    rank = int(np.linalg.matrix_rank(J.T @ W @ J))
    if rank < x.size:
        converged = False
    return WlsResult(
        estimate=x,
        iters=it,
        final_residual=float(np.sqrt(max(r @ W @ r, 0.0))),
        converged=converged,
        gradient_norm=gnorm,
        diagnostics={"jacobian_rank": rank, "damping": lam},
    )


def huber_weights(residuals, delta: float) -> np.ndarray:
    if delta <= 0:
        raise ValueError("delta must be positive")
    a = np.abs(np.asarray(residuals, dtype=float))
    return np.where(a <= delta, 1.0, delta / np.maximum(a, delta))


def huber_irls(
    p: WlsProblem, delta: float, scale: float = 1.0, max_outer: int = 50, tol: float = 1e-10
) -> WlsResult:
    """Iteratively reweighted LS for the Huber loss on ``residual / scale``."""
    base = p.weights if p.weights.ndim == 1 else np.diag(p.weights)
    x = p.init.copy()
    res = None
    for outer in range(1, max_outer + 1):
        h, _ = p.model(x)
        w = huber_weights((p.y - h) / scale, delta)
        sub = WlsProblem(p.y, p.model, x, base * w, p.max_iters, p.tol, p.ridge)
        res = gauss_newton_solve(sub)
        moved = np.linalg.norm(res.estimate - x)
        x = res.estimate
        if moved < tol:
            break
    res.diagnostics["outer_iters"] = outer
    h, _ = p.model(x)
    res.diagnostics["huber_weights"] = huber_weights((p.y - h) / scale, delta)
    return res


def weighted_mean(weights: WeightVector | Sequence[float], values):
    """Convex combination of ``values`` (scalars or rows) under normalized weights."""
    w = weights.w if isinstance(weights, WeightVector) else np.asarray(weights, dtype=float)
    if np.any(w < 0) or abs(w.sum() - 1.0) > NORM_TOL:
        raise UnnormalizedWeightsError("weights must be nonnegative and sum to 1")
    v = np.asarray(values, dtype=float)
    if v.shape[0] != w.shape[0]:
        raise ValueError("weights and values differ in length")
    out = np.tensordot(w, v, axes=(0, 0))
    return float(out) if np.ndim(out) == 0 else out
