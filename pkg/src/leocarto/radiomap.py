"""Radio-map reconstruction from sparse samples.

Classical interpolators (IDW, Gaussian NW, simple kriging), reliability-aware
reweighting, a synthetic smooth field generator, and a trainable attention
reconstructor whose gradients are derived by hand.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from . import attention
from .estimators import weighted_mean
from .optim import DivergenceError, make_optimizer
from .weights import Provenance, WeightVector

EXACT_HIT_TOL = 1e-9


class ConditioningError(LinAlgError):
    pass


@dataclass
class SampleSet:
    locations: np.ndarray
    values: np.ndarray
    reliability: np.ndarray | None = None

    def __post_init__(self):
        self.locations = np.atleast_2d(np.asarray(self.locations, dtype=float))
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.locations.shape[0] != self.values.shape[0]:
            raise ValueError("locations and values differ in length")
        if self.values.size == 0:
            raise ValueError("need at least one sample")
        if self.reliability is not None:
            self.reliability = np.asarray(self.reliability, dtype=float).reshape(-1)

    def __len__(self):
        return self.values.size


@dataclass
class RadioMapGrid:
    """Field values on cell centers; ``values[i, j]`` sits at (xs[i], ys[j])."""

    extent: tuple[float, float, float, float]
    resolution: tuple[int, int]
    values: np.ndarray

    def __post_init__(self):
        nx, ny = self.resolution
        if nx < 2 or ny < 2:
            raise ValueError("grid needs at least 2 cells per axis")
        self.values = np.asarray(self.values, dtype=float).reshape(nx, ny)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid values must be finite")

    @staticmethod
    def cell_centers(extent, resolution):
        x0, x1, y0, y1 = extent
        nx, ny = resolution
        xs = x0 + (np.arange(nx) + 0.5) * (x1 - x0) / nx
        ys = y0 + (np.arange(ny) + 0.5) * (y1 - y0) / ny
        return xs, ys

    @staticmethod
    def points(extent, resolution) -> np.ndarray:
        xs, ys = RadioMapGrid.cell_centers(extent, resolution)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([X.ravel(), Y.ravel()], axis=1)

    @classmethod
    def from_function(cls, fn, extent, resolution) -> "RadioMapGrid":
        pts = cls.points(extent, resolution)
        return cls(tuple(extent), tuple(resolution), np.asarray(fn(pts)).reshape(resolution))


def _dists(query, locations):
    return np.linalg.norm(locations - np.asarray(query, dtype=float)[None, :], axis=1)


# -- direct interpolation -----------------------------------------------


def idw_weights(query, s: SampleSet, p: float = 2.0) -> WeightVector:
    """Normalized inverse-distance weights; one-hot on an exact sample hit."""
    if p <= 0:
        raise ValueError("exponent must be positive")
    d = _dists(query, s.locations)
    hit = d <= EXACT_HIT_TOL
    if hit.any():
        w = np.zeros_like(d)
        w[np.argmax(hit)] = 1.0
        return WeightVector(w, Provenance.IDW)
    logw = -p * np.log(d)
    return WeightVector(attention.softmax(logw), Provenance.IDW)


def idw(query, s: SampleSet, p: float = 2.0) -> float:
    return weighted_mean(idw_weights(query, s, p), s.values)


def reliability_weights(base: WeightVector, values, beta: float) -> WeightVector:
    """Rescale base weights by exp(-beta |y_i - median(y)|) and renormalize."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    v = np.asarray(values, dtype=float)
    dev = np.abs(v - np.median(v))
    logw = np.log(np.maximum(base.w, 1e-300)) - beta * dev
    logw[base.w == 0] = -np.inf
    return WeightVector(attention.softmax(logw), Provenance.RELIABILITY)


def solve_reliability_beta(base: WeightVector, values, index: int, target: float, lo=0.0, hi=5.0, tol=1e-12):
    """Bisection for beta such that the reweighted ``index`` weight equals ``target``."""

    def f(b):
        return reliability_weights(base, values, b).w[index] - target

    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        raise ValueError("target weight is not bracketed by [lo, hi]")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0 or hi - lo < tol:
            break
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def nw_interp(query, s: SampleSet, bandwidth: float) -> float:
    return attention.nw_estimate(query, s.locations, s.values, bandwidth)


def interpolate_grid(method: Callable, s: SampleSet, extent, resolution, **kw) -> RadioMapGrid:
    pts = RadioMapGrid.points(extent, resolution)
    vals = np.array([method(q, s, **kw) for q in pts])
    return RadioMapGrid(tuple(extent), tuple(resolution), vals.reshape(resolution))


# -- kriging --------------------------------------------------------------


def se_cov(A, B, variance, lengthscale):
    d2 = ((np.asarray(A)[:, None, :] - np.asarray(B)[None, :, :]) ** 2).sum(-1)
    return variance * np.exp(-d2 / (2.0 * lengthscale**2))


def kriging(query, s: SampleSet, mean: float, cov: tuple[float, float], noise_var: float = 0.0):
    """Simple kriging with squared-exponential covariance.

    Returns ``(estimate, predictive_variance)``.
    """
    var, ell = cov
    if var <= 0 or ell <= 0 or noise_var < 0:
        raise ValueError("covariance parameters must be positive")
    q = np.atleast_2d(np.asarray(query, dtype=float))
    K = se_cov(s.locations, s.locations, var, ell) + noise_var * np.eye(len(s))
    try:
        cf = cho_factor(K, lower=True)
    except LinAlgError as exc:
        raise ConditioningError("kriging covariance is not positive definite") from exc
    k = se_cov(s.locations, q, var, ell)[:, 0]
    est = mean + k @ cho_solve(cf, s.values - mean)
    pv = var - k @ cho_solve(cf, k)
    return float(est), float(max(pv, 0.0))


# -- synthetic field -----------------------------------------------------


@dataclass
class Bump:
    center: tuple[float, float]
    amplitude: float
    width: float

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("bump width must be positive")


@dataclass
class FieldSpec:
    bumps: list[Bump] = field(default_factory=list)
    trend: tuple[float, float] = (0.0, 0.0)
    offset: float = 0.0

    def evaluate(self, pts) -> np.ndarray:
        P = np.atleast_2d(np.asarray(pts, dtype=float))
        out = self.offset + P @ np.asarray(self.trend, dtype=float)
        for b in self.bumps:
            d2 = ((P - np.asarray(b.center)) ** 2).sum(axis=1)
            out = out + b.amplitude * np.exp(-d2 / (2.0 * b.width**2))
        return out

    @classmethod
    def random(cls, rng, n_bumps=3, amp=(0.5, 1.0), width=(0.08, 0.2), trend=0.1, margin=0.15):
        bumps = [
            Bump(tuple(rng.uniform(margin, 1 - margin, 2)), float(rng.uniform(*amp)), float(rng.uniform(*width)))
            for _ in range(n_bumps)
        ]
        th = rng.uniform(0, 2 * np.pi)
        return cls(bumps, (trend * np.cos(th), trend * np.sin(th)))


def gen_field(spec: FieldSpec, extent=(0.0, 1.0, 0.0, 1.0), resolution=(50, 50)):
    """Grid of ``spec`` at cell centers plus the closed-form evaluator."""
    return RadioMapGrid.from_function(spec.evaluate, extent, resolution), spec.evaluate


# -- learnable attention reconstructor ------------------------------------


@dataclass
class AttnRemParams:
    """Scorer a([q, x_i, y_i]) = w2 . tanh(W1 [q, x_i, y_i] + b1).

    Predictor f(q, m) = skip * m + v2 . tanh(V1 [q, m] + c1) + c2, where m is
    the attention-aggregated sample value.
    """

    W1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    V1: np.ndarray
    c1: np.ndarray
    v2: np.ndarray
    skip: np.ndarray
    c2: np.ndarray

    @classmethod
    def init(cls, rng, scorer_width=32, predictor_width=16, dim=2, head_scale=0.1):
        d_in = 2 * dim + 1
        return cls(
            W1=rng.standard_normal((d_in, scorer_width)) / np.sqrt(d_in),
            b1=np.zeros(scorer_width),
            w2=rng.standard_normal(scorer_width) / np.sqrt(scorer_width),
            V1=rng.standard_normal((dim + 1, predictor_width)) / np.sqrt(dim + 1),
            c1=np.zeros(predictor_width),
            v2=head_scale * rng.standard_normal(predictor_width) / np.sqrt(predictor_width),
            skip=np.ones(1),
            c2=np.zeros(1),
        )

    def as_dict(self) -> dict:
        return dict(vars(self))

    @classmethod
    def from_dict(cls, d) -> "AttnRemParams":
        return cls(**{k: np.array(v, dtype=float) for k, v in d.items()})


def _attn_rem_forward(Q, s: SampleSet, p: AttnRemParams):
    dim = s.locations.shape[1]
    W1q, W1x, W1y = p.W1[:dim], p.W1[dim : 2 * dim], p.W1[2 * dim]
    pre = (Q @ W1q)[:, None, :] + (s.locations @ W1x + s.values[:, None] * W1y + p.b1)[None]
    H = np.tanh(pre)  # (B, N, width)
    e = H @ p.w2
    alpha = attention.softmax(e)
    agg = alpha @ s.values
    U = np.concatenate([Q, agg[:, None]], axis=1)
    Hp = np.tanh(U @ p.V1 + p.c1)
    out = p.skip[0] * agg + Hp @ p.v2 + p.c2[0]
    return out, (H, alpha, agg, U, Hp)


def attn_rem_predict(query, s: SampleSet, params: AttnRemParams):
    """Prediction at one query (1-D input) or a batch of queries (rows)."""
    q = np.asarray(query, dtype=float)
    single = q.ndim == 1
    out, _ = _attn_rem_forward(np.atleast_2d(q), s, params)
    return float(out[0]) if single else out


def attn_rem_weights(query, s: SampleSet, params: AttnRemParams) -> WeightVector:
    _, cache = _attn_rem_forward(np.atleast_2d(np.asarray(query, dtype=float)), s, params)
    return WeightVector(cache[1][0], Provenance.SOFTMAX)


def attn_rem_loss_and_grad(Q, targets, s: SampleSet, p: AttnRemParams):
    """Mean squared error over queries and its gradient w.r.t. every parameter."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    t = np.asarray(targets, dtype=float)
    out, (H, alpha, agg, U, Hp) = _attn_rem_forward(Q, s, p)
    M = Q.shape[0]
    err = out - t
    loss = float(err @ err / M)
    dout = 2.0 * err / M

    g = {}
    g["skip"] = np.array([dout @ agg])
    g["c2"] = np.array([dout.sum()])
    g["v2"] = Hp.T @ dout
    dpre_p = np.outer(dout, p.v2) * (1.0 - Hp**2)
    g["V1"] = U.T @ dpre_p
    g["c1"] = dpre_p.sum(axis=0)
    dagg = dout * p.skip[0] + dpre_p @ p.V1[-1]

    dalpha = dagg[:, None] * s.values[None, :]
    de = attention.softmax_backward(dalpha, alpha)
    g["w2"] = np.einsum("bn,bnk->k", de, H)
    dz = de[:, :, None] * p.w2[None, None, :] * (1.0 - H**2)
    dim = s.locations.shape[1]
    dz_b = dz.sum(axis=1)  # summed over samples
    dz_n = dz.sum(axis=0)  # summed over queries
    g["W1"] = np.concatenate(
        [Q.T @ dz_b, s.locations.T @ dz_n, (s.values @ dz_n)[None, :]], axis=0
    )
    g["b1"] = dz_n.sum(axis=0)
    assert g["W1"].shape == (2 * dim + 1, p.W1.shape[1])
    return loss, g


@dataclass
class TrainHyper:
    lr: float = 0.01
    epochs: int = 1500
    seed: int = 0
    optimizer: str = "adam"
    clip: float = 10.0
    scorer_width: int = 32
    predictor_width: int = 16
    diverge_at: float = 1e6


def attn_rem_train(s: SampleSet, queries, targets, hyper: TrainHyper = TrainHyper(), init: AttnRemParams | None = None):
    """Full-batch training on the query MSE. Returns ``(params, loss_curve)``."""
    rng = np.random.Generator(np.random.PCG64(hyper.seed))
    p = init or AttnRemParams.init(rng, hyper.scorer_width, hyper.predictor_width, s.locations.shape[1])
    params = p.as_dict()
    opt = make_optimizer(hyper.optimizer, params, hyper.lr, hyper.clip)
    curve = []
    for epoch in range(hyper.epochs):
        loss, g = attn_rem_loss_and_grad(queries, targets, s, AttnRemParams(**params))
        curve.append(loss)
        if not np.isfinite(loss) or loss > hyper.diverge_at:
            raise DivergenceError(f"training diverged at epoch {epoch} (loss={loss:.3g})", curve)
        opt.step(g)
    final, _ = attn_rem_loss_and_grad(queries, targets, s, AttnRemParams(**params))
    curve.append(final)
    return AttnRemParams(**params), np.array(curve)


# -- metrics --------------------------------------------------------------


@dataclass
class RemMetrics:
    rmse: float
    mae: float
    maxae: float
    r2: float | None

    def as_dict(self):
        return vars(self).copy()


def rem_metrics(pred: RadioMapGrid, truth: RadioMapGrid) -> RemMetrics:
    """RMSE, MAE, MaxAE and R^2; R^2 is None for a constant truth field."""
    if pred.resolution != truth.resolution or not np.allclose(pred.extent, truth.extent):
        raise ValueError("grids do not match")
    e = (pred.values - truth.values).ravel()
    t = truth.values.ravel()
    ss_tot = float(((t - t.mean()) ** 2).sum())
    r2 = None if ss_tot == 0.0 else 1.0 - float((e**2).sum()) / ss_tot
    return RemMetrics(
        rmse=float(np.sqrt((e**2).mean())),
        mae=float(np.abs(e).mean()),
        maxae=float(np.abs(e).max()),
        r2=r2,
    )
