"""Attention operators used as fusion primitives.

Nadaraya-Watson kernel weights, (scaled) dot-product attention, multi-head
attention and sigmoid output gating. All softmax paths subtract the row
maximum before exponentiating. ``sdpa_backward`` supplies the vector-Jacobian
product used by the trainable models; arrays may carry arbitrary leading
batch dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimators import weighted_mean
from .weights import Provenance, UnnormalizedWeightsError, WeightVector


def softmax(scores, axis: int = -1) -> np.ndarray:
    s = np.asarray(scores, dtype=float)
    e = np.exp(s - s.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(dA: np.ndarray, A: np.ndarray) -> np.ndarray:
    return A * (dA - (dA * A).sum(axis=-1, keepdims=True))


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# -- Nadaraya-Watson ------------------------------------------------------


def gaussian_kernel(query, keys, bandwidth: float) -> np.ndarray:
    """Unnormalized kernel values exp(-|q - k|^2 / 2 sigma^2)."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    d2 = _sqdist(query, keys)
    return np.exp(-d2 / (2.0 * bandwidth**2))


def _sqdist(query, keys) -> np.ndarray:
    q = np.atleast_1d(np.asarray(query, dtype=float))
    K = np.asarray(keys, dtype=float)
    if K.ndim == 1:
        K = K[:, None] if q.size == 1 else K[None, :]
    if K.shape[0] == 0:
        raise ValueError("keys must be nonempty")
    return ((K - q.reshape(1, -1)) ** 2).sum(axis=1)


def nw_weights(query, keys, bandwidth: float) -> WeightVector:
    """Normalized Gaussian-kernel weights, computed in the log domain."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    logk = -_sqdist(query, keys) / (2.0 * bandwidth**2)
    return WeightVector(softmax(logk), Provenance.NW_KERNEL)


def nw_estimate(query, keys, values, bandwidth: float):
    return weighted_mean(nw_weights(query, keys, bandwidth), values)


# -- dot-product attention ----------------------------------------------


def attention_weights(Q, K, scale: bool = True) -> np.ndarray:
    Q = np.asarray(Q, dtype=float)
    K = np.asarray(K, dtype=float)
    if Q.shape[-1] != K.shape[-1]:
        raise ValueError(f"query dim {Q.shape[-1]} != key dim {K.shape[-1]}")
    S = Q @ np.swapaxes(K, -1, -2)
    if scale:
        S = S / np.sqrt(Q.shape[-1])
    return softmax(S)


def sdpa(Q, K, V, scale: bool = True, return_weights: bool = False):
    """softmax(Q K^T / sqrt(d_k)) V; ``scale=False`` drops the 1/sqrt(d_k)."""
    V = np.asarray(V, dtype=float)
    squeeze = V.ndim == 1
    if squeeze:
        V = V[:, None]
    A = attention_weights(Q, K, scale)
    if A.shape[-1] != V.shape[-2]:
        raise ValueError("key and value counts differ")
    out = A @ V
    if squeeze:
        out = out[..., 0]
    return (out, A) if return_weights else out


def sdpa_backward(dO, Q, K, V, A, scale: bool = True):
    """Gradients of sdpa w.r.t. (Q, K, V) given the upstream gradient dO."""
    c = 1.0 / np.sqrt(Q.shape[-1]) if scale else 1.0
    dV = np.swapaxes(A, -1, -2) @ dO
    dA = dO @ np.swapaxes(V, -1, -2)
    dS = softmax_backward(dA, A) * c
    dQ = dS @ K
    dK = np.swapaxes(dS, -1, -2) @ Q
    return dQ, dK, dV


@dataclass
class MultiHeadParams:
    """Per-head projections stacked on axis 0: W_Q, W_K (h, d_model, d_k), W_V (h, d_model, d_v)."""

    W_Q: np.ndarray
    W_K: np.ndarray
    W_V: np.ndarray
    W_O: np.ndarray
    W_gate: np.ndarray | None = None

    def __post_init__(self):
        for name in ("W_Q", "W_K", "W_V", "W_O"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        h, dm, dk = self.W_Q.shape
        if h < 1:
            raise ValueError("need at least one head")
        if self.W_K.shape != (h, dm, dk):
            raise ValueError("W_K shape must match W_Q")
        if self.W_V.shape[:2] != (h, dm):
            raise ValueError("W_V must be (h, d_model, d_v)")
        dv = self.W_V.shape[2]
        if self.W_O.shape[0] != h * dv:
            raise ValueError(f"W_O needs {h * dv} rows")
        if self.W_gate is not None:
            self.W_gate = np.asarray(self.W_gate, dtype=float)
            if self.W_gate.shape != (h, dm, dv):
                raise ValueError("W_gate must be (h, d_model, d_v)")

    @property
    def heads(self) -> int:
        return self.W_Q.shape[0]

    @classmethod
    def random(cls, h, d_model, d_k, d_v, rng, d_out=None, gated=False):
        d_out = d_model if d_out is None else d_out
        n = lambda *s: rng.standard_normal(s) / np.sqrt(s[-2])
        return cls(
            n(h, d_model, d_k), n(h, d_model, d_k), n(h, d_model, d_v),
            n(h * d_v, d_out), n(h, d_model, d_v) if gated else None,
        )


def multi_head(X, params: MultiHeadParams, scale: bool = True, return_weights: bool = False):
    """Concat(head_1..head_h) W_O with head_i = sdpa(X W_Q^i, X W_K^i, X W_V^i).

    When ``params.W_gate`` is set each head output is gated by sigmoid(X W_gate^i).
    """
    X = np.asarray(X, dtype=float)
    ws, heads = [], []
    for i in range(params.heads):
        Y, A = sdpa(X @ params.W_Q[i], X @ params.W_K[i], X @ params.W_V[i], scale, True)
        if params.W_gate is not None:
            Y = gated(Y, X, params.W_gate[i])
        heads.append(Y)
        ws.append(A)
    out = np.concatenate(heads, axis=-1) @ params.W_O
    return (out, np.stack(ws, axis=-3)) if return_weights else out


# -- gating -------------------------------------------------------------


def gated(Y, X, W_theta) -> np.ndarray:
    """Elementwise output gate Y * sigmoid(X W_theta)."""
    Y = np.asarray(Y, dtype=float)
    G = sigmoid(np.asarray(X, dtype=float) @ np.asarray(W_theta, dtype=float))
    if G.shape != Y.shape:
        raise ValueError(f"gate shape {G.shape} != value shape {Y.shape}")
    return Y * G


def gated_fuse(alpha, gates, values, renormalize: bool = True) -> float:
    """Fuse values with attention weights modulated by per-item gates.

    ``renormalize=False`` returns the raw sum of alpha_i g_i v_i, which is not
    a convex combination.
    """
    a = alpha.w if isinstance(alpha, WeightVector) else np.asarray(alpha, dtype=float)
    g = np.asarray(gates, dtype=float)
    v = np.asarray(values, dtype=float)
    if np.any((g <= 0) | (g >= 1)):
        raise ValueError("gates must lie in (0, 1)")
    raw = a * g
    if not renormalize:
        return float(raw @ v)
    if raw.sum() <= 0:
        raise UnnormalizedWeightsError("gated weights have no mass")
    return weighted_mean(WeightVector.normalize(raw, Provenance.GATED), v)
