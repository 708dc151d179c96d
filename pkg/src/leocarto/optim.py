"""Minimal optimizers over dicts of numpy parameter arrays."""

from __future__ import annotations

from typing import Callable

import numpy as np


class DivergenceError(FloatingPointError):
    def __init__(self, msg, loss_curve=None):
        super().__init__(msg)
        self.loss_curve = loss_curve


def clip_by_global_norm(grads: dict, max_norm: float) -> float:
    total = float(np.sqrt(sum(float((g**2).sum()) for g in grads.values())))
    if max_norm and total > max_norm:
        s = max_norm / total
        for k in grads:
            grads[k] = grads[k] * s
    return total


class Adam:
    def __init__(self, params: dict, lr=1e-2, betas=(0.9, 0.999), eps=1e-8, clip=10.0):
        self.params = params
        self.lr, self.b1, self.b2, self.eps, self.clip = lr, betas[0], betas[1], eps, clip
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict) -> float:
        gnorm = clip_by_global_norm(grads, self.clip)
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            self.params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
        return gnorm


class GradientDescent:
    def __init__(self, params: dict, lr=1e-2, clip=10.0):
        self.params, self.lr, self.clip = params, lr, clip

    def step(self, grads: dict) -> float:
        gnorm = clip_by_global_norm(grads, self.clip)
        for k, g in grads.items():
            self.params[k] -= self.lr * g
        return gnorm


def make_optimizer(name: str, params: dict, lr: float, clip: float):
    if name == "adam":
        return Adam(params, lr=lr, clip=clip)
    if name == "gd":
        return GradientDescent(params, lr=lr, clip=clip)
    raise ValueError(f"unknown optimizer {name!r}")


def finite_difference_check(
    loss: Callable[[dict], float], params: dict, grads: dict, h=1e-6, n_probe=None, rng=None,
    atol=1e-6,
) -> float:
    """Largest relative error between analytic and central-difference gradients.

    The relative error of each probed entry is |a - n| / max(|a|, |n|, atol);
    ``atol`` keeps entries with vanishing gradient from dominating.
    ``n_probe`` limits the number of entries per array (chosen with ``rng``).
    """
    worst = 0.0
    for k, p in params.items():
        flat = p.reshape(-1)
        idx = np.arange(flat.size)
        if n_probe is not None and flat.size > n_probe:
            idx = (rng or np.random.default_rng(0)).choice(flat.size, n_probe, replace=False)
        g = grads[k].reshape(-1)
        for i in idx:
            old = flat[i]
            flat[i] = old + h
            lp = loss(params)
            flat[i] = old - h
            lm = loss(params)
            flat[i] = old
            num = (lp - lm) / (2 * h)
            denom = max(abs(num), abs(g[i]), atol)
            worst = max(worst, abs(num - g[i]) / denom)
    return worst
