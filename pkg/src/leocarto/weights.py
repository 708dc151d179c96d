from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

NORM_TOL = 1e-9


class Provenance(str, Enum):
    NW_KERNEL = "nw_kernel"
    SOFTMAX = "softmax"
    GATED = "gated"
    RELIABILITY = "reliability"
    UNIFORM = "uniform"
    IDW = "idw"


class UnnormalizedWeightsError(ValueError):
    pass


@dataclass(frozen=True)
class WeightVector:
    """Nonnegative fusion weights summing to one, tagged with their origin."""

    w: np.ndarray
    provenance: Provenance

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).reshape(-1)
        if w.size == 0:
            raise ValueError("empty weight vector")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise UnnormalizedWeightsError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > NORM_TOL:
            raise UnnormalizedWeightsError(f"weights sum to {w.sum():.12g}, not 1")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "provenance", Provenance(self.provenance))

    @classmethod
    def normalize(cls, raw, provenance) -> "WeightVector":
        raw = np.asarray(raw, dtype=float)
        s = raw.sum()
        if not s > 0:
            raise UnnormalizedWeightsError("weights have no positive mass")
        return cls(raw / s, provenance)

    @classmethod
    def uniform(cls, n: int) -> "WeightVector":
        return cls(np.full(n, 1.0 / n), Provenance.UNIFORM)

    def __len__(self):
        return self.w.size

    def __array__(self, dtype=None, copy=None):
        return self.w if dtype is None else self.w.astype(dtype)
