"""Line-of-sight geometry, range Jacobians and Fisher information.

All quantities are in meters. Positions are 2-D (planar) or 3-D vectors;
a single snapshot must use one dimensionality throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

RANK_RTOL = 1e-10


class DegenerateGeometryError(ValueError):
    """Raised when a satellite coincides with the user position."""


@dataclass(frozen=True)
class Satellite:
    pos: np.ndarray
    vel: np.ndarray | None = None


@dataclass(frozen=True)
class GeometrySnapshot:
    """User state hypothesis plus satellite states at one epoch."""

    user_pos: np.ndarray
    sats: tuple[Satellite, ...]
    user_vel: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.user_pos, dtype=float)
        object.__setattr__(self, "user_pos", p)
        if self.user_vel is not None:
            v = np.asarray(self.user_vel, dtype=float)
            if v.shape != p.shape:
                raise ValueError("user_vel dimension differs from user_pos")
            object.__setattr__(self, "user_vel", v)
        sats = []
        for s in self.sats:
            if not isinstance(s, Satellite):
                s = Satellite(*s) if isinstance(s, (tuple, list)) else Satellite(s)
            sp = np.asarray(s.pos, dtype=float)
            if sp.shape != p.shape:
                raise ValueError("satellite position dimension differs from user_pos")
            sv = None if s.vel is None else np.asarray(s.vel, dtype=float)
            if sv is not None and sv.shape != p.shape:
                raise ValueError("satellite velocity dimension differs from user_pos")
            if np.linalg.norm(p - sp) == 0.0:
                raise DegenerateGeometryError("satellite coincides with user position")
            sats.append(Satellite(sp, sv))
        object.__setattr__(self, "sats", tuple(sats))

    @classmethod
    def from_arrays(cls, user_pos, sat_pos, user_vel=None, sat_vel=None):
        sat_pos = np.atleast_2d(np.asarray(sat_pos, dtype=float))
        if sat_vel is None:
            sats = tuple(Satellite(s) for s in sat_pos)
        else:
            sat_vel = np.atleast_2d(np.asarray(sat_vel, dtype=float))
            sats = tuple(Satellite(s, v) for s, v in zip(sat_pos, sat_vel))
        return cls(np.asarray(user_pos, dtype=float), sats, user_vel)

    @property
    def dim(self) -> int:
        return self.user_pos.shape[0]

    @property
    def sat_positions(self) -> np.ndarray:
        return np.stack([s.pos for s in self.sats])


def los_unit(user_pos, sat_pos) -> np.ndarray:
    """Unit vector pointing from the satellite to the user."""
    r = np.asarray(user_pos, dtype=float) - np.asarray(sat_pos, dtype=float)
    n = np.linalg.norm(r)
    if n == 0.0:
        raise DegenerateGeometryError("coincident user and satellite positions")
    return r / n


def range_jacobian(g: GeometrySnapshot) -> np.ndarray:
    """N x d Jacobian of the ranges w.r.t. user position (rows are LOS units)."""
    return np.stack([los_unit(g.user_pos, s.pos) for s in g.sats])


@dataclass
class FisherReport:
    J: np.ndarray
    crlb: np.ndarray
    rank: int
    condition_number: float
    unobservable_dirs: list[np.ndarray] = field(default_factory=list)

    @property
    def std_bounds(self) -> np.ndarray:
        """Square roots of the CRLB diagonal; inf along unobservable axes."""
        d = np.sqrt(np.clip(np.diag(self.crlb), 0.0, None))
        for u in self.unobservable_dirs:
            d[np.abs(u) > 1e-12] = np.inf
        return d

    def to_dict(self) -> dict:
        return {
            "J": self.J.tolist(),
            "crlb": self.crlb.tolist(),
            "rank": self.rank,
            "condition_number": self.condition_number,
            "unobservable_dirs": [u.tolist() for u in self.unobservable_dirs],
            "std_bounds": self.std_bounds.tolist(),
        }


def fisher_from_information(J: np.ndarray) -> FisherReport:
    """Eigen-analyse an information matrix: rank, CRLB on the observable subspace."""
    J = 0.5 * (J + J.T)
    lam, vecs = np.linalg.eigh(J)
    lam_max = max(lam.max(initial=0.0), 0.0)
    tol = RANK_RTOL * lam_max
    keep = lam > tol
    rank = int(keep.sum())
    crlb = (vecs[:, keep] / lam[keep]) @ vecs[:, keep].T
    if rank == J.shape[0] and rank > 0:
        cond = float(lam_max / lam.min())
    else:
        cond = float("inf")
    unobs = [vecs[:, i].copy() for i in np.flatnonzero(~keep)]
    return FisherReport(J=J, crlb=crlb, rank=rank, condition_number=cond, unobservable_dirs=unobs)


def fisher_information(H, noise_std: Sequence[float]) -> FisherReport:
    """Fisher information sum_i h_i h_i^T / sigma_i^2 for independent Gaussian noise."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    sigma = np.asarray(noise_std, dtype=float).reshape(-1)
    if sigma.shape[0] != H.shape[0]:
        raise ValueError(f"{H.shape[0]} Jacobian rows but {sigma.shape[0]} noise levels")
    if np.any(sigma <= 0):
        raise ValueError("noise_std must be positive")
    J = (H / sigma[:, None] ** 2).T @ H
    return fisher_from_information(J)
