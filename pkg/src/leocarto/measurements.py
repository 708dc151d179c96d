"""Forward measurement models, synthetic trajectories and corruption.

Random streams: every stochastic routine takes an integer seed and derives
independent ``numpy.random.PCG64`` streams from ``SeedSequence(seed)``.
Stream 0 drives burst placement; stream ``1 + k`` drives the additive noise
of satellite ``k``. Outputs are therefore reproducible across platforms and
adding a satellite does not perturb the noise of the others.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from typing import Mapping, Sequence

import numpy as np

from .geometry import DegenerateGeometryError, GeometrySnapshot, los_unit


class Modality(str, Enum):
    RANGE = "range"
    RANGE_RATE = "range_rate"
    FDOA = "fdoa"
    RSS = "rss"
    POSITION_HYPOTHESIS = "position_hypothesis"


RANGE_LIKE = (Modality.RANGE,)


@dataclass(frozen=True)
class Quality:
    snr: float | None = None
    residual: float | None = None
    elevation: float | None = None


@dataclass(frozen=True)
class Measurement:
    modality: Modality
    value: float
    sat_index: int | tuple[int, int]
    epoch: float = 0.0
    quality: Quality | None = None

    def __post_init__(self):
        object.__setattr__(self, "modality", Modality(self.modality))
        if self.modality is Modality.FDOA:
            pair = tuple(self.sat_index) if not isinstance(self.sat_index, int) else ()
            if len(pair) != 2 or pair[0] == pair[1]:
                raise ValueError("fdoa measurement needs two distinct satellite indices")
            object.__setattr__(self, "sat_index", pair)


@dataclass(frozen=True)
class NlosBurstSpec:
    """Bursty NLOS bias process: burst lengths in epochs, bias in meters."""

    burst_len_range: tuple[int, int] = (20, 50)
    bias_mean: float = 50.0
    bias_std: float = 18.0
    contamination_target: float = 0.12

    def __post_init__(self):
        lo, hi = self.burst_len_range
        if not (0 < lo <= hi):
            raise ValueError("burst_len_range must satisfy 0 < min <= max")
        if not (0.0 <= self.contamination_target <= 1.0):
            raise ValueError("contamination_target must lie in [0, 1]")


NO_BURSTS = NlosBurstSpec(contamination_target=0.0)


def range_model(g: GeometrySnapshot, i: int) -> float:
    return float(np.linalg.norm(g.user_pos - g.sats[i].pos))


def range_rate(g: GeometrySnapshot, i: int) -> float:
    """Projection of the user-minus-satellite velocity onto the LOS."""
    s = g.sats[i]
    if g.user_vel is None or s.vel is None:
        raise ValueError("range_rate requires user and satellite velocities")
    return float(los_unit(g.user_pos, s.pos) @ (g.user_vel - s.vel))


def fdoa(g: GeometrySnapshot, i: int, j: int) -> float:
    if i == j:
        raise ValueError("fdoa requires two distinct satellites")
    return range_rate(g, i) - range_rate(g, j)


def rss_model(P0: float, alpha: float, rho: float) -> float:
    """Log-distance path loss, P0 - 10 alpha log10(rho), in dBm."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return P0 - 10.0 * alpha * np.log10(rho)


# 3GPP TR 38.901 InF-DH path-loss constants: (intercept, distance slope, frequency slope)
_INF_LOS = (31.84, 21.5, 19.0)
_INF_NLOS = (33.63, 21.9, 20.0)


def inf_pathloss(d, f_ghz, P_t: float = 23.0, los: bool = True):
    """Received power in dBm under the indoor-factory dense-high model."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0) or f_ghz <= 0:
        raise ValueError("distance and frequency must be positive")
    a, b, c = _INF_LOS if los else _INF_NLOS
    out = P_t - (a + b * np.log10(d) + c * np.log10(f_ghz))
    return float(out) if out.ndim == 0 else out


def gen_trajectory(times) -> np.ndarray:
    """Closed-curve benchmark trajectory evaluated at ``times``; shape (n, 2)."""
    t = np.asarray(times, dtype=float)
    x = np.cos(2 * np.pi * t) + 0.08 * np.cos(6 * np.pi * t)
    y = 0.8 * np.sin(2 * np.pi * t) + 0.05 * np.sin(4 * np.pi * t)
    return np.stack([x, y], axis=-1)


def seed_streams(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(n)]


@dataclass
class BurstLog:
    """Ground-truth NLOS flags and biases on the (epoch, satellite) grid."""

    epochs: np.ndarray
    sats: np.ndarray
    mask: np.ndarray
    bias: np.ndarray
    bursts: list[tuple[int, int, int, float]] = field(default_factory=list)

    @property
    def contamination(self) -> float:
        return float(self.mask.mean()) if self.mask.size else 0.0

    def flagged(self, epoch, sat) -> bool:
        i = int(np.searchsorted(self.epochs, epoch))
        k = int(np.searchsorted(self.sats, sat))
        return bool(self.mask[i, k])


def nlos_bursts(n_epochs: int, n_sats: int, spec: NlosBurstSpec, rng: np.random.Generator):
    """Place bursts until the flagged fraction of the grid reaches the target.

    Returns ``(mask, bias, bursts)`` where each burst is
    ``(sat, start, length, bias)``. Overlapping bursts on one satellite keep the
    later bias. The last burst is shortened so the target is not overshot by
    more than ``burst_len_range[0]`` cells.
    """
    mask = np.zeros((n_epochs, n_sats), dtype=bool)
    bias = np.zeros((n_epochs, n_sats))
    bursts = []
    need = int(round(spec.contamination_target * n_epochs * n_sats))
    lo, hi = spec.burst_len_range
    if need == 0 or n_epochs == 0 or n_sats == 0:
        return mask, bias, bursts
    if lo > n_epochs:
        raise ValueError("shortest burst longer than the series")
    guard = 0
    while mask.sum() < need:
        guard += 1
        if guard > 100 * n_epochs * n_sats:
            raise RuntimeError("contamination target not reachable")
        k = int(rng.integers(n_sats))
        length = int(rng.integers(lo, min(hi, n_epochs) + 1))
        start = int(rng.integers(0, n_epochs - length + 1))
        b = abs(float(rng.normal(spec.bias_mean, spec.bias_std)))
        fresh = ~mask[start:start + length, k]
        remaining = need - int(mask.sum())
        if fresh.sum() > remaining:
            # trim the tail so that the new cells do not overshoot
            cum = np.cumsum(fresh)
            length = max(int(np.searchsorted(cum, max(remaining, 1)) + 1), lo)
            length = min(length, n_epochs - start)
        mask[start:start + length, k] = True
        bias[start:start + length, k] = b
        bursts.append((k, start, length, b))
    return mask, bias, bursts


def corrupt(
    series: Sequence[Measurement],
    noise_std: Mapping[str, float] | float,
    nlos: NlosBurstSpec = NO_BURSTS,
    seed: int = 0,
    rss_nlos_shadowing_db: float = 7.2,
) -> tuple[list[Measurement], BurstLog]:
    """Add Gaussian noise to every measurement and NLOS bias inside bursts.

    Range-like measurements in a flagged (epoch, satellite) cell receive the
    burst bias; RSS measurements there receive zero-mean lognormal shadowing
    with ``rss_nlos_shadowing_db`` standard deviation. Pair modalities use the
    first satellite of the pair for noise-stream selection and are not biased.
    """
    if len(series) == 0:
        raise ValueError("empty measurement series")
    if not isinstance(noise_std, Mapping):
        noise_std = {m.value: float(noise_std) for m in Modality}
    std = {Modality(k): float(v) for k, v in noise_std.items()}

    def first_sat(m):
        return m.sat_index if isinstance(m.sat_index, int) else m.sat_index[0]

    epochs = np.unique([m.epoch for m in series])
    sats = np.unique([first_sat(m) for m in series])
    streams = seed_streams(seed, 1 + len(sats))
    mask, bias, bursts = nlos_bursts(len(epochs), len(sats), nlos, streams[0])
    log = BurstLog(epochs=epochs, sats=sats, mask=mask, bias=bias, bursts=bursts)

    out = []
    for m in series:
        i = int(np.searchsorted(epochs, m.epoch))
        k = int(np.searchsorted(sats, first_sat(m)))
        rng = streams[1 + k]
        v = m.value
        s = std.get(m.modality, 0.0)
        if s > 0:
            v += s * rng.standard_normal()
        if mask[i, k]:
            if m.modality in RANGE_LIKE:
                v += bias[i, k]
            elif m.modality is Modality.RSS and rss_nlos_shadowing_db > 0:
                v += rss_nlos_shadowing_db * rng.standard_normal()
        out.append(replace(m, value=float(v)))
    return out, log


def range_series(user_track, sat_pos, epochs=None) -> list[Measurement]:
    """Noiseless range measurements for a user track against static satellites."""
    user_track = np.atleast_2d(np.asarray(user_track, dtype=float))
    sat_pos = np.atleast_2d(np.asarray(sat_pos, dtype=float))
    if epochs is None:
        epochs = np.arange(len(user_track), dtype=float)
    rho = np.linalg.norm(user_track[:, None, :] - sat_pos[None], axis=2)
    if np.any(rho == 0):
        raise DegenerateGeometryError("user track passes through a satellite")
    return [
        Measurement(Modality.RANGE, float(rho[i, k]), k, float(epochs[i]))
        for i in range(len(user_track))
        for k in range(len(sat_pos))
    ]


@dataclass(frozen=True)
class InfScene:
    bs: np.ndarray
    sensors: np.ndarray
    query: np.ndarray
    los: np.ndarray
    ray_traced_dbm: np.ndarray
    measured_dbm: np.ndarray
    ground_truth_dbm: float
    f_ghz: float
    p_t_dbm: float
    meas_noise_db: float
    nlos_shadowing_db: float
    beta: float | None = None


def load_inf_scene(path=None) -> InfScene:
    """Load the indoor-factory reliability fixture (shipped JSON by default)."""
    if path is None:
        text = resources.files("leocarto").joinpath("data/inf_scene.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    d = json.loads(text)
    return InfScene(
        bs=np.array(d["bs"], dtype=float),
        sensors=np.array(d["sensors"], dtype=float),
        query=np.array(d["query"], dtype=float),
        los=np.array(d["los"], dtype=bool),
        ray_traced_dbm=np.array(d["ray_traced_dbm"], dtype=float),
        measured_dbm=np.array(d["measured_dbm"], dtype=float),
        ground_truth_dbm=float(d["ground_truth_dbm"]),
        f_ghz=float(d["f_ghz"]),
        p_t_dbm=float(d["p_t_dbm"]),
        meas_noise_db=float(d["meas_noise_db"]),
        nlos_shadowing_db=float(d["nlos_shadowing_db"]),
        beta=d.get("beta"),
    )
