"""Experiment configuration: YAML files mapped onto per-experiment dataclasses.

A config file looks like::

    experiment: waterfill
    seed: 0
    output_dir: out/waterfill
    params:
      beta: [1.0, 0.5]
      sigma: [1.0, 1.0]
      P: 2.0

Unknown parameter keys are violations; missing keys take the defaults below.
Stochastic suites run seeds ``seed, seed + 1, ..., seed + n_seeds - 1``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml


class ConfigError(ValueError):
    pass


@dataclass
class FimDemoParams:
    example2_sats_km: list = field(default_factory=lambda: [[0.0, 10.0], [10.0, 0.0], [-10.0, 0.0]])
    example2_sigma_m: float = 5.0
    example3_sats_km: list = field(default_factory=lambda: [[10.0, 0.0], [9.0, 1.0], [0.0, 10.0]])
    example3_sigma_m: list = field(default_factory=lambda: [1.0, 1.0, 5.0])
    user_km: list = field(default_factory=lambda: [0.0, 0.0])


@dataclass
class ReliabilityParams:
    idw_power: float = 2.0
    target_weight: float = 0.063
    target_index: int = 3
    beta_bracket: list = field(default_factory=lambda: [0.0, 5.0])
    fixture: str | None = None


@dataclass
class RadioMapParams:
    n_seeds: int = 3
    n_samples: int = 60
    noise_std: float = 0.02
    grid: int = 50
    n_train_queries: int = 400
    lr: float = 0.01
    epochs: int = 1500
    optimizer: str = "adam"
    clip: float = 10.0
    scorer_width: int = 32
    predictor_width: int = 16
    idw_power: float = 2.0
    nw_bandwidth: float = 0.05
    n_bumps: int = 3


@dataclass
class LocalizeNwParams:
    n_seeds: int = 20
    n: int = 160
    noise_std: float = 0.1
    outlier_frac: float = 0.075
    outlier_std: float = 0.6
    window: int = 15
    bandwidth: float = 0.025


@dataclass
class LocalizeAttnParams:
    n_seeds: int = 5
    n_steps: int = 500
    n_sats: int = 10
    range_noise: float = 6.0
    contamination: float = 0.12
    burst_len: list = field(default_factory=lambda: [20, 50])
    bias_mean: float = 50.0
    bias_std: float = 18.0
    window: int = 10
    d_z: int = 16
    heads: int = 2
    d_k: int = 8
    snr_gain: float = 8.0
    lr: float = 1e-3
    epochs: int = 200
    n_train: int = 340
    n_test: int = 150
    imu_noise: float = 0.01


@dataclass
class WaterfillParams:
    beta: list = field(default_factory=lambda: [1.0, 0.8, 0.5, 0.2])
    sigma: list = field(default_factory=lambda: [0.5, 0.5, 1.0, 1.0])
    P: float = 4.0
    bits: bool = False


@dataclass
class AdvWaterfillParams:
    beta: list = field(default_factory=lambda: [1.0, 0.8, 0.5, 0.2])
    sigma: list = field(default_factory=lambda: [0.5, 0.5, 1.0, 1.0])
    P: float = 4.0
    N: float = 1.0
    method: str = "coupled"
    max_rounds: int = 500
    tol: float = 1e-10
    n_checks: int = 100
    bits: bool = False


@dataclass
class BeamHopParams:
    rates: list | None = None
    T: int = 8
    B: int = 6
    Bmax: int = 2


PARAMS = {
    "fim-demo": FimDemoParams,
    "reliability-demo": ReliabilityParams,
    "radiomap": RadioMapParams,
    "localize-nw": LocalizeNwParams,
    "localize-attn": LocalizeAttnParams,
    "waterfill": WaterfillParams,
    "adv-waterfill": AdvWaterfillParams,
    "beamhop": BeamHopParams,
}
STOCHASTIC = {"radiomap", "localize-nw", "localize-attn", "beamhop"}


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int | None = 0
    params: dict = field(default_factory=dict)
    output_dir: str | None = None

    def resolved_params(self):
        cls = PARAMS[self.experiment]
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in self.params.items() if k in known})

    def to_dict(self) -> dict:
        d = {"experiment": self.experiment, "seed": self.seed, "params": asdict(self.resolved_params())}
        return d


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
        raw = yaml.safe_load(text)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(raw)


def config_from_dict(raw) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    extra = set(raw) - {"experiment", "seed", "params", "output_dir"}
    if extra:
        raise ConfigError(f"unknown top-level keys: {sorted(extra)}")
    if "experiment" not in raw:
        raise ConfigError("missing 'experiment'")
    params = raw.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigError("'params' must be a mapping")
    return ExperimentConfig(str(raw["experiment"]), raw.get("seed", 0), params, raw.get("output_dir"))


def _num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _pos(errs, name, v, strict=True):
    if not _num(v) or (v <= 0 if strict else v < 0):
        errs.append(f"{name}: must be {'positive' if strict else 'nonnegative'} (got {v!r})")


def _vec(errs, name, v, positive=True):
    if not isinstance(v, list) or not v or not all(_num(x) for x in v):
        errs.append(f"{name}: must be a nonempty list of numbers")
        return False
    if positive and any(x <= 0 for x in v):
        errs.append(f"{name}: entries must be positive")
        return False
    return True


def validate(cfg: ExperimentConfig) -> list[str]:
    """Statically checkable violations; empty iff the config can be run."""
    errs: list[str] = []
    if cfg.experiment not in PARAMS:
        return [f"experiment: unknown {cfg.experiment!r} (choose from {sorted(PARAMS)})"]
    if cfg.experiment in STOCHASTIC and not isinstance(cfg.seed, int):
        errs.append("seed: required integer for stochastic experiments")
    elif cfg.seed is not None and (not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool) or cfg.seed < 0):
        errs.append("seed: must be a nonnegative integer")
    known = {f.name for f in fields(PARAMS[cfg.experiment])}
    for k in sorted(set(cfg.params) - known):
        errs.append(f"params.{k}: unknown parameter")
    try:
        p = cfg.resolved_params()
    except TypeError as exc:
        return errs + [str(exc)]
    e = cfg.experiment
    if hasattr(p, "n_seeds") and (not isinstance(p.n_seeds, int) or p.n_seeds < 1):
        errs.append("params.n_seeds: must be a positive integer")
    if e == "fim-demo":
        _pos(errs, "params.example2_sigma_m", p.example2_sigma_m)
        _vec(errs, "params.example3_sigma_m", p.example3_sigma_m)
        if len(p.example3_sigma_m) != len(p.example3_sats_km):
            errs.append("params.example3_sigma_m: one sigma per satellite")
    elif e == "reliability-demo":
        _pos(errs, "params.idw_power", p.idw_power)
        if not _num(p.target_weight) or not 0 < p.target_weight < 1:
            errs.append("params.target_weight: must lie in (0, 1)")
        lo, hi = (p.beta_bracket + [None, None])[:2]
        if not (_num(lo) and _num(hi) and 0 <= lo < hi):
            errs.append("params.beta_bracket: need 0 <= lo < hi")
    elif e == "radiomap":
        for k in ("n_samples", "grid", "n_train_queries", "epochs", "scorer_width", "predictor_width"):
            if not isinstance(getattr(p, k), int) or getattr(p, k) < 1:
                errs.append(f"params.{k}: must be a positive integer")
        if isinstance(p.grid, int) and p.grid < 2:
            errs.append("params.grid: must be at least 2")
        if isinstance(p.grid, int) and isinstance(p.n_train_queries, int) and p.n_train_queries > p.grid**2:
            errs.append("params.n_train_queries: exceeds the number of grid cells")
        _pos(errs, "params.lr", p.lr)
        _pos(errs, "params.noise_std", p.noise_std, strict=False)
        _pos(errs, "params.idw_power", p.idw_power)
        _pos(errs, "params.nw_bandwidth", p.nw_bandwidth)
        if p.optimizer not in ("adam", "gd"):
            errs.append("params.optimizer: must be 'adam' or 'gd'")
    elif e == "localize-nw":
        _pos(errs, "params.bandwidth", p.bandwidth)
        _pos(errs, "params.noise_std", p.noise_std, strict=False)
        _pos(errs, "params.outlier_std", p.outlier_std, strict=False)
        if not isinstance(p.window, int) or p.window < 1 or p.window % 2 == 0:
            errs.append("params.window: must be a positive odd integer")
        if not _num(p.outlier_frac) or not 0 <= p.outlier_frac <= 1:
            errs.append("params.outlier_frac: must lie in [0, 1]")
        if not isinstance(p.n, int) or p.n < 3:
            errs.append("params.n: must be an integer >= 3")
    elif e == "localize-attn":
        if not _num(p.contamination) or not 0 <= p.contamination <= 1:
            errs.append("params.contamination: must lie in [0, 1]")
        if not (isinstance(p.burst_len, list) and len(p.burst_len) == 2 and 0 < p.burst_len[0] <= p.burst_len[1]):
            errs.append("params.burst_len: need [min, max] with 0 < min <= max")
        _pos(errs, "params.lr", p.lr)
        _pos(errs, "params.range_noise", p.range_noise, strict=False)
        _pos(errs, "params.bias_std", p.bias_std, strict=False)
        if isinstance(p.n_steps, int) and p.n_train + p.n_test > p.n_steps - p.window + 1:
            errs.append("params.n_train: train + test windows exceed the available windows")
    elif e == "waterfill":
        ok = _vec(errs, "params.beta", p.beta) & _vec(errs, "params.sigma", p.sigma)
        if ok and len(p.beta) != len(p.sigma):
            errs.append("params.sigma: length must match beta")
        _pos(errs, "params.P", p.P)
    elif e == "adv-waterfill":
        ok = _vec(errs, "params.beta", p.beta) & _vec(errs, "params.sigma", p.sigma)
        if ok and len(p.beta) != len(p.sigma):
            errs.append("params.sigma: length must match beta")
        _pos(errs, "params.P", p.P)
        _pos(errs, "params.N", p.N, strict=False)
        _pos(errs, "params.tol", p.tol)
        if p.method not in ("coupled", "alternating"):
            errs.append("params.method: must be 'coupled' or 'alternating'")
    elif e == "beamhop":
        if p.rates is not None:
            rows = p.rates
            if not (isinstance(rows, list) and rows and all(isinstance(r, list) and r for r in rows)):
                errs.append("params.rates: must be a nonempty T x B list of lists")
                return errs
            B = len(rows[0])
            if any(len(r) != B for r in rows):
                errs.append("params.rates: rows must have equal length")
        else:
            B = p.B
            if not isinstance(p.T, int) or p.T < 1 or not isinstance(p.B, int) or p.B < 1:
                errs.append("params.T/params.B: must be positive integers")
        if not isinstance(p.Bmax, int) or p.Bmax < 1:
            errs.append("params.Bmax: must be a positive integer")
        elif isinstance(B, int) and p.Bmax > B:
            errs.append(f"params.Bmax: exceeds the number of beams B={B}")
    return errs
