"""Sequential localization: kernel trajectory smoothing and the attention
corrector + EKF pipeline for NLOS-contaminated range positioning.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import attention
from .estimators import WlsProblem, gauss_newton_solve, range_model
from .measurements import NlosBurstSpec, gen_trajectory, nlos_bursts, seed_streams
from .optim import DivergenceError, make_optimizer

# -- trajectory smoothing -----------------------------------------------------


def nw_traj_smooth(times, hypotheses, bandwidth: float, return_weights: bool = False):
    """Row-normalized Gaussian kernel smoothing in time."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    t = np.asarray(times, dtype=float)
    Z = np.asarray(hypotheses, dtype=float)
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    logK = -((t[:, None] - t[None, :]) ** 2) / (2.0 * bandwidth**2)
    W = attention.softmax(logK, axis=1)
    out = W @ Z
    return (out, W) if return_weights else out


def moving_average(hypotheses, window: int) -> np.ndarray:
    """Centered mean over ``window`` samples, truncated at the edges."""
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    Z = np.asarray(hypotheses, dtype=float)
    h = window // 2
    c = np.concatenate([np.zeros((1,) + Z.shape[1:]), np.cumsum(Z, axis=0)])
    n = Z.shape[0]
    lo = np.maximum(np.arange(n) - h, 0)
    hi = np.minimum(np.arange(n) + h + 1, n)
    cnt = (hi - lo).reshape((-1,) + (1,) * (Z.ndim - 1))
    return (c[hi] - c[lo]) / cnt


def smoothness_metric(traj) -> float:
    """Mean squared norm of second differences."""
    X = np.asarray(traj, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 3:
        raise ValueError("need at least three points")
    d = X[2:] - 2 * X[1:-1] + X[:-2]
    return float((d**2).sum(axis=1).mean())


def traj_rmse(est, truth) -> float:
    e = np.asarray(est) - np.asarray(truth)
    return float(np.sqrt((e**2).sum(axis=1).mean()))


@dataclass
class TrajBenchConfig:
    n: int = 160
    noise_std: float = 0.1
    outlier_frac: float = 0.075
    outlier_std: float = 0.6
    window: int = 15
    bandwidth: float = 0.025


def trajectory_benchmark(seed: int, cfg: TrajBenchConfig = TrajBenchConfig()) -> dict:
    """One run of the noisy closed-curve benchmark: raw vs moving average vs NW."""
    rng = np.random.Generator(np.random.PCG64(seed))
    t = np.arange(cfg.n) / cfg.n
    y = gen_trajectory(t)
    z = y + cfg.noise_std * rng.standard_normal((cfg.n, 2))
    k = int(round(cfg.outlier_frac * cfg.n))
    idx = rng.choice(cfg.n, k, replace=False)
    z[idx] += cfg.outlier_std * rng.standard_normal((k, 2))
    ma = moving_average(z, cfg.window)
    nw, W = nw_traj_smooth(t, z, cfg.bandwidth, return_weights=True)
    return {
        "times": t, "truth": y, "raw": z, "ma": ma, "nw": nw, "weights": W, "outliers": np.sort(idx),
        "rmse_raw": traj_rmse(z, y), "rmse_ma": traj_rmse(ma, y), "rmse_nw": traj_rmse(nw, y),
        "smooth_ma": smoothness_metric(ma), "smooth_nw": smoothness_metric(nw),
    }


# -- case-study scenario --------------------------------------------------------


@dataclass
class ScenarioConfig:
    n_steps: int = 500
    n_sats: int = 10
    sat_radius: float = 20000.0
    track_amplitude: tuple[float, float] = (300.0, 200.0)
    range_noise: float = 6.0
    nlos: NlosBurstSpec = field(default_factory=NlosBurstSpec)
    snr_los: float = 0.8
    snr_nlos_drop: float = 0.35
    snr_jitter: float = 0.08
    residual_scale: float = 50.0
    gn_ridge: float = 1e-6
    # bursts are placed independently inside each block so that train and test
    # epochs both carry the contamination target; empty tuple = one block
    burst_blocks: tuple[int, ...] = (350,)


@dataclass
class Scenario:
    truth: np.ndarray      # (n, 2)
    baseline: np.ndarray   # Gauss-Newton fixes, (n, 2)
    features: np.ndarray   # (n, K, d_f)
    nlos: np.ndarray       # (n, K) ground-truth flags
    sat_pos: np.ndarray    # (K, 2)
    ranges: np.ndarray     # (n, K) corrupted
    accel: np.ndarray      # (n, 2) true acceleration


FEATURES = ("snr", "elevation_proxy", "residual_magnitude", "signed_residual", "residual_los_x", "residual_los_y")


def make_scenario(seed: int, cfg: ScenarioConfig = ScenarioConfig()) -> Scenario:
    """Planar user on a figure-eight under a ring of static satellites.

    Satellite ``k`` draws its thermal noise from stream ``1 + k``; stream 0
    places NLOS bursts; one extra stream supplies geometry and SNR jitter.
    """
    n, K = cfg.n_steps, cfg.n_sats
    streams = seed_streams(seed, K + 2)
    burst_rng, sat_rngs, aux = streams[0], streams[1 : K + 1], streams[K + 1]

    t = np.arange(n, dtype=float)
    ax, ay = cfg.track_amplitude
    w = 2 * np.pi / n
    truth = np.stack([ax * np.sin(w * t), ay * np.sin(2 * w * t)], axis=1)
    accel = np.stack([-ax * w**2 * np.sin(w * t), -ay * (2 * w) ** 2 * np.sin(2 * w * t)], axis=1)
    az = aux.uniform(0, 2 * np.pi) + 2 * np.pi * np.arange(K) / K
    S = cfg.sat_radius * np.stack([np.cos(az), np.sin(az)], axis=1)

    mask = np.zeros((n, K), dtype=bool)
    bias = np.zeros((n, K))
    edges = [0, *[b for b in cfg.burst_blocks if 0 < b < n], n]
    for a, b in zip(edges[:-1], edges[1:]):
        mask[a:b], bias[a:b], _ = nlos_bursts(b - a, K, cfg.nlos, burst_rng)
    noise = np.stack([cfg.range_noise * r.standard_normal(n) for r in sat_rngs], axis=1)
    ranges = np.linalg.norm(truth[:, None] - S[None], axis=2) + noise + bias * mask
    snr = np.clip(cfg.snr_los - cfg.snr_nlos_drop * mask + cfg.snr_jitter * aux.standard_normal((n, K)), 0, 1)

    model = range_model(S)
    base = np.zeros((n, 2))
    x = np.zeros(2)
    for i in range(n):
        x = gauss_newton_solve(WlsProblem(ranges[i], model, x, ridge=cfg.gn_ridge)).estimate
        base[i] = x

    d = base[:, None] - S[None]
    rho = np.linalg.norm(d, axis=2)
    u = d / rho[..., None]
    r = (ranges - rho) / cfg.residual_scale
    vel = np.gradient(base, axis=0)
    heading = np.arctan2(vel[:, 1], vel[:, 0])
    F = np.empty((n, K, len(FEATURES)))
    F[..., 0] = snr
    F[..., 1] = np.abs(np.cos(az[None, :] - heading[:, None]))
    F[..., 2] = np.abs(r)
    F[..., 3] = r
    F[..., 4:] = u * r[..., None]
    return Scenario(truth, base, F, mask, S, ranges, accel)


def make_windows(F, T: int):
    """Stack sliding windows ending at epochs T-1 .. n-1; returns (windows, end_epochs)."""
    n = F.shape[0]
    ends = np.arange(T - 1, n)
    return np.stack([F[e - T + 1 : e + 1] for e in ends]), ends


# -- attention corrector ---------------------------------------------------------


@dataclass
class CorrectorConfig:
    window: int = 10
    d_z: int = 16
    heads: int = 2
    d_k: int = 8
    init_scale: float = 0.1
    identity_init: bool = True
    snr_gain: float = 8.0
    lr: float = 1e-3
    epochs: int = 200
    clip: float = 0.0
    optimizer: str = "adam"
    seed: int = 0
    diverge_at: float = 1e6


PARAM_NAMES = ("WQ", "WK", "WV", "pos", "tQ", "tK", "tV", "WO", "Wout", "b")


def corrector_init(d_f: int, cfg: CorrectorConfig, rng, residual_scale: float = 50.0) -> dict:
    """Small random weights, optionally plus an identity path.

    The identity path reproduces one reweighting-free Gauss-Newton correction
    from the pooled residual-times-LOS features (columns 4, 5) and makes the
    last temporal token attend to itself through a dedicated position channel.
    An SNR product term (score ``snr_gain * snr_i * snr_j``) lets high-SNR
    satellites draw the attention; since LS residuals balance, pooling mostly
    over LOS satellites yields minus the NLOS contribution.
    """
    dz, h, dk, T = cfg.d_z, cfg.heads, cfg.d_k, cfg.window
    n = lambda *s: cfg.init_scale * rng.standard_normal(s) / np.sqrt(s[-2])
    p = {
        "WQ": n(d_f, dz), "WK": n(d_f, dz), "WV": n(d_f, dz),
        "pos": np.zeros((T, dz)),
        "tQ": n(h, dz, dk), "tK": n(h, dz, dk), "tV": n(h, dz, dk),
        "WO": n(h * dk, dz), "Wout": n(dz, 2), "b": np.zeros(2),
    }
    if cfg.identity_init:
        if d_f < 6 or dz < 4 or dk < 2:
            raise ValueError("identity init needs d_f >= 6, d_z >= 4, d_k >= 2")
        last = dz - 1
        p["WV"][4, 0] += 1
        p["WV"][5, 1] += 1
        p["tV"][0, 0, 0] += 1
        p["tV"][0, 1, 1] += 1
        p["WO"][0, 0] += 1
        p["WO"][1, 1] += 1
        # pooled r*u/scale over K sats times 2*scale is the GN step for a balanced ring
        p["Wout"][0, 0] += 2 * residual_scale
        p["Wout"][1, 1] += 2 * residual_scale
        g = np.sqrt(cfg.snr_gain * np.sqrt(dz))
        p["WQ"][0, 2] += g
        p["WK"][0, 2] += g
        p["pos"][-1, last] = 1.0
        p["tQ"][0, last, 0] += 4.0
        p["tK"][0, last, 0] += 4.0
    return p


def _corrector_forward(G, p):
    G = np.asarray(G, dtype=float)
    if G.ndim == 3:
        G = G[None]
    Bn, T, K, d_f = G.shape
    if p["WQ"].shape[0] != d_f or p["pos"].shape[0] < T:
        raise ValueError("window shape does not match parameters")
    Qs, Ks, Vs = G @ p["WQ"], G @ p["WK"], G @ p["WV"]
    Zs, A = attention.sdpa(Qs, Ks, Vs, scale=True, return_weights=True)
    Z = Zs.mean(axis=2) + p["pos"][-T:]
    Zl = Z[:, -1]
    h, _, dk = p["tQ"].shape
    heads, cache = [], []
    for i in range(h):
        q = Zl @ p["tQ"][i]
        k = Z @ p["tK"][i]
        v = Z @ p["tV"][i]
        a = attention.softmax(np.einsum("bd,btd->bt", q, k) / np.sqrt(dk))
        heads.append(np.einsum("bt,btd->bd", a, v))
        cache.append((q, k, v, a))
    C = np.concatenate(heads, axis=1)
    O = C @ p["WO"]
    out = O @ p["Wout"] + p["b"]
    return out, dict(G=G, Qs=Qs, Ks=Ks, Vs=Vs, A=A, Z=Z, C=C, O=O, heads=cache)


def corrector_forward(window, params: dict, return_attention: bool = False):
    """Correction for one window (T, K, d_f) or a batch (B, T, K, d_f).

    With ``return_attention`` the mean attention received by each satellite
    per epoch, shape (..., T, K), is returned as well.
    """
    single = np.asarray(window).ndim == 3
    out, c = _corrector_forward(window, params)
    recv = c["A"].mean(axis=-2)
    if single:
        out, recv = out[0], recv[0]
    return (out, recv) if return_attention else out


def spatial_attention(epoch_features, params: dict):
    """Satellite self-attention at one epoch: (Z, per-satellite received weight)."""
    X = np.asarray(epoch_features, dtype=float)
    Z, A = attention.sdpa(X @ params["WQ"], X @ params["WK"], X @ params["WV"], True, True)
    from .weights import Provenance, WeightVector

    return Z, WeightVector(A.mean(axis=0), Provenance.SOFTMAX)


def corrector_loss_and_grad(G, targets, p):
    """Mean over windows of the squared correction error, and its gradient."""
    out, c = _corrector_forward(G, p)
    Y = np.asarray(targets, dtype=float).reshape(out.shape)
    Bn = out.shape[0]
    err = out - Y
    loss = float((err**2).sum() / Bn)
    dout = 2.0 * err / Bn

    g = {}
    g["b"] = dout.sum(axis=0)
    g["Wout"] = c["O"].T @ dout
    dO = dout @ p["Wout"].T
    g["WO"] = c["C"].T @ dO
    dC = dO @ p["WO"].T
    Z = c["Z"]
    Zl = Z[:, -1]
    h, dz, dk = p["tQ"].shape
    dZ = np.zeros_like(Z)
    for name in ("tQ", "tK", "tV"):
        g[name] = np.zeros_like(p[name])
    for i, (q, k, v, a) in enumerate(c["heads"]):
        dH = dC[:, i * dk : (i + 1) * dk]
        da = np.einsum("bd,btd->bt", dH, v)
        dv = a[:, :, None] * dH[:, None, :]
        ds = attention.softmax_backward(da, a) / np.sqrt(dk)
        dq = np.einsum("bt,btd->bd", ds, k)
        dkk = ds[:, :, None] * q[:, None, :]
        g["tQ"][i] = Zl.T @ dq
        g["tK"][i] = np.einsum("btz,btd->zd", Z, dkk)
        g["tV"][i] = np.einsum("btz,btd->zd", Z, dv)
        dZ[:, -1] += dq @ p["tQ"][i].T
        dZ += dkk @ p["tK"][i].T + dv @ p["tV"][i].T
    T = Z.shape[1]
    g["pos"] = np.zeros_like(p["pos"])
    g["pos"][-T:] = dZ.sum(axis=0)
    # mean pooling spreads dZ evenly over the K query rows, which collapses the
    # generic attention backward to per-key terms
    G, A, Qs, Ks, Vs = c["G"], c["A"], c["Qs"], c["Ks"], c["Vs"]
    K = G.shape[2]
    cv = np.einsum("btjz,btz->btj", Vs, dZ) / K
    dS = A * (cv[:, :, None, :] - (A @ cv[..., None])) / np.sqrt(Qs.shape[-1])
    dQs = dS @ Ks
    dKs = np.swapaxes(dS, -1, -2) @ Qs
    dVs = A.sum(axis=2)[..., None] * (dZ / K)[:, :, None, :]
    Gf = G.reshape(-1, G.shape[-1]).T
    g["WQ"] = Gf @ dQs.reshape(-1, dQs.shape[-1])
    g["WK"] = Gf @ dKs.reshape(-1, dKs.shape[-1])
    g["WV"] = Gf @ dVs.reshape(-1, dVs.shape[-1])
    return loss, g


def corrector_train(windows, targets, cfg: CorrectorConfig = CorrectorConfig(), init: dict | None = None,
                    residual_scale: float = 50.0):
    """Full-batch training of the correction Δr = r_gt - r_gps. Returns (params, loss_curve)."""
    G = np.asarray(windows, dtype=float)
    if G.shape[0] == 0:
        raise ValueError("empty training set")
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    params = init or corrector_init(G.shape[-1], cfg, rng, residual_scale)
    params = {k: np.array(v, dtype=float) for k, v in params.items()}
    opt = make_optimizer(cfg.optimizer, params, cfg.lr, cfg.clip)
    curve = []
    for epoch in range(cfg.epochs):
        loss, g = corrector_loss_and_grad(G, targets, params)
        curve.append(loss)
        if not np.isfinite(loss) or loss > cfg.diverge_at:
            raise DivergenceError(f"corrector diverged at epoch {epoch} (loss={loss:.3g})", curve)
        opt.step(g)
    curve.append(corrector_loss_and_grad(G, targets, params)[0])
    return params, np.array(curve)


# -- EKF --------------------------------------------------------------------------


@dataclass
class EkfState:
    x: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).reshape(4)
        self.P = np.asarray(self.P, dtype=float).reshape(4, 4)
        _check_psd(self.P, "P")


@dataclass
class EkfNoise:
    accel_var: float          # white-acceleration spectral density, (m/s^2)^2
    obs_var: float            # per-axis position observation variance, m^2
    dt: float = 1.0


def _check_psd(M, name, tol=1e-9):
    if not np.allclose(M, M.T, atol=1e-9 * max(1.0, np.abs(M).max())):
        raise ValueError(f"{name} is not symmetric")
    if np.linalg.eigvalsh(0.5 * (M + M.T)).min() < -tol * max(1.0, np.abs(M).max()):
        raise ValueError(f"{name} is not positive semidefinite")


def cv_matrices(noise: EkfNoise):
    dt = noise.dt
    I2 = np.eye(2)
    F = np.block([[I2, dt * I2], [np.zeros((2, 2)), I2]])
    Bu = np.vstack([0.5 * dt**2 * I2, dt * I2])
    q = noise.accel_var
    Q = q * np.block([[dt**3 / 3 * I2, dt**2 / 2 * I2], [dt**2 / 2 * I2, dt * I2]])
    H = np.hstack([I2, np.zeros((2, 2))])
    return F, Bu, Q, H


@dataclass
class EkfLog:
    states: np.ndarray        # (n, 4) posterior means
    covs: np.ndarray          # (n, 4, 4)
    innovations: np.ndarray   # (n, 2), nan where no observation


def ekf_run(controls, observations, init: EkfState, noise: EkfNoise) -> EkfLog:
    """Constant-velocity EKF driven by acceleration controls.

    ``observations`` rows that contain NaN are skipped (prediction only).
    """
    if noise.accel_var < 0 or noise.obs_var <= 0:
        raise ValueError("noise variances must be nonnegative (obs strictly positive)")
    U = np.asarray(controls, dtype=float)
    Y = np.asarray(observations, dtype=float)
    if U.shape[0] != Y.shape[0]:
        raise ValueError("controls and observations are not aligned")
    F, Bu, Q, H = cv_matrices(noise)
    R = noise.obs_var * np.eye(2)
    x, P = init.x.copy(), init.P.copy()
    n = Y.shape[0]
    xs, Ps, inn = np.zeros((n, 4)), np.zeros((n, 4, 4)), np.full((n, 2), np.nan)
    for i in range(n):
        x = F @ x + Bu @ U[i]
        P = F @ P @ F.T + Q
        P = 0.5 * (P + P.T)
        if np.all(np.isfinite(Y[i])):
            nu = Y[i] - H @ x
            S = H @ P @ H.T + R
            Kg = np.linalg.solve(S, H @ P).T
            x = x + Kg @ nu
            IKH = np.eye(4) - Kg @ H
            P = IKH @ P @ IKH.T + Kg @ R @ Kg.T  # Joseph form
            P = 0.5 * (P + P.T)
            inn[i] = nu
        xs[i], Ps[i] = x, P
    return EkfLog(xs, Ps, inn)


# -- evaluation ---------------------------------------------------------------------


@dataclass
class ErrorReport:
    errors: np.ndarray
    mean: float
    p90: float
    max: float
    cdf: np.ndarray  # (n, 2) sorted (error, fraction)

    def summary(self) -> dict:
        return {"mean": self.mean, "p90": self.p90, "max": self.max}


def error_report(estimates, truth) -> ErrorReport:
    E = np.asarray(estimates, dtype=float)
    Tr = np.asarray(truth, dtype=float)
    if E.shape != Tr.shape:
        raise ValueError("estimates and truth differ in shape")
    if E.shape[0] == 0:
        raise ValueError("empty input")
    e = np.linalg.norm(E - Tr, axis=1) if E.ndim == 2 else np.abs(E - Tr)
    srt = np.sort(e)
    cdf = np.stack([srt, np.arange(1, e.size + 1) / e.size], axis=1)
    return ErrorReport(e, float(e.mean()), float(np.percentile(e, 90)), float(e.max()), cdf)


@dataclass
class CaseStudyResult:
    seed: int
    baseline: ErrorReport
    corrected: ErrorReport
    ekf: ErrorReport
    attn_nlos: float
    attn_los: float
    loss_curve: np.ndarray
    test_epochs: np.ndarray
    attention: np.ndarray     # (n_test, K) received spatial attention at each window end
    corrected_track: np.ndarray
    ekf_track: np.ndarray
    params: dict

    @property
    def improvement(self) -> float:
        return 1.0 - self.corrected.mean / self.baseline.mean

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "baseline": self.baseline.summary(),
            "corrected": self.corrected.summary(),
            "ekf": self.ekf.summary(),
            "improvement": self.improvement,
            "attn_nlos": self.attn_nlos,
            "attn_los": self.attn_los,
            "final_loss": float(self.loss_curve[-1]),
        }


def run_case_study(seed: int, scen_cfg: ScenarioConfig = ScenarioConfig(),
                   cfg: CorrectorConfig = CorrectorConfig(), n_train: int = 340, n_test: int = 150,
                   imu_noise: float = 0.01, init_vel_var: float = 25.0) -> CaseStudyResult:
    """Scenario, training on the first ``n_train`` windows, evaluation on the last ``n_test``."""
    sc = make_scenario(seed, scen_cfg)
    G, ends = make_windows(sc.features, cfg.window)
    if n_train + n_test > len(ends):
        raise ValueError("not enough windows for the requested split")
    delta = sc.truth[ends] - sc.baseline[ends]
    tr = np.arange(n_train)
    te = np.arange(len(ends) - n_test, len(ends))
    params, curve = corrector_train(G[tr], delta[tr], cfg, residual_scale=scen_cfg.residual_scale)

    out, recv = corrector_forward(G[te], params, return_attention=True)
    corr_track = sc.baseline[ends[te]] + out
    truth_te = sc.truth[ends[te]]
    w_last = recv[:, -1]
    nl = sc.nlos[ends[te]]

    train_res = delta[tr] - corrector_forward(G[tr], params)
    rng = seed_streams(seed, scen_cfg.n_sats + 3)[-1]
    controls = sc.accel[ends[te]] + imu_noise * rng.standard_normal((n_test, 2))
    noise = EkfNoise(accel_var=max(imu_noise**2, 1e-12), obs_var=float(train_res.var(axis=0).mean()))
    # prior one step before the first test epoch; velocity unknown
    init = EkfState(np.concatenate([corr_track[0], np.zeros(2)]),
                    np.diag([noise.obs_var] * 2 + [init_vel_var] * 2))
    log = ekf_run(controls, corr_track, init, noise)

    return CaseStudyResult(
        seed=seed,
        baseline=error_report(sc.baseline[ends[te]], truth_te),
        corrected=error_report(corr_track, truth_te),
        ekf=error_report(log.states[:, :2], truth_te),
        attn_nlos=float(w_last[nl].mean()) if nl.any() else float("nan"),
        attn_los=float(w_last[~nl].mean()),
        loss_curve=curve,
        test_epochs=ends[te],
        attention=w_last,
        corrected_track=corr_track,
        ekf_track=log.states[:, :2],
        params=params,
    )
