"""Experiment bodies. Each returns ``(metrics, files)`` without touching disk."""

from __future__ import annotations

import numpy as np

from . import allocation as alloc
from . import localization as loc
from . import radiomap as rm
from .artifacts import dumps_csv, dumps_json, grid_csv, grid_json
from .config import ExperimentConfig
from .geometry import GeometrySnapshot, fisher_information, range_jacobian
from .measurements import NlosBurstSpec, inf_pathloss, load_inf_scene

KM = 1000.0


def fim_demo(cfg: ExperimentConfig, p):
    user = np.asarray(p.user_km, dtype=float) * KM

    def report(sats_km, sigmas):
        g = GeometrySnapshot.from_arrays(user, np.asarray(sats_km, dtype=float) * KM)
        H = range_jacobian(g)
        return H, fisher_information(H, sigmas)

    s2 = p.example2_sats_km
    H2, full2 = report(s2, [p.example2_sigma_m] * len(s2))
    _, drop2 = report(s2[1:], [p.example2_sigma_m] * (len(s2) - 1))
    s3, sig3 = p.example3_sats_km, p.example3_sigma_m
    H3, r12 = report(s3[:2], sig3[:2])
    _, r123 = report(s3, sig3)
    metrics = {
        "example2": {"H": H2, "full": full2.to_dict(), "without_first": drop2.to_dict()},
        "example3": {"H": H3, "J12": r12.J, "J12_inv": r12.crlb, "std12": r12.std_bounds,
                     "J123": r123.J, "J123_inv": r123.crlb, "std123": r123.std_bounds,
                     "sats12": r12.to_dict(), "sats123": r123.to_dict()},
    }
    return metrics, {}


def reliability_demo(cfg: ExperimentConfig, p):
    sc = load_inf_scene(p.fixture)
    s = rm.SampleSet(sc.sensors, sc.measured_dbm)
    w = rm.idw_weights(sc.query, s, p.idw_power)
    beta = rm.solve_reliability_beta(w, sc.measured_dbm, p.target_index, p.target_weight, *p.beta_bracket)
    wr = rm.reliability_weights(w, sc.measured_dbm, beta)
    est_u = float(w.w @ sc.measured_dbm)
    est_r = float(wr.w @ sc.measured_dbm)
    d = np.linalg.norm(sc.sensors - sc.bs, axis=1)
    model = np.array([inf_pathloss(di, sc.f_ghz, sc.p_t_dbm, bool(l)) for di, l in zip(d, sc.los)])
    metrics = {
        "weights_uniform": w.w, "weights_reliability": wr.w, "beta": beta,
        "median": float(np.median(sc.measured_dbm)),
        "deviations": np.abs(sc.measured_dbm - np.median(sc.measured_dbm)),
        "estimate_uniform_dbm": est_u, "estimate_reliability_dbm": est_r,
        "error_uniform_db": est_u - sc.ground_truth_dbm, "error_reliability_db": est_r - sc.ground_truth_dbm,
        "ground_truth_dbm": sc.ground_truth_dbm, "fixture_beta": sc.beta,
        "model_inf_dbm": model, "ray_traced_dbm": sc.ray_traced_dbm,
    }
    rows = [(i + 1, *sc.sensors[i], sc.measured_dbm[i], int(sc.los[i]), w.w[i], wr.w[i]) for i in range(len(s))]
    files = {"weights.csv": dumps_csv(["sensor", "x", "y", "measured_dbm", "los", "w_uniform", "w_reliability"], rows)}
    return metrics, files


def radiomap_seed(seed: int, p):
    """One synthetic radio-map run: field, samples, training and all three methods."""
    rng = np.random.Generator(np.random.PCG64(seed))
    spec = rm.FieldSpec.random(rng, n_bumps=p.n_bumps)
    res = (p.grid, p.grid)
    truth, g = rm.gen_field(spec, resolution=res)
    X = rng.uniform(0, 1, (p.n_samples, 2))
    s = rm.SampleSet(X, g(X) + p.noise_std * rng.standard_normal(p.n_samples))
    pts = rm.RadioMapGrid.points(truth.extent, res)
    qi = rng.choice(len(pts), p.n_train_queries, replace=False)
    hyper = rm.TrainHyper(lr=p.lr, epochs=p.epochs, seed=seed, optimizer=p.optimizer, clip=p.clip,
                          scorer_width=p.scorer_width, predictor_width=p.predictor_width)
    params, curve = rm.attn_rem_train(s, pts[qi], truth.values.ravel()[qi], hyper)
    preds = {
        "attention": rm.RadioMapGrid(truth.extent, res, rm.attn_rem_predict(pts, s, params)),
        "idw": rm.interpolate_grid(rm.idw, s, truth.extent, res, p=p.idw_power),
        "nw": rm.interpolate_grid(rm.nw_interp, s, truth.extent, res, bandwidth=p.nw_bandwidth),
    }
    metrics = {k: rm.rem_metrics(v, truth).as_dict() for k, v in preds.items()}
    running = np.minimum.accumulate(curve)
    metrics["loss_first"] = float(curve[0])
    metrics["loss_final"] = float(curve[-1])
    metrics["loss_reduction"] = float(curve[0] / running[-1])
    return metrics, truth, preds, curve, s


def radiomap(cfg: ExperimentConfig, p):
    per_seed, files = {}, {}
    for k in range(p.n_seeds):
        seed = cfg.seed + k
        m, truth, preds, curve, s = radiomap_seed(seed, p)
        per_seed[str(seed)] = m
        if k == 0:
            files["truth.csv"] = grid_csv(truth)
            for name, gr in preds.items():
                files[f"pred_{name}.csv"] = grid_csv(gr)
                err = rm.RadioMapGrid(gr.extent, gr.resolution, np.abs(gr.values - truth.values))
                files[f"error_{name}.csv"] = grid_csv(err)
            files["pred_attention.json"] = dumps_json(grid_json(preds["attention"]))
            files["loss_curve.csv"] = dumps_csv(["epoch", "loss"], enumerate(curve))
            files["samples.csv"] = dumps_csv(["x", "y", "value"], np.column_stack([s.locations, s.values]).tolist())
    ordered = all(
        m["attention"]["rmse"] < min(m["idw"]["rmse"], m["nw"]["rmse"])
        and m["attention"]["maxae"] < min(m["idw"]["maxae"], m["nw"]["maxae"])
        for m in per_seed.values()
    )
    return {"seeds": per_seed, "attention_best_on_all_seeds": ordered}, files


def localize_nw(cfg: ExperimentConfig, p):
    bc = loc.TrajBenchConfig(p.n, p.noise_std, p.outlier_frac, p.outlier_std, p.window, p.bandwidth)
    runs = [loc.trajectory_benchmark(cfg.seed + k, bc) for k in range(p.n_seeds)]
    keys = ("rmse_raw", "rmse_ma", "rmse_nw", "smooth_ma", "smooth_nw")
    metrics = {k: [r[k] for r in runs] for k in keys}
    metrics.update({f"median_{k}": float(np.median(metrics[k])) for k in keys})
    metrics["nw_smoother_count"] = int(sum(r["smooth_nw"] < r["smooth_ma"] for r in runs))
    r = runs[0]
    rows = np.column_stack([r["times"], r["truth"], r["raw"], r["ma"], r["nw"]])
    files = {
        "trajectory.csv": dumps_csv(
            ["t", "truth_x", "truth_y", "raw_x", "raw_y", "ma_x", "ma_y", "nw_x", "nw_y"], rows.tolist()),
        "nw_weights.csv": dumps_csv(None, r["weights"].tolist()),
    }
    return metrics, files


def localize_attn(cfg: ExperimentConfig, p):
    sc_cfg = loc.ScenarioConfig(
        n_steps=p.n_steps, n_sats=p.n_sats, range_noise=p.range_noise,
        nlos=NlosBurstSpec(tuple(p.burst_len), p.bias_mean, p.bias_std, p.contamination),
    )
    c_cfg = loc.CorrectorConfig(window=p.window, d_z=p.d_z, heads=p.heads, d_k=p.d_k, snr_gain=p.snr_gain,
                               lr=p.lr, epochs=p.epochs)
    per_seed, files = {}, {}
    for k in range(p.n_seeds):
        seed = cfg.seed + k
        r = loc.run_case_study(seed, sc_cfg, loc.CorrectorConfig(**{**vars(c_cfg), "seed": seed}),
                               p.n_train, p.n_test, p.imu_noise)
        per_seed[str(seed)] = r.summary()
        if k == 0:
            sc = loc.make_scenario(seed, sc_cfg)
            e = r.test_epochs
            rows = np.column_stack([e, sc.truth[e], sc.baseline[e], r.corrected_track, r.ekf_track])
            files["trajectory.csv"] = dumps_csv(
                ["epoch", "truth_x", "truth_y", "gps_x", "gps_y", "corr_x", "corr_y", "ekf_x", "ekf_y"], rows.tolist())
            files["attention_heatmap.csv"] = dumps_csv(
                ["epoch"] + [f"sat{j + 1}" for j in range(p.n_sats)],
                np.column_stack([e, r.attention]).tolist())
            files["nlos_flags.csv"] = dumps_csv(
                ["epoch"] + [f"sat{j + 1}" for j in range(p.n_sats)],
                np.column_stack([e, sc.nlos[e].astype(int)]).tolist())
            cdf_rows = []
            for name, rep in (("baseline", r.baseline), ("corrected", r.corrected), ("ekf", r.ekf)):
                cdf_rows += [(name, *row) for row in rep.cdf.tolist()]
            files["error_cdf.csv"] = dumps_csv(["method", "error_m", "fraction"], cdf_rows)
            files["loss_curve.csv"] = dumps_csv(["epoch", "loss"], enumerate(r.loss_curve))
    imps = [v["improvement"] for v in per_seed.values()]
    metrics = {"seeds": per_seed, "mean_improvement": float(np.mean(imps)),
               "seeds_improved_20pct": int(sum(i >= 0.2 for i in imps))}
    return metrics, files


def _channel_rows(beta, sigma, res):
    return [(i + 1, beta[i], sigma[i], res.p[i], res.n[i]) for i in range(len(beta))]


def waterfill(cfg: ExperimentConfig, p):
    res = alloc.waterfill(p.beta, p.sigma, p.P)
    m = res.to_dict()
    m["capacity_bits"] = alloc.capacity(p.beta, p.sigma, res.p, bits=True)
    m["floors"] = (np.asarray(p.sigma) / np.asarray(p.beta)).tolist()
    files = {"allocation.csv": dumps_csv(["channel", "beta", "sigma", "p", "n"], _channel_rows(p.beta, p.sigma, res))}
    return m, files


def adv_waterfill(cfg: ExperimentConfig, p):
    c = alloc.ChannelSet(p.beta, p.sigma, p.P, p.N)
    res = alloc.minimax_waterfill(c, p.max_rounds, p.tol, p.method)
    if not res.converged:
        raise FloatingPointError(f"minimax did not converge: {res.diagnostics}")
    m = res.to_dict()
    m["capacity_bits"] = alloc.capacity(c.beta, c.sigma, res.p, res.n, bits=True)
    m["capacity_no_interference"] = alloc.waterfill(c.beta, c.sigma, c.P).capacity
    m["mu_nu_residual"] = alloc.mu_nu_residual(c.beta, c.sigma, res)
    m["certification"] = alloc.certify_saddle(c, res, p.n_checks, seed=cfg.seed or 0)
    m["diagnostics"] = res.diagnostics
    files = {"allocation.csv": dumps_csv(["channel", "beta", "sigma", "p", "n"], _channel_rows(p.beta, p.sigma, res))}
    return m, files


def beamhop(cfg: ExperimentConfig, p):
    if p.rates is not None:
        R = np.asarray(p.rates, dtype=float)
    else:
        R = np.random.Generator(np.random.PCG64(cfg.seed)).uniform(0, 1, (p.T, p.B))
    sched = alloc.beam_hop(R, p.Bmax)
    m = {
        "objective": sched.objective, "feasible": sched.feasible(p.Bmax),
        "best_beam_per_slot": [alloc.beam_switch(r) for r in R],
        "schedule": sched.schedule, "rates": R,
    }
    hdr = ["slot"] + [f"beam{b + 1}" for b in range(R.shape[1])]
    files = {
        "schedule.csv": dumps_csv(hdr, np.column_stack([np.arange(1, len(R) + 1), sched.schedule]).tolist()),
        "rates.csv": dumps_csv(hdr, [[t + 1, *row] for t, row in enumerate(R.tolist())]),
    }
    return m, files


EXPERIMENTS = {
    "fim-demo": fim_demo,
    "reliability-demo": reliability_demo,
    "radiomap": radiomap,
    "localize-nw": localize_nw,
    "localize-attn": localize_attn,
    "waterfill": waterfill,
    "adv-waterfill": adv_waterfill,
    "beamhop": beamhop,
}


def run_experiment(cfg: ExperimentConfig):
    return EXPERIMENTS[cfg.experiment](cfg, cfg.resolved_params())
