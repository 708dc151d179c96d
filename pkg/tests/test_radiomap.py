import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from leocarto.attention import nw_estimate
from leocarto.measurements import load_inf_scene
from leocarto.optim import DivergenceError, finite_difference_check
from leocarto.radiomap import (
    AttnRemParams,
    Bump,
    ConditioningError,
    FieldSpec,
    RadioMapGrid,
    SampleSet,
    TrainHyper,
    attn_rem_loss_and_grad,
    attn_rem_predict,
    attn_rem_train,
    attn_rem_weights,
    gen_field,
    idw,
    idw_weights,
    interpolate_grid,
    kriging,
    nw_interp,
    reliability_weights,
    rem_metrics,
    solve_reliability_beta,
)
from leocarto.weights import Provenance, WeightVector

UNIT = (0.0, 1.0, 0.0, 1.0)


@pytest.fixture(scope="module")
def inf():
    sc = load_inf_scene()
    return sc, SampleSet(sc.sensors, sc.measured_dbm)


def test_idw_inf_weights_and_estimate(inf):
    sc, s = inf
    d2 = [(13 - x) ** 2 + (9 - y) ** 2 for x, y in sc.sensors]
    oracle = [1 / v / sum(1 / u for u in d2) for v in d2]
    w = idw_weights(sc.query, s, 2.0)
    np.testing.assert_allclose(w.w, oracle, rtol=1e-13)
    np.testing.assert_allclose(w.w, [0.280, 0.140, 0.095, 0.485], atol=1e-3)
    est = idw(sc.query, s, 2.0)
    assert round(est, 1) == -51.8
    assert round(est - sc.ground_truth_dbm, 1) == -5.2


def test_reliability_inf_example(inf):
    sc, s = inf
    base = idw_weights(sc.query, s)
    v = s.values
    assert np.median(v) == pytest.approx(-46.15, abs=1e-12)
    np.testing.assert_allclose(np.abs(v - np.median(v)), [9.25, 3.95, 3.95, 16.55], atol=1e-12)
    beta = solve_reliability_beta(base, v, 3, 0.063)
    assert beta == pytest.approx(sc.beta, abs=1e-10)
    w = reliability_weights(base, v, beta)
    assert w.w[3] == pytest.approx(0.063, abs=1e-10)
    est = float(w.w @ v)
    assert round(est, 1) == -45.6
    # published error is +0.9; unrounded it is +0.956
    assert est - sc.ground_truth_dbm == pytest.approx(0.9, abs=0.06)
    # oracle: direct products, no log domain
    raw = base.w * np.exp(-beta * np.abs(v - np.median(v)))
    np.testing.assert_allclose(w.w, raw / raw.sum(), rtol=1e-12)


def test_reliability_degenerate_cases(inf):
    sc, s = inf
    base = idw_weights(sc.query, s)
    np.testing.assert_allclose(reliability_weights(base, s.values, 0.0).w, base.w, rtol=1e-14)
    np.testing.assert_allclose(reliability_weights(base, [3.0] * 4, 2.0).w, base.w, rtol=1e-14)
    assert reliability_weights(base, s.values, 1.0).provenance is Provenance.RELIABILITY
    with pytest.raises(ValueError):
        reliability_weights(base, s.values, -1.0)
    with pytest.raises(ValueError):
        solve_reliability_beta(base, s.values, 3, 0.9)


@given(arrays(float, 6, elements=st.floats(-100, 0)), st.floats(0, 3))
def test_reliability_monotone_in_deviation(v, beta):
    w = reliability_weights(WeightVector.uniform(6), v, beta).w
    dev = np.abs(v - np.median(v))
    o = np.argsort(dev, kind="stable")
    assert np.all(np.diff(w[o]) <= 1e-15)


def test_idw_exact_hit_and_validation(inf):
    sc, s = inf
    assert idw(sc.sensors[2], s) == s.values[2]
    assert idw(sc.sensors[2] + 1e-10, s) == s.values[2]
    with pytest.raises(ValueError):
        idw(sc.query, s, 0.0)


@given(arrays(float, 2, elements=st.floats(0, 20)), st.floats(0.1, 5), st.floats(0.5, 4))
def test_interpolators_are_convex(q, bw, p):
    s = SampleSet([[12, 5], [18, 12], [8, 14], [16, 8.1]], [-36.9, -50.1, -42.2, -62.7])
    lo, hi = s.values.min() - 1e-9, s.values.max() + 1e-9
    assert lo <= idw(q, s, p) <= hi
    assert lo <= nw_interp(q, s, bw) <= hi
    assert lo <= float(reliability_weights(idw_weights(q, s, p), s.values, bw).w @ s.values) <= hi


def test_nw_interp_cases(rng):
    s = SampleSet(rng.uniform(size=(7, 2)), rng.normal(size=7))
    q = np.array([0.3, 0.6])
    assert nw_interp(q, s, 0.1) == nw_estimate(q, s.locations, s.values, 0.1)
    assert nw_interp(q, SampleSet([[0.5, 0.5]], [4.0]), 0.01) == 4.0
    assert nw_interp(q, SampleSet(s.locations, np.full(7, 2.5)), 0.2) == pytest.approx(2.5, abs=1e-14)


def test_kriging_three_point_oracle():
    # 1-D points embedded on the x axis
    x = np.array([0.0, 1.0, 2.5])
    s = SampleSet(np.c_[x, np.zeros(3)], [1.0, 3.0, -2.0])
    var, ell, nv, mu, q = 2.0, 1.3, 0.1, 0.5, 1.7
    K = np.array([[var * np.exp(-((a - b) ** 2) / (2 * ell**2)) for b in x] for a in x]) + nv * np.eye(3)
    k = np.array([var * np.exp(-((a - q) ** 2) / (2 * ell**2)) for a in x])
    alpha = np.linalg.solve(K, s.values - mu)
    est, pv = kriging([q, 0.0], s, mu, (var, ell), nv)
    assert est == pytest.approx(mu + k @ alpha, abs=1e-12)
    assert pv == pytest.approx(var - k @ np.linalg.solve(K, k), abs=1e-12)


def test_kriging_interpolates_and_decays(rng):
    s = SampleSet(rng.uniform(size=(5, 2)), rng.normal(size=5))
    for i in range(5):
        est, pv = kriging(s.locations[i], s, 0.0, (1.0, 0.3))
        assert est == pytest.approx(s.values[i], abs=1e-8)
        assert pv == pytest.approx(0.0, abs=1e-8)
    est, pv = kriging([50.0, 50.0], s, 1.5, (2.0, 0.3))
    assert est == pytest.approx(1.5) and pv == pytest.approx(2.0)


def test_kriging_variance_grows_along_ray():
    s = SampleSet([[0.0, 0.0]], [1.0])
    pvs = [kriging([t, 0.0], s, 0.0, (1.0, 0.5))[1] for t in np.linspace(0, 3, 30)]
    assert np.all(np.diff(pvs) >= -1e-15)


def test_kriging_errors():
    s = SampleSet([[0.0, 0.0], [0.0, 0.0]], [1.0, 2.0])
    with pytest.raises(ConditioningError):
        kriging([1.0, 0.0], s, 0.0, (1.0, 0.5), 0.0)
    with pytest.raises(ValueError):
        kriging([1.0, 0.0], s, 0.0, (-1.0, 0.5), 0.1)


def test_gen_field_examples(rng):
    spec = FieldSpec([Bump((0.3, 0.6), 0.8, 0.1)], trend=(0.1, -0.2))
    assert spec.evaluate([0.3, 0.6])[0] == pytest.approx(0.8 + 0.03 - 0.12, abs=1e-15)
    grid, g = gen_field(FieldSpec(), UNIT, (5, 4))
    assert np.all(grid.values == 0.0)
    grid, g = gen_field(FieldSpec.random(rng), UNIT, (50, 50))
    xs, ys = RadioMapGrid.cell_centers(UNIT, (50, 50))
    for _ in range(100):
        i, j = rng.integers(50, size=2)
        assert abs(grid.values[i, j] - g([xs[i], ys[j]])[0]) < 1e-12
    with pytest.raises(ValueError):
        Bump((0, 0), 1.0, 0.0)


def test_random_field_respects_design_ranges(rng):
    spec = FieldSpec.random(rng)
    assert len(spec.bumps) == 3
    assert all(0.5 <= b.amplitude <= 1 and 0.08 <= b.width <= 0.2 for b in spec.bumps)
    assert np.hypot(*spec.trend) == pytest.approx(0.1)


def test_grid_validation():
    with pytest.raises(ValueError):
        RadioMapGrid(UNIT, (1, 3), np.zeros(3))
    with pytest.raises(ValueError):
        RadioMapGrid(UNIT, (2, 2), [0, 1, np.nan, 2])


def test_interpolate_grid_layout(rng):
    s = SampleSet(rng.uniform(size=(6, 2)), rng.normal(size=6))
    gr = interpolate_grid(idw, s, UNIT, (4, 3))
    xs, ys = RadioMapGrid.cell_centers(UNIT, (4, 3))
    assert gr.values[2, 1] == idw([xs[2], ys[1]], s)


def small_problem(rng, n=8, m=12):
    s = SampleSet(rng.uniform(size=(n, 2)), rng.normal(size=n))
    return s, rng.uniform(size=(m, 2)), rng.normal(size=m)


def test_attn_rem_degenerate_predictors(rng):
    s, Q, _ = small_problem(rng)
    p = AttnRemParams.init(rng)
    p.w2[:] = 0.0
    p.v2[:] = 0.0
    np.testing.assert_allclose(attn_rem_predict(Q, s, p), s.values.mean(), atol=1e-14)
    np.testing.assert_allclose(attn_rem_weights(Q[0], s, p).w, 1 / len(s))
    p = AttnRemParams.init(rng)
    one = SampleSet([[0.2, 0.4]], [1.7])
    q = np.array([0.5, 0.5])
    f = p.skip[0] * 1.7 + np.tanh(np.r_[q, 1.7] @ p.V1 + p.c1) @ p.v2 + p.c2[0]
    assert attn_rem_predict(q, one, p) == pytest.approx(f, abs=1e-14)


@pytest.mark.parametrize("point", range(10))
def test_attn_rem_gradient_check(point):
    r = np.random.Generator(np.random.PCG64(100 + point))
    s, Q, t = small_problem(r)
    p = AttnRemParams.init(r, head_scale=1.0)
    for v in vars(p).values():
        v += 0.3 * r.standard_normal(v.shape)
    _, g = attn_rem_loss_and_grad(Q, t, s, p)
    params = p.as_dict()
    err = finite_difference_check(lambda d: attn_rem_loss_and_grad(Q, t, s, AttnRemParams(**d))[0], params, g, h=1e-5)
    assert err < 1e-4


def test_attn_rem_train_constant_target(rng):
    s, Q, _ = small_problem(rng)
    _, curve = attn_rem_train(s, Q, np.full(len(Q), 0.7), TrainHyper(lr=0.02, epochs=800, seed=1))
    assert curve[-1] < 1e-6


def test_attn_rem_train_deterministic_and_decreasing():
    r = np.random.Generator(np.random.PCG64(3))
    spec = FieldSpec.random(r)
    X = r.uniform(size=(30, 2))
    s = SampleSet(X, spec.evaluate(X))
    Q = r.uniform(size=(60, 2))
    h = TrainHyper(lr=0.01, epochs=150, seed=5)
    p1, c1 = attn_rem_train(s, Q, spec.evaluate(Q), h)
    p2, c2 = attn_rem_train(s, Q, spec.evaluate(Q), h)
    np.testing.assert_array_equal(c1, c2)
    assert c1[-1] < c1[0]
    assert np.all(np.diff(np.minimum.accumulate(c1)) <= 0)


def test_attn_rem_divergence_is_reported(rng):
    s, Q, t = small_problem(rng)
    with pytest.raises(DivergenceError) as exc:
        attn_rem_train(s, Q, 1e5 * t, TrainHyper(lr=1e-3, epochs=5, seed=0, diverge_at=10.0))
    assert len(exc.value.loss_curve) == 1


def test_params_round_trip(rng):
    p = AttnRemParams.init(rng)
    q = AttnRemParams.from_dict(p.as_dict())
    assert all(np.array_equal(getattr(p, k), getattr(q, k)) for k in vars(p))


def test_metric_examples(rng):
    truth = RadioMapGrid(UNIT, (3, 4), rng.normal(size=12))
    m = rem_metrics(truth, truth)
    assert (m.rmse, m.mae, m.maxae, m.r2) == (0.0, 0.0, 0.0, 1.0)
    m = rem_metrics(RadioMapGrid(UNIT, (3, 4), truth.values + 1), truth)
    assert m.rmse == pytest.approx(1) and m.mae == pytest.approx(1) and m.maxae == pytest.approx(1)
    assert rem_metrics(truth, RadioMapGrid(UNIT, (3, 4), np.ones(12))).r2 is None
    with pytest.raises(ValueError):
        rem_metrics(truth, RadioMapGrid(UNIT, (4, 3), np.ones(12)))


@given(arrays(float, (3, 3), elements=st.floats(-5, 5)), arrays(float, (3, 3), elements=st.floats(-5, 5)))
@settings(max_examples=40)
def test_metrics_match_direct_formulas(a, b):
    pred, truth = RadioMapGrid(UNIT, (3, 3), a), RadioMapGrid(UNIT, (3, 3), b)
    m = rem_metrics(pred, truth)
    errs = [x - y for x, y in zip(a.ravel().tolist(), b.ravel().tolist())]
    assert m.rmse == pytest.approx((sum(e * e for e in errs) / 9) ** 0.5, abs=1e-12)
    assert m.mae == pytest.approx(sum(abs(e) for e in errs) / 9, abs=1e-12)
    assert m.maxae == pytest.approx(max(abs(e) for e in errs), abs=1e-12)
    tm = sum(b.ravel().tolist()) / 9
    ss = sum((y - tm) ** 2 for y in b.ravel().tolist())
    if ss > 1e-9:
        assert m.r2 == pytest.approx(1 - sum(e * e for e in errs) / ss, rel=1e-9, abs=1e-9)
