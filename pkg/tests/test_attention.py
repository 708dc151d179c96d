import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from leocarto.attention import (
    MultiHeadParams,
    attention_weights,
    gated,
    gated_fuse,
    gaussian_kernel,
    multi_head,
    nw_estimate,
    nw_weights,
    sdpa,
    sdpa_backward,
    sigmoid,
    softmax,
)
from leocarto.optim import finite_difference_check
from leocarto.weights import Provenance, WeightVector

KEYS = [-10.0, 0.0, 8.0]
CANDS = [0.2, -0.1, -0.6]
finite = st.floats(-50, 50, allow_nan=False)


def test_nw_kernel_example():
    k = gaussian_kernel(0.0, KEYS, 5.0)
    np.testing.assert_allclose(k, [0.135, 1.0, 0.278], atol=5e-4)
    # oracle: direct exponentials and their sum
    e = [math.exp(-(x**2) / 50) for x in KEYS]
    w = nw_weights(0.0, KEYS, 5.0)
    np.testing.assert_allclose(w.w, [v / sum(e) for v in e], rtol=1e-14)
    np.testing.assert_allclose(w.w, [0.096, 0.708, 0.197], atol=5e-4)
    assert w.provenance is Provenance.NW_KERNEL


def test_nw_estimate_example():
    e = [math.exp(-(x**2) / 50) for x in KEYS]
    direct = sum(a * v for a, v in zip(e, CANDS)) / sum(e)
    assert nw_estimate(0.0, KEYS, CANDS, 5.0) == pytest.approx(direct, abs=1e-15)
    assert nw_estimate(0.0, KEYS, CANDS, 5.0) == pytest.approx(-0.17, abs=0.005)


def test_nw_degenerate_cases():
    assert nw_weights(3.0, [1.0], 0.1).w.tolist() == [1.0]
    np.testing.assert_allclose(nw_weights(0.0, KEYS, 1e6).w, 1 / 3, atol=1e-6)
    # far query would underflow a naive kernel
    w = nw_weights(1e4, KEYS, 1.0)
    assert w.w.argmax() == 2 and w.w.sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        nw_weights(0.0, KEYS, 0.0)
    with pytest.raises(ValueError):
        nw_weights(0.0, [], 1.0)


@given(finite, st.floats(0.1, 20), st.floats(-5, 5))
def test_nw_constant_values_and_translation(q, bw, c):
    assert nw_estimate(q, KEYS, [c, c, c], bw) == pytest.approx(c, abs=1e-12)
    a = nw_weights(q, KEYS, bw).w
    b = nw_weights(q + 7.5, [k + 7.5 for k in KEYS], bw).w
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_sdpa_example_unscaled():
    q = np.array([[1.0, 1.0]])
    K = np.array([[0.9, 0.0], [0.4, -2.0], [0.8, 0.0]])
    out, A = sdpa(q, K, [70.0, 68.0, 70.0], scale=False, return_weights=True)
    e = np.exp([0.9, -1.6, 0.8])
    np.testing.assert_allclose(A[0], e / e.sum(), rtol=1e-14)
    np.testing.assert_allclose(A[0], [0.503, 0.041, 0.455], atol=1e-3)
    assert out[0] == pytest.approx(69.9, abs=0.05)
    # scaling divides the scores by sqrt(2)
    e2 = np.exp(np.array([0.9, -1.6, 0.8]) / np.sqrt(2))
    np.testing.assert_allclose(attention_weights(q, K)[0], e2 / e2.sum(), rtol=1e-14)


def test_sdpa_identical_keys_give_row_mean():
    V = np.arange(12.0).reshape(4, 3)
    out = sdpa(np.ones((2, 5)), np.tile(np.arange(5.0), (4, 1)), V)
    np.testing.assert_allclose(out, np.tile(V.mean(0), (2, 1)))


def test_sdpa_shape_errors():
    with pytest.raises(ValueError):
        sdpa(np.ones((2, 3)), np.ones((4, 2)), np.ones((4, 1)))
    with pytest.raises(ValueError):
        sdpa(np.ones((2, 3)), np.ones((4, 3)), np.ones((5, 1)))


@given(arrays(float, (3, 5), elements=finite), st.floats(-100, 100))
def test_softmax_rows_and_shift_invariance(S, c):
    A = softmax(S)
    np.testing.assert_allclose(A.sum(-1), 1.0, atol=1e-9)
    np.testing.assert_allclose(softmax(S + c), A, atol=1e-12)


@given(arrays(float, (3, 4), elements=finite), arrays(float, (5, 4), elements=finite), arrays(float, (5, 2), elements=finite))
def test_sdpa_output_in_value_hull(Q, K, V):
    out = sdpa(Q, K, V)
    assert np.all(out >= V.min(0) - 1e-9) and np.all(out <= V.max(0) + 1e-9)


def test_sdpa_backward_finite_differences(rng):
    Q, K, V = rng.normal(size=(3, 4)), rng.normal(size=(5, 4)), rng.normal(size=(5, 2))
    G = rng.normal(size=(3, 2))
    params = {"Q": Q, "K": K, "V": V}

    def loss(p):
        return float((sdpa(p["Q"], p["K"], p["V"]) * G).sum())

    _, A = sdpa(Q, K, V, return_weights=True)
    dQ, dK, dV = sdpa_backward(G, Q, K, V, A)
    err = finite_difference_check(loss, params, {"Q": dQ, "K": dK, "V": dV})
    assert err < 1e-6


def naive_multi_head(X, p):
    """Token-by-token loops; no batched matmuls."""
    n = X.shape[0]
    h = p.W_Q.shape[0]
    rows = []
    for t in range(n):
        cat = []
        for i in range(h):
            q = X[t] @ p.W_Q[i]
            scores = [float(q @ (X[s] @ p.W_K[i])) / math.sqrt(q.size) for s in range(n)]
            m = max(scores)
            e = [math.exp(x - m) for x in scores]
            y = sum(e[s] / sum(e) * (X[s] @ p.W_V[i]) for s in range(n))
            if p.W_gate is not None:
                y = y / (1 + np.exp(-(X[t] @ p.W_gate[i])))
            cat.append(y)
        rows.append(np.concatenate(cat) @ p.W_O)
    return np.array(rows)


@pytest.mark.parametrize("gate", [False, True])
def test_multi_head_matches_naive_reference(rng, gate):
    X = rng.normal(size=(6, 5))
    p = MultiHeadParams.random(3, 5, 4, 2, rng, gated=gate)
    np.testing.assert_allclose(multi_head(X, p), naive_multi_head(X, p), rtol=1e-12, atol=1e-12)


def test_single_head_identity_output_is_sdpa(rng):
    X = rng.normal(size=(4, 3))
    WQ, WK = rng.normal(size=(1, 3, 2)), rng.normal(size=(1, 3, 2))
    p = MultiHeadParams(WQ, WK, np.eye(3)[None], np.eye(3))
    np.testing.assert_allclose(multi_head(X, p), sdpa(X @ WQ[0], X @ WK[0], X), atol=1e-14)


@given(st.integers(0, 10**6))
def test_multi_head_permutation_equivariant(seed):
    r = np.random.default_rng(seed)
    X = r.normal(size=(5, 4))
    p = MultiHeadParams.random(2, 4, 3, 3, r)
    perm = r.permutation(5)
    out, A = multi_head(X, p, return_weights=True)
    out_p, A_p = multi_head(X[perm], p, return_weights=True)
    np.testing.assert_allclose(out_p, out[perm], atol=1e-12)
    np.testing.assert_allclose(A_p, A[:, perm][:, :, perm], atol=1e-12)


def test_multi_head_params_validation(rng):
    with pytest.raises(ValueError):
        MultiHeadParams(np.ones((1, 3, 2)), np.ones((1, 3, 3)), np.ones((1, 3, 2)), np.ones((2, 3)))
    with pytest.raises(ValueError):
        MultiHeadParams(np.ones((2, 3, 2)), np.ones((2, 3, 2)), np.ones((2, 3, 2)), np.ones((3, 3)))


def test_gate_example():
    np.testing.assert_allclose(sigmoid([1.8, -1.2, 1.6]), [0.858, 0.231, 0.832], atol=5e-4)
    Y = np.array([[2.0, -4.0]])
    np.testing.assert_allclose(gated(Y, np.ones((1, 3)), np.zeros((3, 2))), Y / 2)
    np.testing.assert_allclose(gated(Y, np.ones((1, 1)), np.full((1, 2), 800.0)), Y)


def test_sigmoid_extremes_do_not_overflow():
    with np.errstate(over="raise"):
        s = sigmoid([-1000.0, 0.0, 1000.0])
    np.testing.assert_array_equal(s, [0.0, 0.5, 1.0])


@given(arrays(float, (3, 2), elements=finite), arrays(float, (3, 4), elements=finite), arrays(float, (4, 2), elements=finite))
def test_gate_never_increases_magnitude(Y, X, W):
    assert np.abs(gated(Y, X, W)).max() <= np.abs(Y).max()


ALPHA = WeightVector([0.503, 0.041, 0.456], Provenance.SOFTMAX)
GATES = sigmoid([1.8, -1.2, 1.6])
VALUES = [70.0, 68.0, 70.0]


def test_gated_fuse_examples():
    raw = sum(a * g * v for a, g, v in zip(ALPHA.w, GATES, VALUES))
    assert gated_fuse(ALPHA, GATES, VALUES, renormalize=False) == pytest.approx(raw, abs=1e-12)
    assert raw == pytest.approx(57.42, abs=0.005)
    ag = [a * g for a, g in zip(ALPHA.w, GATES)]
    ren = sum(w * v for w, v in zip(ag, VALUES)) / sum(ag)
    assert gated_fuse(ALPHA, GATES, VALUES) == pytest.approx(ren, abs=1e-12)
    assert ren == pytest.approx(69.98, abs=0.005)


def test_gated_fuse_unit_gates_reduce_to_weighted_mean():
    g = [1 - 1e-15] * 3
    plain = float(ALPHA.w @ VALUES)
    assert gated_fuse(ALPHA, g, VALUES) == pytest.approx(plain, abs=1e-9)
    assert gated_fuse(ALPHA, g, VALUES, renormalize=False) == pytest.approx(plain, abs=1e-9)
    with pytest.raises(ValueError):
        gated_fuse(ALPHA, [0.5, 1.2, 0.5], VALUES)
