import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import adversary_grid_min, beam_hop_exhaustive, grid_saddle_3, waterfill_bisect

from leocarto.allocation import (
    BeamSchedule,
    ChannelSet,
    adversary_kkt_residual,
    adversary_response,
    beam_hop,
    beam_switch,
    capacity,
    certify_saddle,
    minimax_waterfill,
    mu_nu_residual,
    water_level,
    waterfill,
)

pos = st.floats(0.05, 5.0)


def channels(draw_m):
    return st.integers(1, draw_m).flatmap(
        lambda m: st.tuples(st.lists(pos, min_size=m, max_size=m), st.lists(pos, min_size=m, max_size=m), st.floats(0.1, 10))
    )


def random_instance(rng, m, N=None):
    return ChannelSet(rng.uniform(0.2, 2.0, m), rng.uniform(0.1, 1.5, m), rng.uniform(0.5, 4.0),
                      rng.uniform(0.2, 2.0) if N is None else N)


# -- water-filling ----------------------------------------------------------


def test_waterfill_examples():
    r = waterfill([2.0] * 4, [1.0] * 4, 3.0)
    np.testing.assert_allclose(r.p, 0.75)
    assert r.nu == pytest.approx(0.75 + 0.5)
    r = waterfill([1.0, 1.0], [1.0, 10.0], 1.0)
    np.testing.assert_allclose(r.p, [1.0, 0.0])
    assert r.nu == 2.0 and r.active_set == [0]


def test_water_level_breakpoints():
    assert water_level([1.0, 2.0, 4.0], 1.0) == 2.0
    assert water_level([1.0, 2.0, 4.0], 3.0) == 3.0
    assert water_level([1.0, 2.0, 4.0], 6.0) == pytest.approx(13 / 3)


@pytest.mark.parametrize("seed", range(5))
def test_waterfill_matches_bisection_8_channels(seed):
    r = np.random.Generator(np.random.PCG64(seed))
    b, s, P = r.uniform(0.1, 3, 8), r.uniform(0.1, 2, 8), r.uniform(0.5, 6)
    res = waterfill(b, s, P)
    p, nu = waterfill_bisect(b, s, P)
    np.testing.assert_allclose(res.p, p, atol=1e-8)
    assert res.nu == pytest.approx(nu, abs=1e-8)
    assert res.p.sum() == pytest.approx(P, abs=1e-9)
    assert res.kkt_residual < 1e-9


@given(channels(6))
def test_waterfill_kkt_and_budget(inst):
    b, s, P = map(np.asarray, inst)
    r = waterfill(b, s, P)
    assert abs(r.p.sum() - P) <= 1e-9 * max(1, P)
    assert np.all(r.p >= 0)
    act = r.p > 0
    np.testing.assert_allclose(r.p[act] + (s / b)[act], r.nu, rtol=1e-12)
    assert np.all(r.nu <= (s / b)[~act] + 1e-12)


@given(channels(5), st.floats(1.01, 3.0), st.integers(0, 4))
def test_waterfill_capacity_monotone(inst, f, i):
    b, s, P = map(np.asarray, inst)
    i = i % b.size
    base = waterfill(b, s, P).capacity
    s2 = s.copy()
    s2[i] *= f
    assert waterfill(b, s2, P).capacity <= base + 1e-12
    assert waterfill(b, s, P * f).capacity >= base - 1e-12


def test_channel_set_validation():
    with pytest.raises(ValueError):
        ChannelSet([1.0, -1.0], [1.0, 1.0], 1.0)
    with pytest.raises(ValueError):
        ChannelSet([1.0], [1.0], 0.0)
    with pytest.raises(ValueError):
        ChannelSet([1.0], [1.0], 1.0, -0.5)
    with pytest.raises(ValueError):
        ChannelSet([1.0], [1.0, 2.0], 1.0)


def test_capacity_bits():
    assert capacity([1.0], [1.0], [1.0], bits=True) == pytest.approx(1.0)
    assert capacity([1.0], [1.0], [1.0]) == pytest.approx(np.log(2))


# -- adversary --------------------------------------------------------------


def test_adversary_single_active_channel():
    n, mu = adversary_response([0.0, 2.0, 0.0], [1.0, 1.0, 1.0], [1.0, 1.0, 1.0], 3.0)
    np.testing.assert_allclose(n, [0.0, 3.0, 0.0])
    assert mu < 0


def test_adversary_zero_budget():
    n, mu = adversary_response([1.0, 2.0], [1.0, 1.0], [1.0, 1.0], 0.0)
    assert np.all(n == 0) and mu == 0.0
    c = ChannelSet([1.0, 0.5], [0.5, 0.5], 2.0, 0.0)
    assert minimax_waterfill(c).capacity == waterfill(c.beta, c.sigma, c.P).capacity


@pytest.mark.parametrize("seed", range(3))
def test_adversary_matches_grid_dp(seed):
    r = np.random.Generator(np.random.PCG64(20 + seed))
    b, s, p, N = r.uniform(0.3, 2, 4), r.uniform(0.2, 1.5, 4), r.uniform(0, 2, 4), r.uniform(0.5, 3)
    n, mu = adversary_response(p, b, s, N)
    assert n.sum() == pytest.approx(N, abs=1e-12) and np.all(n >= 0)
    assert adversary_kkt_residual(p, b, s, n, mu) < 1e-6
    grid = adversary_grid_min(p, b, s, N)
    ours = capacity(b, s, p, n)
    assert ours <= grid + 1e-12
    assert ours == pytest.approx(grid, abs=1e-4)


def test_adversary_input_validation():
    with pytest.raises(ValueError):
        adversary_response([-1.0, 1.0], [1, 1], [1, 1], 1.0)
    with pytest.raises(ValueError):
        adversary_response([1.0, 1.0], [1, 1], [1, 1], -1.0)


# -- minimax ----------------------------------------------------------------


def test_symmetric_saddle():
    res = minimax_waterfill(ChannelSet([1.5] * 3, [0.4] * 3, 3.0, 1.2))
    np.testing.assert_allclose(res.p, 1.0, atol=1e-9)
    np.testing.assert_allclose(res.n, 0.4, atol=1e-9)
    assert res.converged


@pytest.mark.parametrize("seed", range(2))
def test_minimax_matches_grid_saddle(seed):
    r = np.random.Generator(np.random.PCG64(40 + seed))
    c = random_instance(r, 3)
    res = minimax_waterfill(c)
    val, _ = grid_saddle_3(c.beta, c.sigma, c.P, c.N)
    assert res.capacity == pytest.approx(val, abs=1e-3)


@pytest.mark.parametrize("seed", range(5))
def test_minimax_certified_and_levels_coupled(seed):
    r = np.random.Generator(np.random.PCG64(60 + seed))
    c = random_instance(r, int(r.integers(2, 7)))
    res = minimax_waterfill(c)
    assert res.converged
    assert res.p.sum() == pytest.approx(c.P, abs=1e-9) and res.n.sum() == pytest.approx(c.N, abs=1e-9)
    assert np.all(res.p >= -1e-12) and np.all(res.n >= -1e-12)
    cert = certify_saddle(c, res, 100, seed)
    assert cert["transmitter_gain"] <= 1e-5 and cert["adversary_gain"] <= 1e-5
    assert mu_nu_residual(c.beta, c.sigma, res) < 1e-5
    assert res.mu <= 0


def test_alternating_method_agrees(rng):
    c = ChannelSet([1.0, 0.8, 0.5, 0.2], [0.5, 0.5, 1.0, 1.0], 4.0, 1.0)
    a = minimax_waterfill(c)
    b = minimax_waterfill(c, method="alternating")
    assert b.capacity == pytest.approx(a.capacity, abs=1e-6)
    with pytest.raises(ValueError):
        minimax_waterfill(c, method="nope")


@given(st.integers(0, 10**6))
@settings(max_examples=30)
def test_interference_only_hurts(seed):
    r = np.random.Generator(np.random.PCG64(seed))
    c = random_instance(r, int(r.integers(1, 6)))
    assert minimax_waterfill(c).capacity <= waterfill(c.beta, c.sigma, c.P).capacity + 1e-12


def test_result_serializes():
    d = minimax_waterfill(ChannelSet([1.0, 0.5], [0.5, 0.5], 2.0, 0.5)).to_dict()
    assert set(d) >= {"p", "n", "nu", "mu", "active_set", "kkt_residual", "capacity"}


# -- beams --------------------------------------------------------------------


def test_beam_switch_examples(rng):
    assert beam_switch([1, 3, 2]) == 2
    assert beam_switch([4, 4, 4]) == 1
    for _ in range(1000):
        r = rng.integers(0, 5, size=int(rng.integers(1, 8)))
        best, idx = -1, 0
        for i, v in enumerate(r):
            if v > best:
                best, idx = v, i + 1
        assert beam_switch(r) == idx
    with pytest.raises(ValueError):
        beam_switch([])


def test_beam_hop_degenerate_cases(rng):
    R = rng.uniform(size=(3, 4))
    s = beam_hop(R, 4)
    assert np.all(s.schedule == 1) and s.objective == pytest.approx(R.sum())
    row = rng.uniform(size=(1, 6))
    assert np.flatnonzero(beam_hop(row, 1).schedule[0])[0] + 1 == beam_switch(row[0])
    assert beam_hop([[1.0, 1.0, 1.0]], 2).schedule.tolist() == [[1, 1, 0]]
    with pytest.raises(ValueError):
        beam_hop(R, 5)


@pytest.mark.parametrize("seed", range(5))
def test_beam_hop_matches_exhaustive(seed):
    R = np.random.Generator(np.random.PCG64(seed)).uniform(size=(4, 5))
    best, S, count = beam_hop_exhaustive(R, 2)
    assert count == 16**4
    s = beam_hop(R, 2)
    assert s.feasible(2)
    np.testing.assert_array_equal(s.schedule, S)
    assert s.objective == pytest.approx(best, rel=1e-15)


@given(st.integers(0, 10**6), st.integers(1, 5))
@settings(max_examples=20)
def test_beam_hop_beats_random_schedules(seed, bmax):
    r = np.random.Generator(np.random.PCG64(seed))
    R = r.uniform(size=(6, 5))
    s = beam_hop(R, bmax)
    for _ in range(1000):
        S = np.zeros_like(R, dtype=int)
        for t in range(6):
            S[t, r.choice(5, int(r.integers(0, bmax + 1)), replace=False)] = 1
        assert BeamSchedule(S, 0).feasible(bmax)
        assert (S * R).sum() <= s.objective + 1e-12
