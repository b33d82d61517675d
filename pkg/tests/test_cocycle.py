import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps

from ergoproc.cocycle import (
    adjoint_backward,
    batch_backward,
    batch_forward,
    estimate_Z,
    forward_cocycle,
    perron_sequence,
    stopping_times,
    truncation_bounds,
    window_map,
)
from ergoproc.drivers import (
    PathWindow,
    deterministic_driver,
    iid_driver,
    replica_seeds,
    sample_index_block,
    sample_path,
)
from ergoproc.errors import DestructiveImageError
from ergoproc.families import amplitude_damping, depolarizing, diag_kraus, identity
from ergoproc.maps import compose, is_strictly_positive, perron_left, random_kraus_map
from ergoproc.matrices import random_density, random_hermitian
from ergoproc.metric import contraction_coeff, dist

seeds = st.integers(0, 2**32 - 1)
TWO = iid_driver([depolarizing(0.2), amplitude_damping(0.4)])


def _random_driver(seed, n_maps=3, tp=False):
    rng = np.random.default_rng(seed)
    maps = [random_kraus_map(rng, 2, int(rng.integers(1, 5)), trace_preserving=tp) for _ in range(n_maps)]
    return iid_driver(maps)


def _direct_product(path, n):
    M = np.eye(path.driver.dim**2, dtype=complex)
    for k in range(1, n + 1):
        M = path[k].matrix @ M
    return M


def test_trace_preserving_log_norm_is_zero():
    path = sample_path(_random_driver(1, tp=True), 3, 0, 50)
    assert all(sp.log_norm == 0.0 for sp in forward_cocycle(path, np.eye(2) / 2, 50))


def test_diagonal_log_norm():
    a, b = 0.9, 0.4
    path = sample_path(deterministic_driver(diag_kraus(a, b)), 0, 0, 40)
    out = forward_cocycle(path, np.diag([1.0, 0.0]), 40)
    for n, sp in enumerate(out, 1):
        assert sp.log_norm == pytest.approx(n * math.log(a * a), rel=1e-14)


@pytest.mark.parametrize("seed", range(20))
def test_telescoping_exactness(seed):
    d = _random_driver(seed)
    path = sample_path(d, seed, 0, 12)
    X = random_density(np.random.default_rng(seed), 2)
    sp = forward_cocycle(path, X, 12)[-1]
    direct = (_direct_product(path, 12) @ X.T.ravel()).reshape(2, 2).T
    got = math.exp(sp.log_norm) * sp.state
    assert np.linalg.norm(got - direct) <= 1e-9 * np.linalg.norm(direct)


@given(seeds)
def test_state_trace_stays_one(seed):
    path = sample_path(_random_driver(seed), seed, 0, 30)
    for sp in forward_cocycle(path, np.eye(2) / 2, 30):
        assert abs(np.trace(sp.state).real - 1) <= 1e-12


def test_destructive_step_is_reported():
    d = iid_driver([depolarizing(0.3), diag_kraus(1.0, 0.0)], [0.5, 0.5])
    path = PathWindow(0, 3, np.array([0, 0, 1, 0]), d, np.zeros(4))
    with pytest.raises(DestructiveImageError) as info:
        forward_cocycle(path, np.diag([0.0, 1.0]), 1, start=2)
    assert info.value.index == 2


def test_adjoint_backward_examples():
    Y = random_density(np.random.default_rng(0), 2)
    path = sample_path(deterministic_driver(identity()), 0, 0, 5)
    np.testing.assert_allclose(adjoint_backward(path, Y, 3, 3).state, Y, atol=1e-14)
    p = 0.3
    path = sample_path(iid_driver([depolarizing(p)]), 0, 0, 20)
    for n in range(1, 12):
        res = adjoint_backward(path, Y, 1, n, with_bound=False)
        assert dist(res.state, np.eye(2) / 2).d <= (1 - p) ** n + 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_two_inputs_contract_by_window_coefficient(seed):
    rng = np.random.default_rng(seed)
    d = iid_driver([compose(depolarizing(0.3), random_kraus_map(rng, 2, 2)) for _ in range(2)])
    path = sample_path(d, seed, 0, 6)
    Y1, Y2 = random_density(rng, 2, size=2)
    r1, r2 = adjoint_backward(path, Y1, 1, 4), adjoint_backward(path, Y2, 1, 4)
    assert r1.exhaustive
    assert dist(r1.state, r2.state).d <= r1.contraction_bound * dist(Y1, Y2).d + 1e-3


def test_estimate_Z_examples():
    rng = np.random.default_rng(3)
    phi = compose(depolarizing(0.3), random_kraus_map(rng, 2, 2))
    path = sample_path(deterministic_driver(phi), 0, 0, 400)
    est = estimate_Z(path, 1, tol=1e-10)
    assert not est.truncated and est.residual <= 1e-10
    L = perron_left(phi).state
    assert dist(est.Z, L).d <= 1e-9
    path = sample_path(iid_driver([depolarizing(1.0)]), 0, 0, 10)
    est = estimate_Z(path, 1, depth=1)
    np.testing.assert_allclose(est.Z, np.eye(2) / 2, atol=1e-15)


def test_estimate_Z_self_consistency_seed_42():
    d = iid_driver([compose(depolarizing(0.2), random_kraus_map(np.random.default_rng(i), 2, 2)) for i in range(2)])
    tol = 1e-8
    path = sample_path(d, 42, -2, 300)
    est = estimate_Z(path, 0, tol=tol)
    assert est.bound <= tol
    assert est.residual <= 2 * tol


def test_estimate_Z_flags_truncation():
    path = sample_path(deterministic_driver(diag_kraus(0.9, 0.4)), 0, 0, 64)
    est = estimate_Z(path, 1, max_depth=32)
    assert est.truncated


def test_stopping_time_examples():
    d = iid_driver([compose(depolarizing(0.3), random_kraus_map(np.random.default_rng(1), 2, 2))])
    rec = stopping_times(sample_path(d, 0, -10, 10), 10)
    assert rec.tau == 1 and rec.tau_prime == 1
    # phi_1 = K X K* has rank-one images; a depolarizing step after it is strictly positive
    d = iid_driver([diag_kraus(1.0, 0.5), depolarizing(0.5)])
    idx = np.ones(21, dtype=np.int64)
    idx[11] = 0  # position k = 1
    path = PathWindow(-10, 10, idx, d, np.zeros(21))
    rec = stopping_times(path, 10)
    assert rec.tau == 2 and rec.tau_prime == 2
    assert is_strictly_positive(window_map(path, 1, 1)).no
    kind, n, cert = rec.certificates[0]
    assert kind == "Phi" and n == 1 and cert.no


def test_tau_r_depolarizing():
    d = iid_driver([depolarizing(0.5)])
    path = sample_path(d, 0, -10, 10)
    # per-step c = 0.8 and 0.8^4 = 0.4096 is the first power below 0.5
    assert stopping_times(path, 10, r=0.5, bound="submultiplicative").tau_r == 4
    # the composed window is contracted much harder: c = 2 t / (1 + t^2), t = 0.25
    rec = stopping_times(path, 10, r=0.5, bound="direct")
    assert rec.tau_r == 2
    assert contraction_coeff(window_map(path, 1, 1)).lower > 0.5


def test_horizon_exhaustion_is_reported():
    path = sample_path(deterministic_driver(diag_kraus(0.9, 0.4)), 0, -5, 5)
    rec = stopping_times(path, 5)
    assert rec.tau is None and any("not reached" in s for s in rec.notes)


def test_perron_sequence_examples():
    path = sample_path(_random_driver(2, tp=True), 0, 0, 20)
    unital = iid_driver([depolarizing(0.3), depolarizing(0.6)])
    for e in perron_sequence(sample_path(unital, 1, 0, 16), [1, 4, 16]):
        assert abs(e.log_lambda) <= 1e-12
        np.testing.assert_allclose(e.L, np.eye(2) / 2, atol=1e-10)
        np.testing.assert_allclose(e.R, np.eye(2) / 2, atol=1e-10)
    path = sample_path(deterministic_driver(diag_kraus(0.9, 0.4)), 0, 0, 64)
    for e in perron_sequence(path, [1, 8, 64]):
        assert e.log_lambda == pytest.approx(e.n * math.log(0.81), rel=1e-12)
        assert e.identity_gap <= 1e-8


def test_L_n_approaches_Z_seed_42():
    d = iid_driver([compose(depolarizing(0.1), random_kraus_map(np.random.default_rng(i), 2, 2)) for i in range(3)])
    path = sample_path(d, 42, 0, 64)
    gaps = []
    for e in perron_sequence(path, [4, 8, 16]):
        assert e.identity_gap <= 1e-8
        Z = estimate_Z(path, 1, depth=e.n, residual=False).Z
        gaps.append(dist(e.L, Z).d)
    assert gaps[0] >= gaps[1] >= gaps[2]


@given(seeds)
def test_L_n_doublings_within_window_contraction(seed):
    # L_n and L_2n both lie in the image of phi*_1 o ... o phi*_n
    d = iid_driver([compose(depolarizing(0.2), random_kraus_map(np.random.default_rng([seed, i]), 2, 2))
                    for i in range(2)])
    path = sample_path(d, seed, 0, 32)
    L = {e.n: e.L for e in perron_sequence(path, [2, 4, 8, 16, 32])}
    for n in (2, 4, 8, 16):
        c = contraction_coeff(window_map(path, 1, n, adjoint_form=True)).lower
        assert dist(L[n], L[2 * n]).d <= c + 1e-9


def test_psi_contraction_decay():
    d = TWO
    path = sample_path(d, 5, -40, 1)
    rates = [math.log(contraction_coeff(window_map(path, -n, -1, adjoint_form=True)).lower) / n
             for n in (5, 10, 20, 40)]
    assert all(x >= y - 1e-9 for x, y in zip(rates, rates[1:]))
    assert rates[-1] < 0


def test_batch_kernels_match_single_path():
    d = _random_driver(7)
    seeds_ = replica_seeds(1, 5)
    idx = sample_index_block(d, seeds_, 1, 30)
    logn, states = batch_forward(d, idx, np.eye(2) / 2)
    for r, s in enumerate(seeds_):
        sp = forward_cocycle(sample_path(d, s, 0, 30), np.eye(2) / 2, 30)[-1]
        assert logn[r, -1] == pytest.approx(sp.log_norm, abs=1e-12)
        np.testing.assert_allclose(states[r], sp.state, atol=1e-12)
    inc, kept = batch_backward(d, idx, keep=[0])
    for r, s in enumerate(seeds_):
        res = adjoint_backward(sample_path(d, s, 0, 30), np.eye(2) / 2, 1, 30, with_bound=False)
        assert inc[r].sum() == pytest.approx(res.log_norm, abs=1e-10)
        np.testing.assert_allclose(kept[0][r], res.state, atol=1e-12)


def test_truncation_bounds_dominate_true_error():
    d = iid_driver([depolarizing(0.4), compose(depolarizing(0.2), amplitude_damping(0.3))])
    idx = sample_index_block(d, [3], 0, 40)
    bounds = truncation_bounds(d, idx)[0]
    _, kept = batch_backward(d, idx, keep=[0])
    _, kept_long = batch_backward(d, sample_index_block(d, [3], 0, 120), keep=[0])
    assert dist(kept[0][0], kept_long[0][0]).d <= bounds[0] + 1e-12


def test_R_ensemble_matches_backward_limit():
    # R_n of phi_n o ... o phi_1 and the forward image of the deep past share a law
    d = iid_driver([compose(depolarizing(0.3), random_kraus_map(np.random.default_rng(i), 2, 3)) for i in range(2)])
    W = random_hermitian(np.random.default_rng(99), 2)
    n = 30
    r_vals = []
    for s in replica_seeds(4, 1000):
        R = perron_sequence(sample_path(d, s, 0, n), [n])[0].R
        r_vals.append(np.real(np.trace(R @ W)))
    idx = sample_index_block(d, replica_seeds(4, 1000, block=1), -60, 0)
    _, Zp = batch_forward(d, idx, np.eye(2) / 2, start=-60)
    z_vals = np.real(np.einsum("rij,ji->r", Zp, W))
    assert sps.ks_2samp(r_vals, z_vals).pvalue > 0.01
