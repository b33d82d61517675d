import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ergoproc.drivers import (
    alpha_bound,
    deterministic_driver,
    driver_from_config,
    iid_driver,
    iter_path,
    markov_driver,
    replica_seeds,
    reversed_chain,
    rotation_driver,
    sample_index_block,
    sample_past,
    sample_path,
    second_eigenvalue,
    stationary_dist,
    uniforms,
)
from ergoproc.errors import ConfigError, DriverError, ResourceError, UsageError
from ergoproc.families import amplitude_damping, depolarizing

seeds = st.integers(0, 2**63 - 1)
MAPS = (depolarizing(0.2), amplitude_damping(0.4))
P2 = np.array([[0.7, 0.3], [0.1, 0.9]])


def test_stationary_dist_examples():
    pi, res = stationary_dist(P2, return_residual=True)
    np.testing.assert_allclose(pi, [0.25, 0.75], atol=1e-13)
    assert res <= 1e-13
    Q = np.array([[0.2, 0.5, 0.3], [0.5, 0.1, 0.4], [0.3, 0.4, 0.3]])
    np.testing.assert_allclose(stationary_dist(Q), np.full(3, 1 / 3), atol=1e-13)
    with pytest.raises(DriverError):
        stationary_dist(np.eye(2))
    with pytest.raises(DriverError):
        stationary_dist(np.array([[0.0, 1.0], [1.0, 0.0]]))  # periodic


def test_reversed_chain_is_stochastic_and_stationary():
    pi = stationary_dist(P2)
    R = reversed_chain(P2, pi)
    np.testing.assert_allclose(R.sum(axis=1), 1.0)
    np.testing.assert_allclose(pi @ R, pi, atol=1e-14)


def test_driver_validation():
    with pytest.raises(DriverError):
        iid_driver(MAPS, [0.5, 0.6])
    with pytest.raises(DriverError):
        markov_driver(MAPS, [[0.5, 0.6], [0.1, 0.9]])
    with pytest.raises(DriverError):
        rotation_driver(MAPS, 0.5)
    with pytest.raises(DriverError):
        rotation_driver(MAPS, 1 / 3 + 1e-12)
    with pytest.raises(DriverError):
        iid_driver((depolarizing(0.1), depolarizing(0.1, dim=3)))
    rotation_driver(MAPS, (5**0.5 - 1) / 2)


def test_sample_path_examples():
    p = sample_path(deterministic_driver(MAPS[0]), 3, -4, 4)
    assert set(p.indices.tolist()) == {0}
    p = sample_path(iid_driver(MAPS, [1.0, 0.0]), 3, -50, 50)
    assert set(p.indices.tolist()) == {0}
    assert p[7] is MAPS[0]


def test_markov_transition_frequencies_seed_42():
    d = markov_driver(MAPS, P2)
    assert sample_path(d, 42, -5, 5).lo == -5
    x = sample_path(d, 42, -50_000, 50_000).indices
    for i in range(2):
        nxt = x[1:][x[:-1] == i]
        for j in range(2):
            f = np.mean(nxt == j)
            se = np.sqrt(P2[i, j] * (1 - P2[i, j]) / len(nxt))
            assert abs(f - P2[i, j]) <= 3 * se


@pytest.mark.parametrize("kind", ["iid", "markov"])
def test_stationarity_of_one_site_law(kind):
    d = iid_driver(MAPS, [0.3, 0.7]) if kind == "iid" else markov_driver(MAPS, P2)
    target = 0.7 if kind == "iid" else 0.75
    block = sample_index_block(d, replica_seeds(9, 20_000), -3, 3)
    se = np.sqrt(target * (1 - target) / len(block))
    for col in block.T:
        assert abs(np.mean(col == 1) - target) <= 3.5 * se


@given(seeds, st.integers(-30, 0), st.integers(0, 30))
def test_windows_are_reproducible_and_consistent(seed, lo, hi):
    d = markov_driver(MAPS, P2)
    a = sample_path(d, seed, lo, hi)
    b = sample_path(d, seed, lo, hi)
    np.testing.assert_array_equal(a.indices, b.indices)
    big = sample_path(d, seed, lo - 5, hi + 5)
    np.testing.assert_array_equal(big.span(lo, hi), a.indices)


@given(seeds, st.sampled_from(["iid", "rotation", "deterministic"]))
def test_shift_equivariance(seed, kind):
    d = {"iid": iid_driver(MAPS), "rotation": rotation_driver(MAPS, 2**0.5 - 1),
         "deterministic": deterministic_driver(MAPS[0])}[kind]
    shifted = sample_path(d, seed, -10, 10, shift=1)
    wide = sample_path(d, seed, -11, 11)
    for k in range(-10, 11):
        assert shifted.index(k) == wide.index(k + 1)


def test_uniform_stream_is_position_addressed():
    u = uniforms(5, 0, -10, 10)
    np.testing.assert_array_equal(uniforms(5, 0, -3, 4), u[7:15])
    assert np.all((u >= 0) & (u < 1))


def test_iter_path_matches_sample_path():
    for d in (iid_driver(MAPS), markov_driver(MAPS, P2)):
        streamed = np.concatenate([c for _, c in iter_path(d, 11, 3, 1000, chunk=128)])
        np.testing.assert_array_equal(streamed, sample_path(d, 11, 3, 999).indices)


def test_window_budget():
    with pytest.raises(ResourceError):
        sample_index_block(iid_driver(MAPS), list(range(100)), 0, 10**6)


def test_sample_past_follows_reversed_chain():
    d = markov_driver(MAPS, P2)
    anchors = np.zeros(40_000, dtype=np.int64)
    past = sample_past(d, anchors, list(range(40_000)), 1, stream=5)[:, 0]
    R = d.reverse_transition
    se = np.sqrt(R[0, 1] * (1 - R[0, 1]) / len(past))
    assert abs(np.mean(past == 1) - R[0, 1]) <= 3.5 * se
    with pytest.raises(UsageError):
        sample_past(rotation_driver(MAPS, 2**0.5 - 1), anchors[:2], [0, 1], 3, stream=5)


def test_alpha_bound_examples():
    assert alpha_bound(iid_driver(MAPS), 7) == 0.0
    assert alpha_bound(deterministic_driver(MAPS[0]), 7) == 0.0
    assert alpha_bound(rotation_driver(MAPS, 2**0.5 - 1), 7) == 1.0
    d = markov_driver(MAPS, P2)
    assert second_eigenvalue(P2) == pytest.approx(0.6)
    for n in range(3, 40):
        # TV distance from the worst start is 0.75 * 0.6^n for this chain
        assert alpha_bound(d, n) == pytest.approx(0.75 * 0.6**n, rel=1e-9)


@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_alpha_bound_is_non_increasing(a, b):
    d = markov_driver(MAPS, [[1 - a, a], [b, 1 - b]])
    vals = [alpha_bound(d, n) for n in range(1, 60)]
    assert all(x >= y - 1e-15 for x, y in zip(vals, vals[1:]))


def test_driver_config():
    d = driver_from_config({"kind": "markov", "transition": P2.tolist(),
                            "maps": ["depolarizing(0.2)", "amplitude_damping(0.4)"], "seed": 42})
    assert d.kind == "markov" and d.seed == 42
    with pytest.raises(ConfigError) as info:
        driver_from_config({"kind": "brownian", "maps": ["identity"]})
    assert info.value.pointer == "/driver/kind"
    with pytest.raises(ConfigError) as info:
        driver_from_config({"kind": "iid", "maps": ["identity", "nonsense(1)"]})
    assert info.value.pointer == "/driver/maps/1"
    with pytest.raises(ConfigError) as info:
        driver_from_config({"kind": "iid", "maps": ["identity"], "transition": [[1]]})
    assert info.value.pointer == "/driver/transition"
