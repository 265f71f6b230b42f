import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lipconf import oracles
from lipconf.errors import DimensionMismatch, InvalidDistribution, ShapeMismatch
from lipconf.mdp import (
    ConfMDP,
    Configuration,
    Policy,
    bellman_residual,
    discounted_distribution,
    expected_return,
    expected_reward,
    solve_values,
    state_kernel,
)
from lipconf.metric import MetricSpace

from conftest import small_mdp

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def random_pair(rng, s, a):
    return Policy(rng.dirichlet(np.ones(a), size=s)), Configuration(rng.dirichlet(np.ones(s), size=(s, a)))


def two_state_chain(gamma=0.9):
    """Each state stays put; arriving in state 1 pays 1."""
    reward = np.zeros((2, 1, 2))
    reward[:, :, 1] = 1.0
    c = ConfMDP(MetricSpace.discrete(2), MetricSpace.discrete(1), reward, gamma)
    p = Configuration(np.eye(2)[:, None, :])
    return c, Policy(np.ones((2, 1))), p


def test_gamma_must_be_below_one():
    with pytest.raises(ValueError, match="gamma"):
        ConfMDP(MetricSpace.discrete(2), MetricSpace.discrete(1), np.zeros((2, 1, 2)), 1.0)


def test_reward_shape_and_finiteness():
    with pytest.raises(DimensionMismatch):
        ConfMDP(MetricSpace.discrete(2), MetricSpace.discrete(1), np.zeros((2, 2, 2)), 0.5)
    with pytest.raises(ValueError):
        ConfMDP(MetricSpace.discrete(1), MetricSpace.discrete(1), np.full((1, 1, 1), np.nan), 0.5)


def test_policy_rows_must_sum_to_one():
    with pytest.raises(InvalidDistribution):
        Policy([[0.5, 0.6]])
    with pytest.raises(InvalidDistribution):
        Configuration(np.full((2, 1, 2), 0.4))


def test_pair_shape_mismatch(rng):
    c = small_mdp(rng, 3, 2)
    with pytest.raises(ShapeMismatch):
        solve_values(c, Policy.uniform(3, 3), Configuration(np.full((3, 3, 3), 1 / 3)))


def test_state_kernel_single_action(rng):
    pi, p = random_pair(rng, 4, 1)
    np.testing.assert_array_equal(state_kernel(pi, p), p.probs[:, 0, :])


def test_state_kernel_deterministic():
    pi = Policy.deterministic([1, 0, 1], 2)
    p = Configuration(np.eye(3)[np.array([[1, 2], [0, 0], [2, 1]])])
    np.testing.assert_array_equal(state_kernel(pi, p), np.eye(3)[[2, 0, 1]])


def test_state_kernel_hand_expansion():
    p = Configuration(np.array([[[1, 0], [0, 1]], [[1, 0], [0, 1]]], dtype=float))
    np.testing.assert_allclose(state_kernel(Policy.uniform(2, 2), p), np.full((2, 2), 0.5))


def test_zero_reward(rng):
    c = ConfMDP(MetricSpace.discrete(3), MetricSpace.discrete(2), np.zeros((3, 2, 3)), 0.9)
    pi, p = random_pair(rng, 3, 2)
    vals = solve_values(c, pi, p)
    assert not vals.v.any() and not vals.q.any() and not vals.u.any()
    assert expected_return(c, pi, p, np.full(3, 1 / 3)) == 0.0


def test_constant_reward_closed_form(rng):
    g = 0.8
    c = ConfMDP(MetricSpace.discrete(3), MetricSpace.discrete(2), np.full((3, 2, 3), 2.0), g)
    pi, p = random_pair(rng, 3, 2)
    vals = solve_values(c, pi, p)
    np.testing.assert_allclose(vals.v, 2.0 / (1 - g))
    np.testing.assert_allclose(vals.u, 2.0 + g * 2.0 / (1 - g))
    assert expected_return(c, pi, p, [0.2, 0.3, 0.5]) == pytest.approx(2.0 / (1 - g))


def test_two_state_chain_values():
    c, pi, p = two_state_chain()
    v = solve_values(c, pi, p).v
    oracle = oracles.values_series(state_kernel(pi, p), expected_reward(c, pi, p), 0.9, 400)
    np.testing.assert_allclose(v, oracle, atol=1e-9)
    assert v[1] == pytest.approx(10.0) and v[0] == pytest.approx(0.0)


def test_two_state_chain_return():
    c, pi, p = two_state_chain()
    mu = np.array([1.0, 0.0])
    horizon = int(np.ceil(np.log(1e-10 * (1 - 0.9)) / np.log(0.9)))
    oracle = oracles.rollout_return(pi.probs, p.probs, c.reward, mu, 0.9, horizon)
    assert expected_return(c, pi, p, mu) == pytest.approx(oracle, abs=1e-9)
    assert expected_return(c, pi, p, [0.0, 1.0]) == pytest.approx(10.0)


def test_discounted_identity_kernel(rng):
    c = small_mdp(rng, 3, 1, gamma=0.7)
    mu = np.array([0.1, 0.6, 0.3])
    d = discounted_distribution(c, Policy.uniform(3, 1), Configuration(np.eye(3)[:, None, :]), mu)
    np.testing.assert_allclose(d.mass, mu)


def test_discounted_single_state():
    c = ConfMDP(MetricSpace.discrete(1), MetricSpace.discrete(2), np.ones((1, 2, 1)), 0.9)
    d = discounted_distribution(c, Policy.uniform(1, 2), Configuration(np.ones((1, 2, 1))), [1.0])
    np.testing.assert_allclose(d.mass, [1.0])


def test_discounted_swap_kernel():
    c = ConfMDP(MetricSpace.discrete(2), MetricSpace.discrete(1), np.zeros((2, 1, 2)), 0.5)
    pi, p = Policy.uniform(2, 1), Configuration(np.array([[[0.0, 1.0]], [[1.0, 0.0]]]))
    d = discounted_distribution(c, pi, p, [0.5, 0.5])
    np.testing.assert_allclose(d.mass, [0.5, 0.5])
    series = oracles.discounted_distribution_series(state_kernel(pi, p), np.array([0.5, 0.5]), 0.5, 60)
    np.testing.assert_allclose(d.mass, series, atol=1e-12)


def test_bad_initial_distribution(rng):
    c = small_mdp(rng, 3, 2)
    pi, p = random_pair(rng, 3, 2)
    with pytest.raises(InvalidDistribution):
        discounted_distribution(c, pi, p, [0.5, 0.5, 0.5])
    with pytest.raises(DimensionMismatch):
        expected_return(c, pi, p, [0.5, 0.5])


@settings(max_examples=100, deadline=None)
@given(seeds, st.integers(1, 8), st.integers(1, 4), st.floats(0.0, 0.99))
def test_value_and_distribution_invariants(seed, s, a, gamma):
    rng = np.random.default_rng(seed)
    c = small_mdp(rng, s, a, gamma)
    pi, p = random_pair(rng, s, a)
    mu = rng.dirichlet(np.ones(s))
    vals = solve_values(c, pi, p)
    assert bellman_residual(c, pi, p, vals) <= 1e-9 * max(1.0, np.abs(vals.v).max())
    d = discounted_distribution(c, pi, p, mu)
    fixed = (1 - gamma) * mu + gamma * d.mass @ state_kernel(pi, p)
    np.testing.assert_allclose(d.mass, fixed, atol=1e-9)
    # both return formulas are cross-checked inside expected_return
    j = expected_return(c, pi, p, mu)
    assert j == pytest.approx(float(mu @ vals.v), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 6), st.sampled_from([0.0, 0.3, 0.9, 0.97]))
def test_distribution_matches_power_series(seed, s, gamma):
    rng = np.random.default_rng(seed)
    c = small_mdp(rng, s, 2, gamma)
    pi, p = random_pair(rng, s, 2)
    mu = rng.dirichlet(np.ones(s))
    d = discounted_distribution(c, pi, p, mu)
    series = oracles.discounted_distribution_series(state_kernel(pi, p), mu, gamma, oracles.series_horizon(gamma))
    assert np.abs(d.mass - series).max() <= 1e-6


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(2, 6))
def test_permutation_invariance(seed, s):
    rng = np.random.default_rng(seed)
    c = small_mdp(rng, s, 2)
    pi, p = random_pair(rng, s, 2)
    perm = rng.permutation(s)
    c2 = ConfMDP(MetricSpace(c.states.dist[np.ix_(perm, perm)]), c.actions, c.reward[perm][:, :, perm], c.gamma)
    v2 = solve_values(c2, Policy(pi.probs[perm]), Configuration(p.probs[perm][:, :, perm])).v
    np.testing.assert_allclose(v2, solve_values(c, pi, p).v[perm], atol=1e-9)


@settings(max_examples=20, deadline=None)
@given(seeds, st.integers(1, 5))
def test_return_matches_rollout(seed, s):
    rng = np.random.default_rng(seed)
    c = small_mdp(rng, s, 2, 0.8)
    pi, p = random_pair(rng, s, 2)
    mu = rng.dirichlet(np.ones(s))
    horizon = oracles.series_horizon(0.8, 1e-12)
    oracle = oracles.rollout_return(pi.probs, p.probs, c.reward, mu, 0.8, horizon)
    assert expected_return(c, pi, p, mu) == pytest.approx(oracle, abs=1e-9)
