import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multinav.mdp import Observation
from multinav.policy import (NetConfig, backward, clamp_action, gaussian_log_prob, init_params,
                             log_prob_and_entropy, log_prob_backward, policy_forward,
                             sample_action, value_forward)

from oracles import SMALL_NET, grad_check_draw, log_prob_quadrature, random_obs

CFG = NetConfig(n_beams=64)


def test_init_deterministic_and_log_std():
    a, av = init_params(CFG, 3)
    b, bv = init_params(CFG, 3)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert all(np.array_equal(av[k], bv[k]) for k in av)
    assert np.array_equal(a["log_std"], [-0.5, -0.5])
    for p in (a, av):
        for k, v in p.items():
            assert np.all(np.isfinite(v))
            if k != "log_std" and v.size > 1:
                assert v.std() > 0
    assert not np.array_equal(init_params(CFG, 4)[0]["fc1.w"], a["fc1.w"])


def test_zero_network():
    policy, value = init_params(CFG, 0)
    policy = {k: np.zeros_like(v) for k, v in policy.items()}
    value = {k: np.zeros_like(v) for k, v in value.items()}
    obs = random_obs(np.random.default_rng(0), 2, CFG)
    assert np.array_equal(policy_forward(policy, CFG, obs), [[0.5, 0.0], [0.5, 0.0]])
    assert np.array_equal(value_forward(value, CFG, obs), [0.0, 0.0])


def test_forward_single_and_batched_agree():
    policy, value = init_params(CFG, 1, dtype=np.float64)
    obs = random_obs(np.random.default_rng(1), 4, CFG)
    batch = policy_forward(policy, CFG, obs)
    single = policy_forward(policy, CFG, obs[2])
    assert single.shape == (2,) and np.allclose(single, batch[2], atol=1e-12)
    assert np.array_equal(value_forward(value, CFG, obs), value_forward(value, CFG, obs))


@given(st.floats(-5, 5), st.integers(0, 10))
@settings(max_examples=30, deadline=None)
def test_action_range(fill, seed):
    policy, value = init_params(CFG, seed)
    obs = Observation(np.full((1, 3, 64), fill), np.full((1, 2), fill), np.full((1, 2), fill))
    policy["out.w"] = policy["out.w"] * 100
    m = policy_forward(policy, CFG, obs)
    assert 0 <= m[0, 0] <= 1 and -1 <= m[0, 1] <= 1
    assert np.isfinite(value_forward(value, CFG, obs)).all()


def test_shape_mismatch_raises():
    policy, _ = init_params(CFG, 0)
    with pytest.raises(ValueError):
        policy_forward(policy, CFG, random_obs(np.random.default_rng(0), 1, SMALL_NET))


def test_net_config_validation():
    with pytest.raises(ValueError):
        NetConfig(n_beams=4)
    with pytest.raises(ValueError):
        NetConfig(fc1=0)


def test_backward_requires_cache():
    policy, _ = init_params(CFG, 0)
    with pytest.raises(ValueError):
        backward(policy, CFG, None, np.zeros((1, 2)))


def test_zero_output_grad_gives_zero_gradients():
    policy, _ = init_params(CFG, 0)
    cache = {}
    policy_forward(policy, CFG, random_obs(np.random.default_rng(0), 3, CFG), cache)
    grads = backward(policy, CFG, cache, np.zeros((3, 2)))
    assert set(grads) == set(policy)
    assert all(np.all(g == 0) for g in grads.values())
    assert all(grads[k].shape == policy[k].shape for k in policy)


@pytest.mark.parametrize("seed", range(10))
def test_finite_difference_gradients(seed):
    worst, skipped, total = grad_check_draw(seed)
    assert worst < 1e-3
    assert skipped <= 0.05 * total


def test_log_prob_examples():
    assert gaussian_log_prob(np.zeros(2), np.zeros(2), np.zeros(2)) == pytest.approx(-1.8379, abs=1e-4)
    _, ent = log_prob_and_entropy(np.zeros(2), np.zeros(2), np.zeros(2))
    assert ent == pytest.approx(2.8379, abs=1e-4)
    ls = np.array([-0.3, 0.2])
    lp, _ = log_prob_and_entropy(np.array([0.4, 0.1]), ls, np.array([0.4, 0.1]))
    assert lp == pytest.approx(-ls.sum() - math.log(2 * math.pi), abs=1e-12)


@pytest.mark.parametrize("mean, log_std", [((0.5, 0.0), (-0.5, -0.5)), ((0.1, -0.7), (0.3, -1.2))])
def test_log_prob_integrates_to_one(mean, log_std):
    assert log_prob_quadrature(np.array(mean), np.array(log_std)) == pytest.approx(1.0, abs=1e-3)


def test_log_prob_gradient_zero_at_mode():
    m = np.array([[0.3, -0.2]])
    g_mean, _ = log_prob_backward(m, np.array([-0.5, -0.5]), m.copy(), np.ones(1))
    assert np.all(g_mean == 0)


def test_sampling():
    mean = np.array([0.5, 0.2])
    a1 = sample_action(mean, np.array([-0.5, -0.5]), np.random.default_rng(7))
    a2 = sample_action(mean, np.array([-0.5, -0.5]), np.random.default_rng(7))
    assert all(np.array_equal(x, y) for x, y in zip(a1, a2))
    action, raw, lp = sample_action(mean, np.array([-60.0, -60.0]), np.random.default_rng(0))
    assert np.allclose(action, clamp_action(mean))
    action, raw, lp = sample_action(np.zeros((1000, 2)), np.array([1.0, 1.0]), np.random.default_rng(0))
    assert action[:, 0].min() >= 0 and action[:, 0].max() <= 1
    assert np.abs(action[:, 1]).max() <= 1
    assert np.allclose(lp, gaussian_log_prob(np.zeros((1000, 2)), np.array([1.0, 1.0]), raw))
