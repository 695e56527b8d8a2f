# test_envs.py
# Pendulum swing-up dynamics and its reflection symmetry, the grid pendulum MDP,
# and the LQR family with its closed-form Riccati oracles.

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.diff_engine import Tensor, finite_difference_grad
from src.envs import (
    LinearQuadraticEnv,
    PendulumSwingup,
    discretized_pendulum_mdp,
    linear_policy_value,
    lqr_solve,
    make_env,
    q_action_gradient,
    q_value,
    random_invertible,
    random_lqr,
    state_value,
)
from src.guardrails import DimensionMismatch, RiccatiDivergence


# -- Pendulum --

def test_pendulum_rewards():
    env = PendulumSwingup(seed=0)
    _, hanging = env.step(np.array([np.pi, 0.0]), np.array([0.0]))
    _, upright = env.step(np.array([0.0, 0.0]), np.array([0.0]))
    assert hanging == pytest.approx(0.0, abs=1e-15)
    assert upright == 1.0


def test_upright_is_an_equilibrium():
    env = PendulumSwingup(seed=0)
    state, _ = env.step(np.zeros(2), np.zeros(1))
    assert state.tolist() == [0.0, 0.0]


def test_speed_is_clipped_and_angle_wrapped():
    env = PendulumSwingup(seed=0)
    state = np.array([3.1, 7.9])
    for _ in range(20):
        state, _ = env.step(state, np.array([1.0]))
        assert abs(state[1]) <= env.max_speed
        assert -np.pi < state[0] <= np.pi


def test_reflection_is_an_exact_symmetry():
    env = PendulumSwingup(seed=1)
    rng = np.random.default_rng(2)
    states = np.stack([rng.uniform(-3.0, 3.0, 1000), rng.uniform(-8.0, 8.0, 1000)], axis=-1)
    actions = rng.uniform(-1.5, 1.5, (1000, 1))

    next_states, rewards = env.step(states, actions)
    flipped_next, flipped_rewards = env.step(env.flip_state(states), -actions)
    assert np.array_equal(flipped_next, env.flip_state(next_states))
    assert np.array_equal(flipped_rewards, rewards)
    assert np.array_equal(env.observe(env.flip_state(states)), env.flip_observation(env.observe(states)))


def test_observation_layout():
    env = PendulumSwingup()
    obs = env.observe(np.array([[np.pi / 2, 1.5]]))
    assert obs.shape == (1, env.observation_dim)
    assert obs[0] == pytest.approx([0.0, 1.0, 1.5], abs=1e-15)


def test_reset_is_seeded():
    a = PendulumSwingup(seed=5).reset(batch=4)
    b = PendulumSwingup(seed=5).reset(batch=4)
    assert np.array_equal(a, b)
    assert np.all(a[:, 1] == 0.0)


# -- Grid pendulum --

def test_grid_pendulum_is_mirror_symmetric():
    n = 7
    mdp = discretized_pendulum_mdp(n)
    flip_s = np.arange(n)[::-1]
    flip_a = np.array([2, 1, 0])
    assert np.array_equal(mdp.rewards[flip_s][:, flip_a], mdp.rewards)
    assert np.array_equal(mdp.transitions[flip_s][:, flip_a][:, :, flip_s], mdp.transitions)


def test_grid_pendulum_needs_two_states():
    with pytest.raises(ValueError):
        discretized_pendulum_mdp(1)


# -- LQR --

def _scalar_riccati(a, b, q, r, gamma, iterations=5000):
    p = q
    for _ in range(iterations):
        p = q + gamma * a * a * p - (gamma * a * b * p) ** 2 / (r + gamma * b * b * p)
    return p


def test_zero_dynamics_need_no_control():
    env = LinearQuadraticEnv(np.zeros((2, 2)), np.eye(2), np.eye(2), np.eye(2), noise_scale=0.0)
    K, P = lqr_solve(env, 0.9)
    assert np.abs(K).max() <= 1e-12
    assert np.abs(P - np.eye(2)).max() <= 1e-10


def test_scalar_riccati_matches_fixed_point():
    a, b, q, r, gamma = 1.2, 0.7, 2.0, 0.5, 0.9
    env = LinearQuadraticEnv([[a]], [[b]], [[q]], [[r]], noise_scale=0.0)
    K, P = lqr_solve(env, gamma)
    p = _scalar_riccati(a, b, q, r, gamma)
    assert P[0, 0] == pytest.approx(p, rel=1e-9)
    assert K[0, 0] == pytest.approx(gamma * b * p * a / (r + gamma * b * b * p), rel=1e-9)


def test_optimal_gain_has_optimal_value():
    env = random_lqr(np.random.default_rng(3), noise_scale=0.05)
    K, P = lqr_solve(env, 0.9)
    assert np.abs(linear_policy_value(env, K, 0.9) - P).max() <= 1e-8


def test_q_value_is_consistent_with_state_value():
    gamma = 0.9
    env = random_lqr(np.random.default_rng(4), noise_scale=0.1)
    K, P = lqr_solve(env, gamma)
    states = np.random.default_rng(5).uniform(-1.0, 1.0, (6, 2))
    optimal_actions = -states @ K.T
    assert np.abs(q_value(env, P, gamma, states, optimal_actions) - state_value(env, P, gamma, states)).max() <= 1e-8
    # the optimal action is a stationary point of Q
    assert np.abs(q_action_gradient(env, P, gamma, states, optimal_actions)).max() <= 1e-8


def test_q_action_gradient_matches_finite_differences():
    gamma = 0.8
    env = random_lqr(np.random.default_rng(6))
    P = linear_policy_value(env, np.zeros((2, 2)), gamma)
    state = np.array([0.3, -0.7])
    action = np.array([0.2, 0.1])
    numeric = finite_difference_grad(lambda a: float(q_value(env, P, gamma, state, a)), action, h=1e-6)
    assert np.abs(q_action_gradient(env, P, gamma, state, action) - numeric).max() <= 1e-6


def test_q_action_gradient_with_asymmetric_costs():
    # asymmetric R and P
    gamma = 0.9
    env = LinearQuadraticEnv([[0.9, 0.2], [0.0, 0.8]], [[1.0, 0.0], [0.3, 1.0]], np.eye(2),
                             [[1.0, 0.6], [-0.4, 2.0]], noise_scale=0.0)
    P = np.array([[2.0, 0.5], [-0.1, 1.5]])
    state = np.array([0.4, -0.2])
    action = np.array([-0.3, 0.7])
    numeric = finite_difference_grad(lambda a: float(q_value(env, P, gamma, state, a)), action, h=1e-6)
    assert np.abs(q_action_gradient(env, P, gamma, state, action) - numeric).max() <= 1e-6


def test_reparameterized_system_transforms_the_solution():
    gamma = 0.9
    rng = np.random.default_rng(7)
    env = random_lqr(rng, noise_scale=0.05)
    F, G = random_invertible(rng, 2), random_invertible(rng, 2)
    image = env.reparameterize(F, G)
    K, P = lqr_solve(env, gamma)
    K_bar, P_bar = lqr_solve(image, gamma)
    F_inv = np.linalg.inv(F)
    assert np.abs(P_bar - F_inv.T @ P @ F_inv).max() <= 1e-8 * max(1.0, np.abs(P_bar).max())
    assert np.abs(K_bar - G @ K @ F_inv).max() <= 1e-8 * max(1.0, np.abs(K_bar).max())


def test_reparameterized_step_commutes():
    rng = np.random.default_rng(8)
    env = random_lqr(rng, noise_scale=0.05)
    F, G = random_invertible(rng, 2), random_invertible(rng, 2)
    image = env.reparameterize(F, G)
    s, a, eps = rng.normal(size=2), rng.normal(size=2), rng.normal(size=2)
    nxt, r = env.step(s, a, eps)
    nxt_bar, r_bar = image.step(F @ s, G @ a, eps)
    assert np.allclose(nxt_bar, F @ nxt, atol=1e-12)
    assert r_bar == pytest.approx(r, rel=1e-12)


def test_tensor_step_matches_numpy_step():
    env = random_lqr(np.random.default_rng(9))
    states = np.random.default_rng(10).normal(size=(3, 2))
    actions = np.random.default_rng(11).normal(size=(3, 2))
    nxt, r = env.step(states, actions)
    t_nxt, t_r = env.tensor_step(Tensor(states), Tensor(actions))
    assert np.allclose(t_nxt.numpy(), nxt, atol=1e-14)
    assert np.allclose(t_r.numpy(), r, atol=1e-14)


def test_inconsistent_shapes_and_unstable_policies():
    with pytest.raises(DimensionMismatch):
        LinearQuadraticEnv(np.eye(2), np.ones((3, 1)), np.eye(2), np.eye(1))
    with pytest.raises(ValueError):
        LinearQuadraticEnv(np.eye(1), np.eye(1), -np.eye(1), np.eye(1))
    env = LinearQuadraticEnv([[2.0]], [[1.0]], [[1.0]], [[1.0]], noise_scale=0.0)
    with pytest.raises(RiccatiDivergence):
        linear_policy_value(env, np.zeros((1, 1)), 0.9)


def test_make_env_by_name():
    assert isinstance(make_env("pendulum", seed=0), PendulumSwingup)
    assert isinstance(make_env("lqr", seed=0), LinearQuadraticEnv)
    with pytest.raises(ValueError):
        make_env("cartpole")


if __name__ == "__main__":
    print("=" * 60)
    print("Environments")
    print("=" * 60)
    test_reflection_is_an_exact_symmetry()
    test_scalar_riccati_matches_fixed_point()
    test_reparameterized_system_transforms_the_solution()
    print("Dynamics, symmetry and Riccati oracles agree")
