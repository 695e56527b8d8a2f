# test_mdp_core.py
# Tabular MDPs and the exact solvers everything else is checked against.
# Small hand-solvable MDPs first, then the fixed-point properties on random ones.

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.guardrails import NoConvergence, NonStochasticMatrix
from src.mdp_core import (
    FiniteMdp,
    TabularPolicy,
    bellman_backup,
    policy_evaluation,
    random_mdp,
    value_iteration,
)


def _chain() -> FiniteMdp:
    """s0 --a0--> s1 with reward 1, s1 absorbing with reward 0. One action."""
    transitions = np.array([[[0.0, 1.0]], [[0.0, 1.0]]])
    rewards = np.array([[1.0], [0.0]])
    return FiniteMdp(transitions, rewards, 0.5)


def test_single_state_geometric_series():
    mdp = FiniteMdp(np.ones((1, 1, 1)), np.ones((1, 1)), 0.99)
    table = policy_evaluation(mdp, TabularPolicy.uniform(1, 1), tol=1e-10)
    assert table.v[0] == pytest.approx(100.0, abs=1e-8)


def test_zero_rewards_give_zero_values():
    rng = np.random.default_rng(0)
    mdp = random_mdp(4, 3, 0.9, rng).with_rewards(np.zeros((4, 3)))
    table = policy_evaluation(mdp, TabularPolicy.uniform(4, 3))
    assert np.all(table.v == 0.0)
    assert np.all(table.q == 0.0)


def test_two_state_chain():
    table = policy_evaluation(_chain(), TabularPolicy.deterministic([0, 0], 1))
    assert table.v == pytest.approx([1.0, 0.0], abs=1e-10)


def test_direct_solve_matches_iterative():
    rng = np.random.default_rng(3)
    mdp = random_mdp(6, 3, 0.9, rng)
    policy = TabularPolicy(rng.dirichlet(np.ones(3), size=6))
    iterative = policy_evaluation(mdp, policy, tol=1e-12)
    direct = policy_evaluation(mdp, policy, method="direct")
    assert np.abs(iterative.q - direct.q).max() < 1e-9


def test_v_is_policy_average_of_q():
    rng = np.random.default_rng(1)
    mdp = random_mdp(5, 2, 0.8, rng)
    policy = TabularPolicy(rng.dirichlet(np.ones(2), size=5))
    table = policy_evaluation(mdp, policy)
    assert np.abs(table.v - np.sum(policy.probs * table.q, axis=1)).max() < 1e-10
    # Bellman residual within tolerance
    assert np.abs(bellman_backup(mdp, table.v) - table.q).max() <= 1e-10


def test_evaluation_is_unique_from_any_start():
    rng = np.random.default_rng(2)
    mdp = random_mdp(5, 3, 0.9, rng)
    policy = TabularPolicy.uniform(5, 3)
    tol = 1e-10
    a = policy_evaluation(mdp, policy, tol=tol)
    b = policy_evaluation(mdp, policy, tol=tol, q_init=rng.normal(scale=50.0, size=(5, 3)))
    assert np.abs(a.q - b.q).max() <= 2 * tol


def test_value_iteration_single_state():
    mdp = FiniteMdp(np.ones((1, 2, 1)), np.array([[0.0, 1.0]]), 0.9)
    table, policy = value_iteration(mdp)
    assert table.v[0] == pytest.approx(10.0, abs=1e-8)
    assert policy.greedy_actions().tolist() == [1]


def test_value_iteration_ties_pick_lowest_action():
    rng = np.random.default_rng(4)
    mdp = random_mdp(4, 3, 0.9, rng).with_rewards(np.zeros((4, 3)))
    table, policy = value_iteration(mdp)
    assert np.all(table.v == 0.0)
    assert policy.greedy_actions().tolist() == [0, 0, 0, 0]
    assert policy.is_deterministic


def test_value_iteration_matches_long_backup_oracle():
    mdp = random_mdp(5, 3, 0.9, np.random.default_rng(7))
    table, _ = value_iteration(mdp, tol=1e-12)

    q = np.zeros((5, 3))
    for _ in range(10_000):
        q = bellman_backup(mdp, q.max(axis=1))
    assert np.abs(table.q - q).max() <= 1e-8


def test_greedy_policy_reproduces_optimal_values():
    mdp = random_mdp(6, 4, 0.85, np.random.default_rng(5))
    tol = 1e-10
    table, policy = value_iteration(mdp, tol=tol)
    evaluated = policy_evaluation(mdp, policy, tol=tol)
    assert np.abs(evaluated.v - table.v).max() <= 2 * tol


def test_raising_a_reward_never_lowers_q_star():
    rng = np.random.default_rng(6)
    mdp = random_mdp(5, 3, 0.9, rng)
    base, _ = value_iteration(mdp)
    rewards = np.array(mdp.rewards)
    rewards[2, 1] += 0.5
    raised, _ = value_iteration(mdp.with_rewards(rewards))
    assert np.all(raised.q >= base.q - 1e-9)


def test_gamma_one_is_rejected():
    mdp = FiniteMdp(np.ones((1, 1, 1)), np.ones((1, 1)), 1.0)
    with pytest.raises(NoConvergence):
        policy_evaluation(mdp, TabularPolicy.uniform(1, 1))
    with pytest.raises(NoConvergence):
        value_iteration(mdp)


def test_non_stochastic_rows_are_rejected():
    transitions = np.array([[[0.5, 0.4]], [[0.0, 1.0]]])
    with pytest.raises(NonStochasticMatrix) as info:
        FiniteMdp(transitions, np.zeros((2, 1)), 0.9)
    assert info.value.row == (0, 0)


def test_mdp_arrays_are_read_only():
    mdp = _chain()
    with pytest.raises(ValueError):
        mdp.rewards[0, 0] = 5.0


if __name__ == "__main__":
    print("=" * 60)
    print("MDP core")
    print("=" * 60)
    test_single_state_geometric_series()
    test_two_state_chain()
    test_value_iteration_matches_long_backup_oracle()
    test_greedy_policy_reproduces_optimal_values()
    print("Solvers agree with hand-computed values")
