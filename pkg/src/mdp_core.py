# mdp_core.py
# Tabular MDPs and the exact dynamic-programming solvers every check is measured against.
#
# What lives here:
#   FiniteMdp      -- transition tensor P[s, a, s'], reward matrix R[s, a], discount gamma
#   TabularPolicy  -- pi[s, a] row-stochastic matrix (deterministic = one-hot rows)
#   ValueTable     -- v[s] and q[s, a]
#
#   policy_evaluation -- Q^pi by Jacobi iteration on the Bellman equation (or a direct solve)
#   value_iteration   -- Q* by Jacobi iteration on the Bellman optimality equation
#
# Stopping rule: we iterate until two successive q tables differ by at most
# tol * (1 - gamma) / gamma in sup norm. Then both the Bellman residual and the
# distance to the true fixed point are below tol.
#
# All objects are frozen and hold read-only arrays, so they can be shared freely.

import logging
from dataclasses import InitVar, dataclass
from typing import Optional, Tuple

import numpy as np

from src.guardrails import DimensionMismatch, NoConvergence, check_stochastic

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
MAX_ITERATIONS = 10**6
# validation tolerance for rows built in memory; files are loaded at 1e-9
ROW_SUM_TOL = 1e-12
# below this many ulps of |q| the iteration cannot make further progress
_ULP_FLOOR = 16 * np.finfo(np.float64).eps


def _frozen_array(values, ndim: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise DimensionMismatch(f"{name} must have {ndim} dimensions, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    transitions: np.ndarray
    rewards: np.ndarray
    gamma: float
    row_tol: InitVar[float] = ROW_SUM_TOL

    def __post_init__(self, row_tol: float):
        transitions = _frozen_array(self.transitions, 3, "transitions")
        rewards = _frozen_array(self.rewards, 2, "rewards")
        n_states, n_actions, n_next = transitions.shape
        if n_states == 0 or n_actions == 0:
            raise DimensionMismatch("an MDP needs at least one state and one action")
        if n_next != n_states:
            raise DimensionMismatch(f"transitions shape {transitions.shape} is not (S, A, S)")
        if rewards.shape != (n_states, n_actions):
            raise DimensionMismatch(
                f"rewards shape {rewards.shape} does not match (S, A) = {(n_states, n_actions)}"
            )
        if not np.isfinite(rewards).all():
            raise ValueError("rewards must be finite")
        if not 0.0 < float(self.gamma) <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        check_stochastic(transitions, row_tol, what="transition")

        object.__setattr__(self, "transitions", transitions)
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, FiniteMdp):
            return NotImplemented
        return (
            self.gamma == other.gamma
            and np.array_equal(self.transitions, other.transitions)
            and np.array_equal(self.rewards, other.rewards)
        )

    def __hash__(self):
        return hash((self.n_states, self.n_actions, self.gamma, self.rewards.tobytes()))

    def with_rewards(self, rewards: np.ndarray) -> "FiniteMdp":
        return FiniteMdp(self.transitions, rewards, self.gamma)


@dataclass(frozen=True, eq=False)
class TabularPolicy:
    probs: np.ndarray

    def __post_init__(self):
        probs = _frozen_array(self.probs, 2, "policy")
        check_stochastic(probs, ROW_SUM_TOL, what="policy")
        object.__setattr__(self, "probs", probs)

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]

    @classmethod
    def deterministic(cls, actions, n_actions: int) -> "TabularPolicy":
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((actions.size, n_actions))
        probs[np.arange(actions.size), actions] = 1.0
        return cls(probs)

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "TabularPolicy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @property
    def is_deterministic(self) -> bool:
        return bool(np.all((self.probs == 0.0) | (self.probs == 1.0)))

    def greedy_actions(self) -> np.ndarray:
        return np.argmax(self.probs, axis=1)


@dataclass(frozen=True, eq=False)
class ValueTable:
    v: np.ndarray
    q: np.ndarray
    iterations: int = 0
    residual: float = 0.0


def _check_solvable(mdp: FiniteMdp, tol: float) -> None:
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if mdp.gamma >= 1.0:
        raise NoConvergence("gamma = 1 is not supported; use a discount strictly below 1")


def _step_threshold(gamma: float, tol: float, q: np.ndarray) -> float:
    scale = max(1.0, float(np.abs(q).max())) if q.size else 1.0
    return max(tol * (1.0 - gamma) / gamma, _ULP_FLOOR * scale)


def bellman_backup(mdp: FiniteMdp, v: np.ndarray) -> np.ndarray:
    """q[s, a] = R[s, a] + gamma * sum_s' P[s, a, s'] v[s']"""
    return mdp.rewards + mdp.gamma * (mdp.transitions @ v)


def policy_evaluation(
    mdp: FiniteMdp,
    policy: TabularPolicy,
    tol: float = DEFAULT_TOL,
    max_iterations: int = MAX_ITERATIONS,
    q_init: Optional[np.ndarray] = None,
    method: str = "iterative",
) -> ValueTable:
    """
    Evaluate `policy` on `mdp`.

    method="iterative" runs Jacobi sweeps q <- R + gamma * P (pi . q) from q_init
    (zeros by default). method="direct" solves (I - gamma P_pi) v = r_pi instead.
    """
    _check_solvable(mdp, tol)
    if policy.probs.shape != (mdp.n_states, mdp.n_actions):
        raise DimensionMismatch(
            f"policy shape {policy.probs.shape} does not match MDP {(mdp.n_states, mdp.n_actions)}"
        )
    pi = policy.probs

    if method == "direct":
        p_pi = np.einsum("sa,sat->st", pi, mdp.transitions)
        r_pi = np.einsum("sa,sa->s", pi, mdp.rewards)
        v = np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * p_pi, r_pi)
        q = bellman_backup(mdp, v)
        v = np.einsum("sa,sa->s", pi, q)
        residual = float(np.abs(bellman_backup(mdp, v) - q).max())
        return ValueTable(v=v, q=q, iterations=1, residual=residual)
    if method != "iterative":
        raise ValueError(f"unknown method {method!r}")

    q = np.zeros((mdp.n_states, mdp.n_actions)) if q_init is None else np.array(q_init, dtype=np.float64)
    for iteration in range(1, max_iterations + 1):
        v = np.einsum("sa,sa->s", pi, q)
        q_next = bellman_backup(mdp, v)
        step = float(np.abs(q_next - q).max())
        q = q_next
        if step <= _step_threshold(mdp.gamma, tol, q):
            v = np.einsum("sa,sa->s", pi, q)
            logger.debug("policy evaluation converged in %d sweeps (step %.3g)", iteration, step)
            return ValueTable(v=v, q=q, iterations=iteration, residual=mdp.gamma * step)

    raise NoConvergence(f"policy evaluation did not converge in {max_iterations} sweeps")


def value_iteration(
    mdp: FiniteMdp,
    tol: float = DEFAULT_TOL,
    max_iterations: int = MAX_ITERATIONS,
) -> Tuple[ValueTable, TabularPolicy]:
    """
    Q* by Jacobi value iteration. The returned policy is greedy in Q*,
    ties broken toward the lowest action index.
    """
    _check_solvable(mdp, tol)

    q = np.zeros((mdp.n_states, mdp.n_actions))
    for iteration in range(1, max_iterations + 1):
        q_next = bellman_backup(mdp, q.max(axis=1))
        step = float(np.abs(q_next - q).max())
        q = q_next
        if step <= _step_threshold(mdp.gamma, tol, q):
            logger.debug("value iteration converged in %d sweeps (step %.3g)", iteration, step)
            greedy = np.argmax(q, axis=1)  # first maximum = lowest index
            policy = TabularPolicy.deterministic(greedy, mdp.n_actions)
            table = ValueTable(v=q.max(axis=1), q=q, iterations=iteration, residual=mdp.gamma * step)
            return table, policy

    raise NoConvergence(f"value iteration did not converge in {max_iterations} sweeps")


def random_mdp(
    n_states: int,
    n_actions: int,
    gamma: float,
    rng: np.random.Generator,
    sparsity: float = 0.0,
) -> FiniteMdp:
    """
    Dirichlet transition rows and uniform(-1, 1) rewards.
    With sparsity > 0 that fraction of next-state entries is zeroed (one is always kept).
    """
    transitions = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    if sparsity > 0.0:
        mask = rng.random(transitions.shape) >= sparsity
        keep = rng.integers(n_states, size=(n_states, n_actions))
        mask[np.arange(n_states)[:, None], np.arange(n_actions)[None, :], keep] = True
        transitions = transitions * mask
        transitions = transitions / transitions.sum(axis=-1, keepdims=True)
    rewards = rng.uniform(-1.0, 1.0, size=(n_states, n_actions))
    return FiniteMdp(transitions, rewards, gamma)
