# envs.py
# Analytic continuous-control environments with known symmetries.
#
#   PendulumSwingup     -- frictionless pendulum, reward (1 + cos theta) / 2 in [0, 1].
#                          Exactly equivariant under (theta, theta_dot, a) -> (-theta, -theta_dot, -a).
#   LinearQuadraticEnv  -- s' = A s + B a + L eps, r = -(s'Qs + a'Ra).
#                          reparameterize(F, G) gives the exact homomorphic image under
#                          f(s) = F s, g(a) = G a.
#   lqr_solve           -- optimal gain and value matrix from the discounted Riccati equation
#   discretized_pendulum_mdp -- finite grid MDP with the same flip symmetry
#
# Both environments are vectorized over leading batch dimensions: a state of shape
# (batch, state_dim) steps a whole batch at once. Each instance owns its own random
# stream; pass `noise` explicitly to share noise between paired rollouts.

import logging
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from src.diff_engine import Tensor, as_tensor
from src.guardrails import DimensionMismatch, RiccatiDivergence
from src.mdp_core import FiniteMdp

logger = logging.getLogger(__name__)

RICCATI_RESIDUAL_TOL = 1e-10


class ContinuousEnv:
    """Contract shared by the continuous environments."""

    name = "env"
    state_dim = 0
    action_dim = 0
    episode_length = 1000
    action_bound = 1.0

    def __init__(self, seed: Optional[int] = None):
        self.rng = np.random.default_rng(seed)

    def seed(self, seed: Optional[int]):
        self.rng = np.random.default_rng(seed)

    def reset(self, batch: Optional[int] = None) -> np.ndarray:
        raise NotImplementedError

    def step(self, state: np.ndarray, action: np.ndarray, noise: Optional[np.ndarray] = None):
        raise NotImplementedError

    def observe(self, state: np.ndarray) -> np.ndarray:
        return np.asarray(state, dtype=np.float64)

    @property
    def observation_dim(self) -> int:
        return self.state_dim

    def clip_action(self, action) -> np.ndarray:
        return np.clip(np.asarray(action, dtype=np.float64), -self.action_bound, self.action_bound)


# -- Pendulum --

class PendulumSwingup(ContinuousEnv):
    """
    State (theta, theta_dot); theta = 0 is upright.

    theta_ddot = 3g/(2l) sin(theta) + 3/(m l^2) * torque,   torque = 2 * clip(a, -1, 1)
    Semi-implicit Euler with dt = 0.05, theta_dot clipped to [-8, 8], theta wrapped to (-pi, pi].
    The reward is paid for the state the step starts from.
    """

    name = "pendulum"
    state_dim = 2
    action_dim = 1
    episode_length = 1000

    mass = 1.0
    length = 1.0
    gravity = 10.0
    dt = 0.05
    max_speed = 8.0
    torque_scale = 2.0

    def __init__(self, seed: Optional[int] = None, process_noise: float = 0.0):
        super().__init__(seed)
        self.process_noise = float(process_noise)

    def reset(self, batch: Optional[int] = None) -> np.ndarray:
        size = () if batch is None else (batch,)
        theta = self.rng.uniform(-np.pi, np.pi, size=size)
        return np.stack([theta, np.zeros_like(theta)], axis=-1)

    @staticmethod
    def wrap(theta: np.ndarray) -> np.ndarray:
        # one branch per side keeps wrap(-x) == -wrap(x) bit for bit (away from +-pi)
        return np.where(theta > np.pi, theta - 2 * np.pi, np.where(theta <= -np.pi, theta + 2 * np.pi, theta))

    @staticmethod
    def reward(state: np.ndarray) -> np.ndarray:
        return (1.0 + np.cos(np.asarray(state)[..., 0])) / 2.0

    def step(self, state, action, noise=None) -> Tuple[np.ndarray, np.ndarray]:
        state = np.asarray(state, dtype=np.float64)
        theta, theta_dot = state[..., 0], state[..., 1]
        torque = self.torque_scale * self.clip_action(action)[..., 0]

        theta_ddot = (
            3.0 * self.gravity / (2.0 * self.length) * np.sin(theta)
            + 3.0 / (self.mass * self.length ** 2) * torque
        )
        new_theta_dot = theta_dot + theta_ddot * self.dt
        if self.process_noise > 0.0:
            if noise is None:
                noise = self.rng.standard_normal(np.shape(theta))
            new_theta_dot = new_theta_dot + self.process_noise * np.asarray(noise)
        new_theta_dot = np.clip(new_theta_dot, -self.max_speed, self.max_speed)
        new_theta = self.wrap(theta + new_theta_dot * self.dt)

        return np.stack([new_theta, new_theta_dot], axis=-1), self.reward(state)

    def observe(self, state) -> np.ndarray:
        state = np.asarray(state, dtype=np.float64)
        theta = state[..., 0]
        return np.stack([np.cos(theta), np.sin(theta), state[..., 1]], axis=-1)

    @property
    def observation_dim(self) -> int:
        return 3

    @staticmethod
    def flip_state(state) -> np.ndarray:
        return -np.asarray(state, dtype=np.float64)

    @staticmethod
    def flip_observation(obs) -> np.ndarray:
        """(cos, sin, theta_dot) -> (cos, -sin, -theta_dot)"""
        return np.asarray(obs, dtype=np.float64) * np.array([1.0, -1.0, -1.0])


def discretized_pendulum_mdp(n_states: int, gamma: float = 0.9) -> FiniteMdp:
    """
    Deterministic grid version of the swing-up with the same left/right symmetry.

    States are angle offsets o in {-(n-1)/2, ..., (n-1)/2} (0 = upright), actions push
    by -1, 0 or +1 and gravity pushes one more step away from upright:
        o' = clip(o + a + sign(o)),   r = (1 + cos(pi * o / o_max)) / 2 - 0.01 a^2
    The flip (o, a) -> (-o, -a) is an exact symmetry, so the minimal quotient has
    ceil(n / 2) states.
    """
    if n_states < 2:
        raise ValueError(f"need at least 2 grid states, got {n_states}")
    half = (n_states - 1) / 2.0
    offsets = np.arange(n_states) - half
    pushes = np.array([-1.0, 0.0, 1.0])

    transitions = np.zeros((n_states, 3, n_states))
    rewards = np.zeros((n_states, 3))
    for i, o in enumerate(offsets):
        for j, a in enumerate(pushes):
            nxt = np.clip(o + a + np.sign(o), -half, half)
            transitions[i, j, int(round(nxt + half))] = 1.0
            rewards[i, j] = (1.0 + np.cos(np.pi * o / half)) / 2.0 - 0.01 * a * a
    return FiniteMdp(transitions, rewards, gamma)


# -- Linear-quadratic --

def _matrix(values, name: str) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(values, dtype=np.float64))
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a matrix, got shape {arr.shape}")
    return arr


class LinearQuadraticEnv(ContinuousEnv):
    """s' = A s + B a + L eps with eps ~ N(0, I);  r(s, a) = -(s'Qs + a'Ra)."""

    name = "lqr"
    episode_length = 200

    def __init__(self, A, B, Q, R, noise=None, noise_scale: float = 0.05,
                 seed: Optional[int] = None, action_bound: float = np.inf):
        super().__init__(seed)
        self.A = _matrix(A, "A")
        self.B = _matrix(B, "B")
        self.Q = _matrix(Q, "Q")
        self.R = _matrix(R, "R")
        n, m = self.B.shape
        if self.A.shape != (n, n) or self.Q.shape != (n, n) or self.R.shape != (m, m):
            raise DimensionMismatch(
                f"inconsistent LQR shapes A{self.A.shape} B{self.B.shape} Q{self.Q.shape} R{self.R.shape}"
            )
        for name, mat in (("Q", self.Q), ("R", self.R)):
            if np.linalg.eigvalsh((mat + mat.T) / 2.0).min() <= 0.0:
                raise ValueError(f"{name} must be positive definite")
        self.L = noise_scale * np.eye(n) if noise is None else _matrix(noise, "noise")
        if self.L.shape[0] != n:
            raise DimensionMismatch(f"noise matrix has {self.L.shape[0]} rows for state dim {n}")
        self.state_dim, self.action_dim = n, m
        self.action_bound = action_bound

    @property
    def noise_cov(self) -> np.ndarray:
        return self.L @ self.L.T

    @property
    def is_deterministic(self) -> bool:
        return not self.L.any()

    def reset(self, batch: Optional[int] = None) -> np.ndarray:
        size = (self.state_dim,) if batch is None else (batch, self.state_dim)
        return self.rng.uniform(-1.0, 1.0, size=size)

    def reward(self, state, action) -> np.ndarray:
        state = np.asarray(state, dtype=np.float64)
        action = np.asarray(action, dtype=np.float64)
        return -(np.sum((state @ self.Q) * state, axis=-1) + np.sum((action @ self.R) * action, axis=-1))

    def draw_noise(self, batch_shape=()) -> np.ndarray:
        return self.rng.standard_normal(tuple(batch_shape) + (self.L.shape[1],))

    def step(self, state, action, noise=None) -> Tuple[np.ndarray, np.ndarray]:
        state = np.asarray(state, dtype=np.float64)
        action = self.clip_action(action)
        next_state = state @ self.A.T + action @ self.B.T
        if not self.is_deterministic:
            if noise is None:
                noise = self.draw_noise(state.shape[:-1])
            next_state = next_state + np.asarray(noise) @ self.L.T
        return next_state, self.reward(state, action)

    def tensor_step(self, state: Tensor, action: Tensor) -> Tuple[Tensor, Tensor]:
        """Noise-free step on batched tensors, differentiable in both arguments."""
        state, action = as_tensor(state), as_tensor(action)
        next_state = state @ self.A.T + action @ self.B.T
        reward = -(((state @ self.Q) * state).sum(axis=-1) + ((action @ self.R) * action).sum(axis=-1))
        return next_state, reward

    def reparameterize(self, F, G) -> "LinearQuadraticEnv":
        """The image of this system under s_bar = F s, a_bar = G a."""
        F, G = _matrix(F, "F"), _matrix(G, "G")
        if F.shape != (self.state_dim,) * 2 or G.shape != (self.action_dim,) * 2:
            raise DimensionMismatch(f"F{F.shape} / G{G.shape} do not match the system dimensions")
        F_inv, G_inv = np.linalg.inv(F), np.linalg.inv(G)
        return LinearQuadraticEnv(
            F @ self.A @ F_inv,
            F @ self.B @ G_inv,
            F_inv.T @ self.Q @ F_inv,
            G_inv.T @ self.R @ G_inv,
            noise=F @ self.L,
            action_bound=self.action_bound,
        )


def random_lqr(rng: np.random.Generator, state_dim: int = 2, action_dim: int = 2,
               spectral_radius: float = 0.9, noise_scale: float = 0.0) -> LinearQuadraticEnv:
    """Random stable A (rescaled to the given spectral radius), Gaussian B, Q = R = I."""
    A = rng.standard_normal((state_dim, state_dim))
    A *= spectral_radius / max(np.abs(np.linalg.eigvals(A)).max(), 1e-12)
    B = rng.standard_normal((state_dim, action_dim))
    return LinearQuadraticEnv(A, B, np.eye(state_dim), np.eye(action_dim), noise_scale=noise_scale)


def random_invertible(rng: np.random.Generator, dim: int, min_singular: float = 0.3) -> np.ndarray:
    """Random matrix with singular values in [min_singular, 1 + min_singular]."""
    u, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    v, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    return u @ np.diag(min_singular + rng.uniform(0.0, 1.0, dim)) @ v.T


# -- Riccati / quadratic value oracles --

def lqr_solve(env: LinearQuadraticEnv, gamma: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Discounted LQR: returns (K, P) with optimal action a = -K s and
    cost-to-go s'Ps (+ a noise constant). P solves
        P = Q + gamma A'PA - gamma^2 A'PB (R + gamma B'PB)^-1 B'PA
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    A, B, Q, R = env.A, env.B, env.Q, env.R
    root = np.sqrt(gamma)
    try:
        P = linalg.solve_discrete_are(root * A, root * B, Q, R)
    except (ValueError, np.linalg.LinAlgError) as err:
        raise RiccatiDivergence(f"discrete Riccati equation failed: {err}") from err
    P = (P + P.T) / 2.0

    K = linalg.solve(R + gamma * B.T @ P @ B, gamma * B.T @ P @ A)
    residual = Q + gamma * A.T @ P @ A - gamma * A.T @ P @ B @ K - P
    scale = max(1.0, float(np.abs(P).max()))
    if not np.isfinite(P).all() or np.abs(residual).max() > RICCATI_RESIDUAL_TOL * scale:
        raise RiccatiDivergence(f"Riccati residual {np.abs(residual).max():.3g} exceeds tolerance")
    closed_loop = root * (A - B @ K)
    if np.abs(np.linalg.eigvals(closed_loop)).max() >= 1.0:
        raise RiccatiDivergence("discounted closed loop is not stable; (A, B) may not be stabilizable")
    logger.debug("Riccati solved: |P| = %.4g, residual %.3g", np.abs(P).max(), np.abs(residual).max())
    return K, P


def linear_policy_value(env: LinearQuadraticEnv, K: np.ndarray, gamma: float) -> np.ndarray:
    """
    Cost matrix P_K of the linear policy a = -K s:
        P_K = Q + K'RK + gamma (A - BK)' P_K (A - BK)
    """
    K = _matrix(K, "K")
    closed_loop = np.sqrt(gamma) * (env.A - env.B @ K)
    if np.abs(np.linalg.eigvals(closed_loop)).max() >= 1.0:
        raise RiccatiDivergence("policy does not stabilize the discounted system; its value is infinite")
    P = linalg.solve_discrete_lyapunov(closed_loop.T, env.Q + K.T @ env.R @ K)
    return (P + P.T) / 2.0


def noise_constant(env: LinearQuadraticEnv, P: np.ndarray, gamma: float) -> float:
    """Constant part c of the cost-to-go s'Ps + c."""
    return gamma * float(np.trace(P @ env.noise_cov)) / (1.0 - gamma)


def state_value(env: LinearQuadraticEnv, P: np.ndarray, gamma: float, state) -> np.ndarray:
    state = np.asarray(state, dtype=np.float64)
    return -(np.sum((state @ P) * state, axis=-1) + noise_constant(env, P, gamma))


def q_value(env: LinearQuadraticEnv, P: np.ndarray, gamma: float, state, action) -> np.ndarray:
    """
    Q(s, a) = r(s, a) - gamma [ (As + Ba)'P(As + Ba) + tr(P Sigma) + c ]
    for the policy whose cost matrix is P.
    """
    state = np.asarray(state, dtype=np.float64)
    action = np.asarray(action, dtype=np.float64)
    mean_next = state @ env.A.T + action @ env.B.T
    future = np.sum((mean_next @ P) * mean_next, axis=-1) + np.trace(P @ env.noise_cov)
    return env.reward(state, action) - gamma * (future + noise_constant(env, P, gamma))


def q_action_gradient(env: LinearQuadraticEnv, P: np.ndarray, gamma: float, state, action) -> np.ndarray:
    """grad_a Q(s, a) = -(R + R')a - gamma B'(P + P')(As + Ba); R and P need not be symmetric."""
    state = np.asarray(state, dtype=np.float64)
    action = np.asarray(action, dtype=np.float64)
    mean_next = state @ env.A.T + action @ env.B.T
    return -(action @ (env.R + env.R.T)) - gamma * (mean_next @ (P + P.T) @ env.B)


def make_env(name: str, seed: Optional[int] = None) -> ContinuousEnv:
    """Environment by CLI/config name."""
    if name == "pendulum":
        return PendulumSwingup(seed=seed)
    if name == "lqr":
        env = random_lqr(np.random.default_rng(seed), noise_scale=0.05)
        env.seed(seed)
        return env
    raise ValueError(f"unknown environment {name!r}; choose 'pendulum' or 'lqr'")
