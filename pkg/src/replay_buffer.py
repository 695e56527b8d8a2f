# replay_buffer.py
# Uniform replay with n-step returns assembled at sample time.
#
# Transitions live in preallocated ring arrays. For a sampled index t the batch carries
#   reward_n   R_t^(n) = sum_{k<m} gamma^k r_{t+k}
#   discount   gamma^m (0 if the window hit a terminal state)
#   next_obs_n observation after the last step of the window
# where m <= n stops early at the end of the episode or at the newest stored step,
# so a window never mixes two episodes. The one-step reward and next observation
# ride along for the model losses.

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


@dataclass
class Batch:
    obs: np.ndarray
    action: np.ndarray
    reward_n: np.ndarray
    discount: np.ndarray
    next_obs_n: np.ndarray
    reward: np.ndarray
    next_obs: np.ndarray
    indices: np.ndarray

    def __len__(self) -> int:
        return self.obs.shape[0]


class ReplayBuffer:
    """Fixed-capacity ring buffer of (s, a, r, s', terminal, episode_end)."""

    def __init__(self, capacity: int, obs_dim: int, action_dim: int, n_step: int = 3, gamma: float = 0.99):
        if capacity < 1 or n_step < 1:
            raise ValueError(f"capacity and n_step must be positive, got {capacity}, {n_step}")
        self.capacity = int(capacity)
        self.n_step = int(n_step)
        self.gamma = float(gamma)
        self.obs = np.zeros((self.capacity, obs_dim))
        self.actions = np.zeros((self.capacity, action_dim))
        self.rewards = np.zeros(self.capacity)
        self.next_obs = np.zeros((self.capacity, obs_dim))
        self.terminals = np.zeros(self.capacity, dtype=bool)
        self.episode_ends = np.zeros(self.capacity, dtype=bool)
        self.ptr = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, obs, action, reward: float, next_obs, terminal: bool = False, episode_end: bool = False):
        i = self.ptr
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.terminals[i] = terminal
        self.episode_ends[i] = episode_end or terminal
        self.ptr = (self.ptr + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def n_step_window(self, index: int):
        """(R^(m), discount, index of the last step) for the window starting at `index`."""
        newest = (self.ptr - 1) % self.capacity
        total, scale = 0.0, 1.0
        j = index
        for _ in range(self.n_step):
            total += scale * self.rewards[j]
            scale *= self.gamma
            if self.terminals[j]:
                return total, 0.0, j
            if self.episode_ends[j] or j == newest:
                break
            j = (j + 1) % self.capacity
        else:
            j = (j - 1) % self.capacity
        return total, scale, j

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self.size == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        indices = rng.integers(0, self.size, size=batch_size)
        windows = [self.n_step_window(int(i)) for i in indices]
        reward_n = np.array([w[0] for w in windows])
        discount = np.array([w[1] for w in windows])
        last = np.array([w[2] for w in windows], dtype=np.int64)
        return Batch(
            obs=self.obs[indices],
            action=self.actions[indices],
            reward_n=reward_n,
            discount=discount,
            next_obs_n=self.next_obs[last],
            reward=self.rewards[indices],
            next_obs=self.next_obs[indices],
            indices=indices,
        )
