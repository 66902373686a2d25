"""Transitions and a fixed-capacity ring buffer."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from hears.shaping import shaped_reward


@dataclass(frozen=True)
class Transition:
    state: Any
    action: np.ndarray
    reward: float
    next_state: Any
    terminal: bool
    potentials: tuple[float, float]
    action_energy: float

    def __post_init__(self):
        if self.action_energy < 0:
            raise ValueError("action energy must be nonnegative")

    def shaped(self, gamma: float, lam: float) -> float:
        phi_s, phi_next = self.potentials
        return shaped_reward(self.reward, phi_s, phi_next, self.action_energy, gamma, lam)


class ReplayBuffer:
    """Stores observation arrays plus the shaping ingredients of each transition.

    The shaped reward is computed once at insertion and cached next to the
    potentials and action energy it came from. Sampling draws indices from
    the buffer's own generator, so the sample sequence is a pure function of
    the seed and insertion order.
    """

    def __init__(self, capacity: int, obs_dim: int, action_dim: int, seed: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.rng = np.random.default_rng(seed)
        self.obs = np.zeros((capacity, obs_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.base_rewards = np.zeros(capacity)
        self.shaped_rewards = np.zeros(capacity)
        self.phi = np.zeros((capacity, 2))
        self.energy = np.zeros(capacity)
        self.done = np.zeros(capacity)
        self.size = 0
        self._next = 0

    def __len__(self) -> int:
        return self.size

    def add(self, obs, action, base_reward: float, shaped: float, next_obs, terminal: bool,
            potentials: tuple[float, float], action_energy: float) -> None:
        i = self._next
        self.obs[i] = obs
        self.actions[i] = action
        self.base_rewards[i] = base_reward
        self.shaped_rewards[i] = shaped
        self.next_obs[i] = next_obs
        self.done[i] = float(terminal)
        self.phi[i] = potentials
        self.energy[i] = action_energy
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int) -> dict[str, np.ndarray]:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = self.rng.integers(0, self.size, size=batch_size)
        return {
            "obs": self.obs[idx], "actions": self.actions[idx], "rewards": self.shaped_rewards[idx],
            "next_obs": self.next_obs[idx], "done": self.done[idx], "index": idx,
        }

    def recompute_shaped(self, gamma: float, lam: float) -> np.ndarray:
        n = self.size
        return shaped_reward(self.base_rewards[:n], self.phi[:n, 0], self.phi[:n, 1], self.energy[:n], gamma, lam)

    def mean_action_energy(self) -> float:
        return float(np.mean(self.energy[:self.size])) if self.size else 0.0
