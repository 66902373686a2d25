"""Shared environment plumbing: state container, clipping, step result."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from hears.energy import EnergyModel, energy_potential, total_energy

DEFAULT_DT = 0.02


class SimulationError(FloatingPointError):
    """Raised when an environment step produces non-finite values."""


@dataclass(frozen=True)
class EnvState:
    q: np.ndarray
    q_dot: np.ndarray
    aux: dict = field(default_factory=dict)
    t: int = 0

    def vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.q_dot])


class StepResult(NamedTuple):
    state: EnvState
    reward: float
    terminal: bool
    info: dict


def wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.fmod(theta + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


def clip_action(action, low: np.ndarray, high: np.ndarray) -> tuple[np.ndarray, bool]:
    a = np.atleast_1d(np.asarray(action, dtype=float))
    if a.shape != low.shape:
        raise ValueError(f"action has shape {a.shape}, expected {low.shape}")
    if not np.all(np.isfinite(a)):
        raise SimulationError(f"non-finite action {a}")
    clipped = np.clip(a, low, high)
    return clipped, bool(np.any(clipped != a))


class Env:
    """Deterministic environment with a functional ``step``.

    Subclasses set ``action_low``/``action_high``, ``energy`` and implement
    ``reset``, ``_step``, ``observe`` and ``task_potential``.
    """

    name = "env"
    dt = DEFAULT_DT
    max_steps = 1000
    energy: EnergyModel
    action_low: np.ndarray
    action_high: np.ndarray
    action_q: np.ndarray | None = None

    @property
    def action_dim(self) -> int:
        return self.action_low.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.observe(self.reset(np.random.default_rng(0))).shape[0]

    def reset(self, rng: np.random.Generator) -> EnvState:
        raise NotImplementedError

    def observe(self, state: EnvState) -> np.ndarray:
        return state.vector()

    def task_potential(self, state: EnvState) -> float:
        return 0.0

    def energy_potential(self, state: EnvState) -> float:
        return energy_potential(self.energy, state.q, state.q_dot, state.aux)

    def total_energy(self, state: EnvState) -> float:
        return total_energy(self.energy, state.q, state.q_dot, state.aux)

    def action_energy(self, action, state: EnvState | None = None) -> float:
        a = np.asarray(action, dtype=float)
        Q = self.action_q if self.action_q is not None else np.eye(a.size)
        return float(a @ Q @ a)

    def step(self, state: EnvState, action) -> StepResult:
        a, clipped = clip_action(action, self.action_low, self.action_high)
        if not (np.all(np.isfinite(state.q)) and np.all(np.isfinite(state.q_dot))):
            raise SimulationError(f"{self.name}: non-finite state q={state.q}, q_dot={state.q_dot}")
        result = self._step(state, a)
        nxt = result.state
        if not (np.all(np.isfinite(nxt.q)) and np.all(np.isfinite(nxt.q_dot)) and math.isfinite(result.reward)):
            raise SimulationError(
                f"{self.name}: non-finite step from q={state.q}, q_dot={state.q_dot}, aux={state.aux}, "
                f"action={a} -> q={nxt.q}, q_dot={nxt.q_dot}, reward={result.reward}"
            )
        info = dict(result.info)
        info["clipped"] = clipped
        info["action"] = a
        return StepResult(nxt, result.reward, result.terminal, info)

    def _step(self, state: EnvState, action: np.ndarray) -> StepResult:
        raise NotImplementedError
