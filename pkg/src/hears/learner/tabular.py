"""Epsilon-greedy Q-learning on shaped rewards for tabular environments."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from hears.records import RunRecord
from hears.shaping import shaped_reward

DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class TabularShaping:
    """Potential over state indices, regulariser weight and per-action energies.

    Terminal next-states take potential 0 and incur no regularisation at
    the absorbing step, matching the tabular embedding.
    """

    potential: np.ndarray | None = None
    lam: float = 0.0
    energy_per_action: np.ndarray | None = None

    @property
    def is_zero(self) -> bool:
        no_phi = self.potential is None or not np.any(self.potential)
        return no_phi and self.lam == 0.0


@dataclass(frozen=True)
class TabularHyper:
    alpha: float = 0.5
    alpha_power: float | None = None  # if set, per-pair rate = alpha / visits**alpha_power
    epsilon: float = 0.1
    epsilon_decay: float = 1.0  # multiplicative per episode
    epsilon_min: float = 0.0
    gamma: float = 0.99
    max_steps: int = 1000
    q_init: float = 0.0


def _step(env, s: int, a: int, rng: np.random.Generator):
    if hasattr(env, "step_rng"):
        return env.step_rng(s, a, rng)
    return env.step(s, a)


def tabular_q_learning(env, shaping: TabularShaping | None, episodes: int, seed: int,
                       hyper: TabularHyper | None = None,
                       eval_fn: Callable[[np.ndarray], float] | None = None,
                       stop_fn: Callable[[float], bool] | None = None) -> RunRecord:
    """Run Q-learning; ``eval_fn(greedy_policy)`` is logged after every episode.

    The generator consumes exactly three uniforms per step (explore coin,
    random action, tie-break), so runs with identical Q-tables consume
    identical random streams.
    """
    hyper = hyper or TabularHyper()
    shaping = shaping or TabularShaping()
    rng = np.random.default_rng(seed)
    S, A = env.n_states, env.n_actions
    Q = np.full((S, A), float(hyper.q_init))
    visits = np.zeros((S, A))
    phi = np.zeros(S) if shaping.potential is None else np.asarray(shaping.potential, dtype=float)
    energy = np.zeros(A) if shaping.energy_per_action is None else np.asarray(shaping.energy_per_action, dtype=float)
    lam, gamma = float(shaping.lam), float(hyper.gamma)
    record = RunRecord(seed=seed)
    eps = hyper.epsilon
    start = time.perf_counter()
    total_steps = 0
    for _ in range(episodes):
        s = env.reset(rng)
        ret = shaped_ret = 0.0
        steps = 0
        for steps in range(1, hyper.max_steps + 1):
            coin, pick, tie = rng.random(), rng.random(), rng.random()
            if coin < eps:
                a = int(pick * A)
            else:
                row = Q[s]
                best = np.flatnonzero(row == row.max())
                a = int(best[int(tie * best.size)])
            n, r, done = _step(env, s, a, rng)
            phi_next = 0.0 if done else phi[n]
            r_h = shaped_reward(r, phi[s], phi_next, energy[a], gamma, lam)
            visits[s, a] += 1
            lr = hyper.alpha if hyper.alpha_power is None else hyper.alpha / visits[s, a] ** hyper.alpha_power
            target = r_h if done else r_h + gamma * Q[n].max()
            Q[s, a] += lr * (target - Q[s, a])
            if abs(Q[s, a]) > DIVERGENCE_LIMIT:
                raise FloatingPointError(f"Q diverged at state {s}, action {a}: {Q[s, a]} (lr={lr}, target={target})")
            ret += r
            shaped_ret += r_h
            total_steps += 1
            s = n
            if done:
                break
        record.returns.append(ret)
        record.shaped_returns.append(shaped_ret)
        record.lengths.append(steps)
        eps = max(hyper.epsilon_min, eps * hyper.epsilon_decay)
        if eval_fn is not None:
            value = float(eval_fn(np.argmax(Q, axis=1)))
            record.evaluations.append(value)
            if stop_fn is not None and stop_fn(value):
                break
    record.wall_clock = time.perf_counter() - start
    record.extras.update({"q": Q, "policy": np.argmax(Q, axis=1), "total_steps": total_steps})
    return record


def episodes_to_fraction(evaluations, optimum: float, fraction: float = 0.95) -> int | None:
    """1-based count of episodes until the greedy value first reaches ``fraction * optimum``."""
    for i, v in enumerate(evaluations):
        if v >= fraction * optimum:
            return i + 1
    return None
