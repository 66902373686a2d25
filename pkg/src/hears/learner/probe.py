"""Action-chatter probe: how much an action sequence moves versus how much energy it moves."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class ProbeResult:
    action_total_variation: float
    energy_change_total: float
    net_energy_change: float
    steps: int

    @property
    def chatter_ratio(self) -> float:
        """Action TV per unit of net energy change (inf if energy returns exactly)."""
        if self.net_energy_change == 0.0:
            return float("inf")
        return self.action_total_variation / self.net_energy_change


def oscillation_probe(env, policy: Callable, steps: int, state=None, rng: np.random.Generator | None = None) -> ProbeResult:
    """Roll ``policy(state, t)`` deterministically and sum sum|a_t - a_{t-1}| and sum|dE_t|."""
    if state is None:
        state = env.reset(rng or np.random.default_rng(0))
    e0 = env.total_energy(state)
    e_prev = e0
    tv = de_total = 0.0
    prev = None
    t = 0
    for t in range(steps):
        a = np.asarray(policy(state, t), dtype=float)
        res = env.step(state, a)
        applied = res.info["action"]
        if prev is not None:
            tv += float(np.linalg.norm(applied - prev))
        prev = applied
        e = env.total_energy(res.state)
        de_total += abs(e - e_prev)
        e_prev = e
        state = res.state
        if res.terminal:
            break
    return ProbeResult(action_total_variation=tv, energy_change_total=de_total,
                       net_energy_change=abs(e_prev - e0), steps=t + 1)


def alternating_policy(amplitude) -> Callable:
    """a_t = (-1)^t * amplitude."""
    amp = np.asarray(amplitude, dtype=float)

    def policy(state, t):
        return amp if t % 2 == 0 else -amp

    return policy
