"""Torque-limited pendulum swing-up integrated with a fourth-order symplectic scheme."""

from __future__ import annotations

import math

import numpy as np

from hears.energy import pendulum_model
from hears.envs.base import DEFAULT_DT, Env, EnvState, StepResult, wrap_angle

_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_W0 = -(2.0 ** (1.0 / 3.0)) * _W1
YOSHIDA_DRIFT = (_W1 / 2.0, (_W0 + _W1) / 2.0, (_W0 + _W1) / 2.0, _W1 / 2.0)
YOSHIDA_KICK = (_W1, _W0, _W1)


class PendulumSwingUp(Env):
    """theta = 0 hangs down, theta = pi is upright; action in [-1, 1] scales max torque."""

    name = "pendulum"

    def __init__(self, m: float = 1.0, length: float = 1.0, g: float = 9.81, max_torque: float = 3.0,
                 damping: float = 0.0, dt: float = DEFAULT_DT, max_steps: int = 250, task_weight: float = 1.0):
        self.m, self.length, self.g = m, length, g
        self.max_torque = max_torque
        self.damping = damping
        self.dt = dt
        self.max_steps = max_steps
        self.task_weight = task_weight
        self.action_low = np.array([-1.0])
        self.action_high = np.array([1.0])
        self.energy = pendulum_model(m, length, g, normalizer=2.0 * m * g * length)

    def reset(self, rng: np.random.Generator) -> EnvState:
        theta = wrap_angle(rng.uniform(-0.3, 0.3))
        omega = rng.uniform(-0.3, 0.3)
        return EnvState(np.array([theta]), np.array([omega]), {}, 0)

    def rest_state(self) -> EnvState:
        return EnvState(np.array([0.0]), np.array([0.0]), {}, 0)

    def observe(self, state: EnvState) -> np.ndarray:
        th, om = float(state.q[0]), float(state.q_dot[0])
        return np.array([math.cos(th), math.sin(th), om / 8.0])

    def angular_acceleration(self, theta: float, omega: float, torque: float) -> float:
        ml2 = self.m * self.length**2
        return (torque - self.m * self.g * self.length * math.sin(theta) - self.damping * omega) / ml2

    def energy_rate(self, state: EnvState, action) -> float:
        """dE/dt = omega * (torque - b * omega)."""
        omega = float(state.q_dot[0])
        torque = float(np.asarray(action).ravel()[0]) * self.max_torque
        return omega * (torque - self.damping * omega)

    def integrate(self, theta: float, omega: float, torque: float) -> tuple[float, float]:
        """One step of the fourth-order symplectic (Yoshida) drift-kick composition."""
        h = self.dt
        for c, d in zip(YOSHIDA_DRIFT, YOSHIDA_KICK):
            theta += c * h * omega
            omega += d * h * self.angular_acceleration(theta, omega, torque)
        theta += YOSHIDA_DRIFT[-1] * h * omega
        return theta, omega

    def task_potential(self, state: EnvState) -> float:
        """-w (1 - cos(angle from upright))."""
        err = float(state.q[0]) - math.pi
        return -self.task_weight * (1.0 - math.cos(err))

    def _step(self, state: EnvState, action: np.ndarray) -> StepResult:
        torque = float(action[0]) * self.max_torque
        th, om = float(state.q[0]), float(state.q_dot[0])
        th_new, om_new = self.integrate(th, om, torque)
        up_err = wrap_angle(th - math.pi)
        reward = -(up_err**2 + 0.1 * om**2 + 0.001 * torque**2)
        nxt = EnvState(np.array([wrap_angle(th_new)]), np.array([om_new]), {}, state.t + 1)
        return StepResult(nxt, reward, False, {"unwrapped_theta": th_new})
