"""Planar rigid-body lander in normalised units.

Observation layout (8 entries): x, y, vx, vy, theta, omega, left-leg
contact, right-leg contact. The pad is centred at the origin, so the task
potential -(sqrt(x^2 + y^2) + 0.5 |theta|) peaks at 0 on the pad.

The main engine only pushes (throttle = clip(a0, 0, 1)); the side thruster
translates and rolls the body. A passive torsional spring-damper pulls the
attitude back to level. Besides the terminal landing bonus or crash
penalty, each step pays a small fuel and time cost plus a dense progress
term rewarding any reduction of distance, speed and tilt.
"""

from __future__ import annotations

import math

import numpy as np

from hears.energy import lander_model
from hears.envs.base import DEFAULT_DT, Env, EnvState, StepResult, wrap_angle

LEG_SPAN = 0.1


class Lander2D(Env):
    name = "lander"

    def __init__(self, m: float = 1.0, inertia: float = 0.1, g: float = 1.0, main_accel: float = 2.0,
                 side_accel: float = 0.3, side_torque: float = 0.5, dt: float = DEFAULT_DT,
                 max_steps: int = 200, pad_halfwidth: float = 0.2, safe_speed: float = 0.6,
                 safe_angle: float = 0.3, land_reward: float = 10.0, crash_penalty: float = -10.0,
                 progress_weight: float = 10.0, start_height: tuple = (0.5, 0.7),
                 attitude_stiffness: float = 4.0, attitude_damping: float = 2.0, step_cost: float = 0.05):
        self.m, self.inertia, self.g = m, inertia, g
        self.main_accel = main_accel
        self.side_accel = side_accel
        self.side_torque = side_torque
        self.dt = dt
        self.max_steps = max_steps
        self.pad_halfwidth = pad_halfwidth
        self.safe_speed = safe_speed
        self.safe_angle = safe_angle
        self.land_reward = land_reward
        self.crash_penalty = crash_penalty
        self.progress_weight = progress_weight
        self.start_height = tuple(start_height)
        self.attitude_stiffness = attitude_stiffness
        self.attitude_damping = attitude_damping
        self.step_cost = step_cost
        self.action_low = np.array([-1.0, -1.0])
        self.action_high = np.array([1.0, 1.0])
        # 0.5 * sum(a_k^2)
        self.action_q = 0.5 * np.eye(2)
        self.energy = lander_model(m, inertia, g)

    def reset(self, rng: np.random.Generator) -> EnvState:
        x = rng.uniform(-0.3, 0.3)
        y = rng.uniform(self.start_height[0], self.start_height[1])
        vx, vy = rng.uniform(-0.1, 0.1, size=2)
        theta = rng.uniform(-0.1, 0.1)
        return EnvState(np.array([x, y, theta]), np.array([vx, vy, 0.0]), {"legs": (0.0, 0.0)}, 0)

    def observe(self, state: EnvState) -> np.ndarray:
        x, y, th = state.q
        vx, vy, om = state.q_dot
        left, right = state.aux.get("legs", (0.0, 0.0))
        return np.array([x, y, vx, vy, th, om, left, right])

    def task_potential(self, state: EnvState) -> float:
        x, y, th = (float(v) for v in state.q)
        return -(math.hypot(x, y) + 0.5 * abs(th))

    def accelerations(self, theta: float, action: np.ndarray, omega: float = 0.0) -> tuple[float, float, float]:
        throttle = min(max(float(action[0]), 0.0), 1.0)
        side = float(action[1])
        s, c = math.sin(theta), math.cos(theta)
        thrust = throttle * self.main_accel
        lateral = side * self.side_accel
        ax = -s * thrust + c * lateral
        ay = c * thrust + s * lateral - self.g
        # passive attitude stabiliser (a torsional spring-damper towards level)
        alpha = side * self.side_torque - self.attitude_stiffness * theta - self.attitude_damping * omega
        return ax, ay, alpha

    def energy_rate(self, state: EnvState, action) -> float:
        x, y, th = (float(v) for v in state.q)
        vx, vy, om = (float(v) for v in state.q_dot)
        ax, ay, alpha = self.accelerations(th, np.asarray(action, dtype=float), om)
        return self.m * (vx * ax + vy * (ay + self.g)) + self.inertia * om * alpha

    @staticmethod
    def _progress(x, y, th, vx, vy) -> float:
        # dense approach signal: closer, slower and more level is better
        return -(math.hypot(x, y) + math.hypot(vx, vy) + abs(th))

    def _legs(self, y: float, theta: float) -> tuple[float, float]:
        left = 1.0 if y - LEG_SPAN * math.sin(theta) <= 0.0 else 0.0
        right = 1.0 if y + LEG_SPAN * math.sin(theta) <= 0.0 else 0.0
        return left, right

    def _step(self, state: EnvState, action: np.ndarray) -> StepResult:
        x, y, th = (float(v) for v in state.q)
        vx, vy, om = (float(v) for v in state.q_dot)
        ax, ay, alpha = self.accelerations(th, action, om)
        dt = self.dt
        vx += dt * ax
        vy += dt * ay
        om += dt * alpha
        x += dt * vx
        y += dt * vy
        th = wrap_angle(th + dt * om)

        throttle = min(max(float(action[0]), 0.0), 1.0)
        reward = -0.03 * throttle - 0.003 * abs(float(action[1])) - self.step_cost
        reward += self.progress_weight * (self._progress(x, y, th, vx, vy) - self._progress(*state.q, *state.q_dot[:2]))
        terminal = False
        outcome = None
        legs = self._legs(max(y, 0.0), th)
        if y <= 0.0:
            terminal = True
            soft = math.hypot(vx, vy) <= self.safe_speed and abs(th) <= self.safe_angle
            if soft:
                outcome = "landed" if abs(x) <= self.pad_halfwidth else "landed_off_pad"
                reward += self.land_reward if outcome == "landed" else 0.5 * self.land_reward
                vx = vy = om = 0.0
            else:
                outcome = "crashed"
                reward += self.crash_penalty
            y = 0.0
            legs = (1.0, 1.0) if soft else legs
        elif abs(x) > 1.5 or y > 2.0:
            terminal = True
            outcome = "out_of_bounds"
            reward += self.crash_penalty
        nxt = EnvState(np.array([x, y, th]), np.array([vx, vy, om]), {"legs": legs}, state.t + 1)
        return StepResult(nxt, reward, terminal, {"outcome": outcome})
