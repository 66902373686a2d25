"""One-legged spring-mass hopper with three actuated quantities.

q = (x, z, pitch, hip, knee), q_dot = (vx, vz, w_pitch, w_hip, w_knee).
The body bounces on a massless spring leg of rest length ``leg_length``;
stance holds while ``z < leg_length``. Actions (all in [-1, 1]):

* a[0]: axial leg thrust during stance
* a[1]: horizontal push during stance, reacted by the hip joint
* a[2]: pitch torque, reacted by the knee joint

The three joints are spring-damper rotors. Only the forward-progress
potential, the posture pseudo-energy and the 0.5 * sum(a_k^2) action energy
carry over from full-scale hopping benchmarks.
"""

from __future__ import annotations

import math

import numpy as np

from hears.energy import hopper_model
from hears.envs.base import DEFAULT_DT, Env, EnvState, StepResult


class HopperLite(Env):
    name = "hopper"

    def __init__(self, m: float = 1.0, inertia: float = 0.05, g: float = 9.81, leg_length: float = 1.0,
                 leg_stiffness: float = 400.0, ground_damping: float = 1.0, thrust: float = 5.0,
                 push: float = 3.0, torque: float = 0.2, joint_stiffness: float = 1.0,
                 joint_damping: float = 0.05, dt: float = DEFAULT_DT, max_steps: int = 500,
                 task_weight: float = 1.0):
        self.m, self.inertia, self.g = m, inertia, g
        self.leg_length = leg_length
        self.leg_stiffness = leg_stiffness
        self.ground_damping = ground_damping
        self.thrust, self.push, self.torque = thrust, push, torque
        self.joint_stiffness = joint_stiffness
        self.joint_damping = joint_damping
        self.dt = dt
        self.max_steps = max_steps
        self.task_weight = task_weight
        self.action_low = -np.ones(3)
        self.action_high = np.ones(3)
        self.action_q = 0.5 * np.eye(3)
        self.energy = hopper_model(m, inertia, g)

    def standing_height(self) -> float:
        return self.leg_length - self.m * self.g / self.leg_stiffness

    def reset(self, rng: np.random.Generator) -> EnvState:
        z = self.standing_height() + rng.uniform(0.0, 0.05)
        return EnvState(np.array([0.0, z, 0.0, 0.0, 0.0]), np.zeros(5), {"stance": True}, 0)

    def standing_state(self) -> EnvState:
        return EnvState(np.array([0.0, self.standing_height(), 0.0, 0.0, 0.0]), np.zeros(5), {"stance": True}, 0)

    def task_potential(self, state: EnvState) -> float:
        """w * sqrt(max(0, x))."""
        return self.task_weight * math.sqrt(max(0.0, float(state.q[0])))

    def _accelerations(self, q: np.ndarray, qd: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, bool]:
        z = q[1]
        stance = z < self.leg_length
        acc = np.zeros(5)
        acc[1] = -self.g
        if stance:
            compression = self.leg_length - z
            fz = self.leg_stiffness * compression - self.ground_damping * qd[1] + self.thrust * a[0]
            acc[1] += max(fz, 0.0) / self.m
            acc[0] = self.push * a[1] / self.m
        joint_torque = np.array([self.torque * a[2], -self.push * a[1] * 0.05, -self.torque * a[2]])
        acc[2:5] = (joint_torque - self.joint_stiffness * q[2:5] - self.joint_damping * qd[2:5]) / self.inertia
        return acc, stance

    def _step(self, state: EnvState, action: np.ndarray) -> StepResult:
        q = state.q.astype(float).copy()
        qd = state.q_dot.astype(float).copy()
        x_before = q[0]
        acc, stance = self._accelerations(q, qd, action)
        qd = qd + self.dt * acc
        q = q + self.dt * qd
        if q[1] < 0.0:
            q[1] = 0.0
            qd[1] = max(qd[1], 0.0)
        fallen = abs(q[2]) > 1.0
        reward = (q[0] - x_before) / self.dt + 1.0 - 0.001 * float(action @ action)
        if fallen:
            reward -= 10.0
        nxt = EnvState(q, qd, {"stance": bool(q[1] < self.leg_length)}, state.t + 1)
        return StepResult(nxt, reward, fallen, {"contact_event": stance != (q[1] < self.leg_length)})
