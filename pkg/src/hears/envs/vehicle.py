"""Planar two-axle vehicle with a learned reference layer over a tracking MPC.

Plant: body-frame velocities (v_x, v_y, r) and global pose (X, Y, psi),
integrated with RK4. Lateral dynamics follow

    m (dv_y/dt + v_x r) = F_yf + F_yr (+ bank gravity)
    I_z dr/dt = a F_yf - b F_yr + M_z

with the saturating tire law of :mod:`hears.envs.tires`.

Control hierarchy: the policy emits normalised references
``a = (r_hat, beta_hat, ax_hat)`` in [-1, 1]^3. They are added to a nominal
reference prior (pure-pursuit yaw rate, zero sideslip, proportional speed
hold), the MPC turns the (beta, r) references into steering angle and yaw
moment, and the longitudinal command becomes a traction-limited force.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from hears.energy import VehicleEnergyParams, sideslip, vehicle_model
from hears.envs.base import DEFAULT_DT, Env, EnvState, StepResult, wrap_angle
from hears.envs.road import RoadProfile, generate_road
from hears.envs.tires import GRAVITY, VehicleParams, tire_lateral_force
from hears.mpc import MpcProblem, MpcReport, linearize_vehicle, solve

TASK_WEIGHTS = (0.35, 0.25, 0.15, 0.15, 0.10)
REWARD_WEIGHTS = {"coop": 1.0, "speed": 1.5, "path": 1.0, "look": 1.2, "head": 1.2, "stab": 0.8}
TRAIN_SCALE = 0.05
TERMINAL_PENALTY = -10.0
PREVIEW_DISTANCES = (5.0, 10.0)
LOW_SPEED = 2.0


@dataclass(frozen=True)
class VehicleTaskConfig:
    v_target: float = 15.0
    r_scale: float = 0.2  # rad/s per unit of r_hat
    beta_scale: float = 0.05  # rad per unit of beta_hat
    ax_scale: float = 2.0  # m/s^2 per unit of ax_hat
    ax_max: float = 4.0
    speed_gain: float = 0.5
    pursuit_distance: float = 10.0
    delta_max: float = 0.3  # rad
    mz_max: float = 3000.0  # N m
    du_max: tuple = (0.05, 0.1)  # normalised per step
    q_weights: tuple = (1.0 / 0.02**2, 1.0 / 0.05**2)
    r_weights: tuple = (20.0, 20.0)
    y_tol: tuple = (0.03, 0.1)  # beta [rad], r [rad/s]
    y_max: tuple = (0.17, 1.0)
    ref_exec_scale: tuple = (0.17, 1.0)  # y_max,i in the consistency term
    lateral_limit: float = 3.0  # m from the centreline
    beta_limit: float = math.radians(10.0)
    n_p: int = 10
    n_c: int = 5
    state_dependent_bonus: float = 0.0


@dataclass(frozen=True)
class VehicleSignals:
    """Quantities the base reward and potentials read after a step."""

    vx: float
    vy: float
    r: float
    beta: float
    e_lat: float
    heading_error: float
    preview_angles: tuple
    ltr: float
    progress: float
    terminal: bool


def sigmoid_feasibility(f: float) -> float:
    return 1.0 / (1.0 + math.exp(-15.0 * (f - 0.85)))


def reward_components(signals: VehicleSignals, mpc_report, v_target: float,
                      ref_exec_scale=(0.17, 1.0), state_dependent_bonus: float = 0.0) -> dict[str, float]:
    for name in ("feasibility_ratio", "y_ref", "y_exec"):
        if getattr(mpc_report, name, None) is None:
            raise AttributeError(f"mpc report is missing field {name!r}")
    sig = sigmoid_feasibility(float(mpc_report.feasibility_ratio))
    y_ref = np.atleast_2d(np.asarray(mpc_report.y_ref, dtype=float))[0]
    y_exec = np.asarray(mpc_report.y_exec, dtype=float)
    ref_exec = 2.0 * math.exp(-2.0 * float(np.sum(np.abs((y_ref - y_exec) / np.asarray(ref_exec_scale)))))
    coop = 3.0 * sig - 0.5 * (1.0 - sig) + ref_exec + state_dependent_bonus
    speed = (v_target**2 - (signals.vx - v_target) ** 2) / v_target**2
    e = abs(signals.e_lat)
    path = 5.0 * (1.0 - e / 1.0) if e < 1.0 else -2.0 * (e - 1.0) ** 1.5
    th1, th2 = signals.preview_angles
    look = 0.7 * math.exp(-th1**2 / (2 * 0.3**2)) + 0.3 * math.exp(-th2**2 / (2 * 0.3**2))
    head = math.exp(-3.0 * abs(signals.heading_error))
    stab = (math.exp(-3.0 * abs(signals.r)) + math.exp(-5.0 * abs(signals.beta))
            + math.exp(-5.0 * signals.ltr**2)) / 3.0
    return {"coop": coop, "speed": speed, "path": path, "look": look, "head": head, "stab": stab}


def vehicle_base_reward(signals: VehicleSignals, mpc_report, weights: dict | None = None,
                        v_target: float = 15.0, ref_exec_scale=(0.17, 1.0),
                        state_dependent_bonus: float = 0.0, train_scale: float = TRAIN_SCALE) -> float:
    """Weighted sum of the six components plus terminal penalty, times the training scale."""
    w = REWARD_WEIGHTS if weights is None else weights
    comps = reward_components(signals, mpc_report, v_target, ref_exec_scale, state_dependent_bonus)
    base = sum(w[k] * comps[k] for k in REWARD_WEIGHTS)
    if signals.terminal:
        base += TERMINAL_PENALTY
    return train_scale * base


def vehicle_task_potential(vx: float, vy: float, r: float, beta: float, heading_error: float,
                           x: float, x_max: float, v_target: float) -> float:
    track = 10.0 * math.exp(-0.5 * abs(vy) ** 2)
    stab = 5.0 * math.exp(-3.0 * (beta**2 + 0.5 * r**2))
    head = 3.0 * math.exp(-5.0 * heading_error**2)
    speed = 4.0 * math.exp(-0.05 * (vx - v_target) ** 2)
    prog = 10.0 * min(x / x_max, 1.0)
    w = TASK_WEIGHTS
    return w[0] * track + w[1] * stab + w[2] * head + w[3] * speed + w[4] * prog


def vehicle_action_energy(action, prev_action) -> float:
    """0.5 |a|^2 + turn and slip excess penalties + |a - a_prev|^2."""
    a = np.asarray(action, dtype=float)
    p = np.asarray(prev_action, dtype=float)
    r_hat, beta_hat = abs(a[0]), abs(a[1])
    turn = 2.0 * (r_hat - 0.3) ** 2 if r_hat > 0.3 else 0.0
    slip = 3.0 * (beta_hat - 0.3) ** 2 if beta_hat > 0.3 else 0.0
    return float(0.5 * a @ a + turn + slip + np.sum((a - p) ** 2))


def body_accelerations(vx: float, vy: float, r: float, f_yf: float, f_yr: float, m_z: float, f_x: float,
                       params: VehicleParams, bank: float = 0.0, grade: float = 0.0) -> tuple[float, float, float]:
    """(dv_x/dt, dv_y/dt, dr/dt) in the body frame; bank and grade in radians."""
    m = params.m
    dvx = f_x / m - GRAVITY * math.sin(grade) + vy * r
    dvy = (f_yf + f_yr) / m + GRAVITY * math.sin(bank) - vx * r
    dr = (params.a * f_yf - params.b * f_yr + m_z) / params.i_z
    return dvx, dvy, dr


def slip_angles(vx: float, vy: float, r: float, delta: float, params: VehicleParams,
                v_floor: float = 1.0) -> tuple[float, float]:
    v = max(vx, v_floor)
    return delta - (vy + params.a * r) / v, -(vy - params.b * r) / v


class VehiclePlant:
    """RK4 integrator for the 6-state planar vehicle under (delta, M_z, F_x)."""

    def __init__(self, params: VehicleParams, road: RoadProfile, dt: float = DEFAULT_DT):
        self.params = params
        self.road = road
        self.dt = dt

    def tire_forces(self, x: np.ndarray, delta: float) -> tuple[float, float]:
        X, _, _, vx, vy, r = x
        grade = math.radians(self.road.longitudinal_slope(X))
        fzf, fzr = self.params.axle_loads(grade)
        mu = self.road.friction(X)
        af, ar = slip_angles(vx, vy, r, delta, self.params)
        c = self.params.stiffness_per_load
        return tire_lateral_force(af, fzf, mu, c), tire_lateral_force(ar, fzr, mu, c)

    def derivative(self, x: np.ndarray, delta: float, m_z: float, f_x: float) -> np.ndarray:
        X, Y, psi, vx, vy, r = x
        f_yf, f_yr = self.tire_forces(x, delta)
        bank = math.radians(self.road.lateral_slope(X))
        grade = math.radians(self.road.longitudinal_slope(X))
        dvx, dvy, dr = body_accelerations(vx, vy, r, f_yf, f_yr, m_z, f_x, self.params, bank, grade)
        c, s = math.cos(psi), math.sin(psi)
        return np.array([vx * c - vy * s, vx * s + vy * c, r, dvx, dvy, dr])

    def traction_limit(self, X: float) -> float:
        grade = math.radians(self.road.longitudinal_slope(X))
        return self.road.friction(X) * self.params.m * GRAVITY * math.cos(grade)

    def step(self, x: np.ndarray, delta: float, m_z: float, f_x: float) -> np.ndarray:
        dt = self.dt
        k1 = self.derivative(x, delta, m_z, f_x)
        k2 = self.derivative(x + 0.5 * dt * k1, delta, m_z, f_x)
        k3 = self.derivative(x + 0.5 * dt * k2, delta, m_z, f_x)
        k4 = self.derivative(x + dt * k3, delta, m_z, f_x)
        out = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if out[3] < 0.0:
            out[3] = 0.0
        return out

    def lateral_acceleration(self, x: np.ndarray, delta: float) -> float:
        f_yf, f_yr = self.tire_forces(x, delta)
        return (f_yf + f_yr) / self.params.m


class BicycleVehicle(Env):
    name = "vehicle"

    def __init__(self, road: RoadProfile | None = None, params: VehicleParams | None = None,
                 task: VehicleTaskConfig | None = None, energy_params: VehicleEnergyParams | None = None,
                 dt: float = DEFAULT_DT, max_steps: int = 500, random_start: bool = True,
                 start_speed: float | tuple = (0.0, 15.0), x_max: float | None = None):
        self.road = road or generate_road(0, 1000.0)
        self.params = params or VehicleParams()
        self.task = task or VehicleTaskConfig()
        self.dt = dt
        self.max_steps = max_steps
        self.random_start = random_start
        self.start_speed = start_speed
        self.x_max = x_max or self.road.length
        self.energy_params = energy_params or VehicleEnergyParams(
            m=self.params.m, i_z=self.params.i_z, v_target=self.task.v_target, v_ideal=self.task.v_target)
        self.energy = vehicle_model(self.energy_params)
        self.action_low = -np.ones(3)
        self.action_high = np.ones(3)
        self.plant = VehiclePlant(self.params, self.road, dt)
        self._problems: dict[float, MpcProblem] = {}

    # --- setup ---------------------------------------------------------------

    def reset(self, rng: np.random.Generator) -> EnvState:
        if self.random_start:
            horizon = self.max_steps * self.dt * self.task.v_target
            X = float(rng.uniform(0.0, max(0.0, self.road.length - horizon)))
        else:
            X = 0.0
        if isinstance(self.start_speed, tuple):
            vx = float(rng.uniform(*self.start_speed))
        else:
            vx = float(self.start_speed)
        Y = self.road.centerline(X)
        psi = self.road.centerline_heading(X)
        return self._make_state(np.array([X, Y, psi, vx, 0.0, 0.0]), prev_r=0.0, prev_action=np.zeros(3),
                                u_prev=np.zeros(2), ay=0.0, t=0)

    def _make_state(self, x: np.ndarray, prev_r: float, prev_action: np.ndarray, u_prev: np.ndarray,
                    ay: float, t: int) -> EnvState:
        aux = {"prev_yaw_rate": float(prev_r), "prev_action": np.asarray(prev_action, dtype=float).copy(),
               "u_prev": np.asarray(u_prev, dtype=float).copy(), "ay": float(ay)}
        return EnvState(np.array(x[:3], dtype=float), np.array(x[3:], dtype=float), aux, t)

    # --- geometry -------------------------------------------------------------

    def signals(self, state: EnvState, terminal: bool = False) -> VehicleSignals:
        X, Y, psi = (float(v) for v in state.q)
        vx, vy, r = (float(v) for v in state.q_dot)
        road = self.road
        psi_c = road.centerline_heading(X)
        e_lat = (Y - road.centerline(X)) * math.cos(psi_c)
        previews = tuple(wrap_angle(math.atan2(road.centerline(X + d) - Y, d) - psi) for d in PREVIEW_DISTANCES)
        ltr = 2.0 * state.aux.get("ay", 0.0) * self.params.h / (GRAVITY * self.params.track)
        return VehicleSignals(vx=vx, vy=vy, r=r, beta=sideslip(vx, vy), e_lat=e_lat,
                              heading_error=wrap_angle(psi - psi_c), preview_angles=previews, ltr=ltr,
                              progress=X, terminal=terminal)

    def observe(self, state: EnvState) -> np.ndarray:
        s = self.signals(state)
        X = float(state.q[0])
        return np.array([
            s.e_lat / self.task.lateral_limit, s.heading_error, 5.0 * s.beta, s.r,
            (s.vx - self.task.v_target) / self.task.v_target, s.vy, s.preview_angles[0], s.preview_angles[1],
            self.road.friction(X), math.radians(self.road.lateral_slope(X)),
            math.radians(self.road.longitudinal_slope(X)),
        ])

    def task_potential(self, state: EnvState) -> float:
        s = self.signals(state)
        return vehicle_task_potential(s.vx, s.vy, s.r, s.beta, s.heading_error, s.progress, self.x_max,
                                      self.task.v_target)

    def action_energy(self, action, state: EnvState | None = None) -> float:
        prev = np.zeros(3) if state is None else state.aux.get("prev_action", np.zeros(3))
        return vehicle_action_energy(action, prev)

    # --- control hierarchy ----------------------------------------------------

    def problem(self, vx: float) -> MpcProblem:
        key = round(max(vx, LOW_SPEED) * 4.0) / 4.0
        prob = self._problems.get(key)
        if prob is None:
            t = self.task
            a, b, c = linearize_vehicle(self.params, key, self.dt, input_scale=(t.delta_max, t.mz_max))
            prob = MpcProblem(a=a, b=b, c=c, n_p=t.n_p, n_c=t.n_c, q=np.diag(t.q_weights), r=np.diag(t.r_weights),
                              u_min=-np.ones(2), u_max=np.ones(2), du_max=np.array(t.du_max),
                              y_tol=np.array(t.y_tol), y_max=np.array(t.y_max))
            self._problems[key] = prob
        return prob

    def references(self, state: EnvState, action: np.ndarray) -> tuple[float, float, float]:
        """(beta_ref, r_ref, a_x) from the nominal prior plus the scaled policy output."""
        t = self.task
        X, Y, psi = (float(v) for v in state.q)
        vx = float(state.q_dot[0])
        ld = t.pursuit_distance
        alpha = wrap_angle(math.atan2(self.road.centerline(X + ld) - Y, ld) - psi)
        r_nom = max(vx, 0.0) * 2.0 * math.sin(alpha) / ld
        a_nom = float(np.clip(t.speed_gain * (t.v_target - vx), -t.ax_max, t.ax_max))
        r_ref = r_nom + t.r_scale * float(action[0])
        beta_ref = t.beta_scale * float(action[1])
        a_x = float(np.clip(a_nom + t.ax_scale * float(action[2]), -t.ax_max, t.ax_max))
        return beta_ref, r_ref, a_x

    def control(self, state: EnvState, beta_ref: float, r_ref: float) -> MpcReport:
        vx, vy, r = (float(v) for v in state.q_dot)
        u_prev = state.aux.get("u_prev", np.zeros(2))
        t = self.task
        y_ref = np.array([beta_ref, r_ref])
        if vx < LOW_SPEED:
            # kinematic steering; the linear model is singular near standstill
            delta = r_ref * self.params.wheelbase / max(vx, 0.5)
            u = np.array([delta / t.delta_max, 0.0])
            du = np.array(t.du_max)
            u = np.clip(np.clip(u, u_prev - du, u_prev + du), -1.0, 1.0)
            n_p = t.n_p
            return MpcReport(u0=u, u_sequence=np.tile(u, (n_p, 1)), predicted_outputs=np.tile(y_ref, (n_p, 1)),
                             feasibility_ratio=1.0, iterations=0, converged=True, cost=0.0,
                             y_ref=np.tile(y_ref, (n_p, 1)), mode="low_speed")
        prob = self.problem(vx)
        return solve(prob, np.array([vy, r]), y_ref, u_prev=u_prev)

    def _step(self, state: EnvState, action: np.ndarray) -> StepResult:
        t = self.task
        beta_ref, r_ref, a_x = self.references(state, action)
        report = self.control(state, beta_ref, r_ref)
        u = report.u0
        delta, m_z = float(u[0]) * t.delta_max, float(u[1]) * t.mz_max
        x = np.concatenate([state.q, state.q_dot]).astype(float)
        limit = self.plant.traction_limit(float(x[0]))
        f_x = float(np.clip(self.params.m * a_x, -limit, limit))
        x_new = self.plant.step(x, delta, m_z, f_x)
        x_new[2] = wrap_angle(float(x_new[2]))
        ay = self.plant.lateral_acceleration(x_new, delta)
        nxt = self._make_state(x_new, prev_r=float(state.q_dot[2]), prev_action=action, u_prev=u, ay=ay,
                               t=state.t + 1)
        sig = self.signals(nxt)
        failed = abs(sig.e_lat) > t.lateral_limit or abs(sig.beta) > t.beta_limit
        finished = sig.progress >= self.road.length
        sig = self.signals(nxt, terminal=failed)
        report.y_exec = np.array([sig.beta, sig.r])
        reward = vehicle_base_reward(sig, report, REWARD_WEIGHTS, t.v_target, t.ref_exec_scale,
                                     t.state_dependent_bonus)
        info = {"mpc": report, "signals": sig, "failed": failed, "finished": finished,
                "inputs": (delta, m_z, f_x), "refs": (beta_ref, r_ref, a_x)}
        return StepResult(nxt, reward, failed or finished, info)
