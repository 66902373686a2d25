"""Theorem checks on exact tabular oracles and small simulations.

Each check returns a :class:`CheckResult`; :func:`run_all` runs the suite
at a chosen scale. The same functions back the ``verify`` command and the
acceptance tests, which call them with larger instance counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from hears.envs import PendulumSwingUp
from hears.envs.road import generate_road
from hears.envs.tires import VehicleParams
from hears.envs.vehicle import VehiclePlant
from hears.harness.config import ablation_grid, preset_config
from hears.learner.actor_critic import AcConfig, AcShaping, actor_critic_train
from hears.learner.mlp import MlpShape, init_params, mlp_backward, mlp_forward
from hears.learner.probe import alternating_policy, oscillation_probe
from hears.learner.tabular import TabularHyper, TabularShaping, tabular_q_learning
from hears.mdp import greedy_policy, random_mdp, value_iteration
from hears.shaping import (PotentialSpec, ShapingConfig, approx_potential_bound, approx_potential_gap_check,
                           clip_potential, embed_shaped_mdp, envelope_derivative_check, lambda_max,
                           regularized_mdp, shaped_reward)

# the operating point quoted alongside the lambda ceiling
OPERATING_POINT = {"r_max": 10.0, "gamma": 0.99, "phi_max": 1.0, "mean_action_energy": 100.0}
VI_TOL = 1e-12


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    data: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _instance(seed: int, rng: np.random.Generator):
    n_s = int(rng.integers(5, 13))
    n_a = int(rng.integers(2, 5))
    n_term = int(rng.integers(0, 2))
    mdp = random_mdp(seed, n_s, n_a, reward_scale=1.0, gamma=float(rng.uniform(0.8, 0.95)), n_terminal=n_term)
    energy = rng.uniform(0.0, 1.0, size=n_a)
    lam = float(rng.uniform(0.0, 0.5))
    return mdp, energy, lam


def _greedy_with_margin(q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Greedy actions and the gap to the runner-up action per state."""
    order = np.sort(q, axis=1)
    return np.argmax(q, axis=1), order[:, -1] - order[:, -2]


def check_policy_invariance(n_mdps: int = 200, n_potentials: int = 50, seed: int = 0) -> CheckResult:
    """Greedy policy of every shaped MDP equals that of the regularised MDP.

    States whose optimal action is tied (gap below 1e-9) are compared by
    membership in the tied set instead of by index.
    """
    rng = np.random.default_rng(seed)
    mismatches = compared = 0
    for k in range(n_mdps):
        mdp, energy, lam = _instance(seed * 100_003 + k, rng)
        base = value_iteration(regularized_mdp(mdp, lam, energy), tol=VI_TOL)
        live = ~mdp.terminal
        best = base.q.max(axis=1, keepdims=True)
        optimal_sets = base.q >= best - 1e-9
        for _ in range(n_potentials):
            phi = rng.uniform(-5.0, 5.0, size=mdp.n_states)
            shaped = value_iteration(embed_shaped_mdp(mdp, phi, lam, energy), tol=VI_TOL)
            pol = greedy_policy(shaped)
            ok = optimal_sets[np.arange(mdp.n_states), pol]
            mismatches += int(np.sum(~ok & live))
            compared += int(np.sum(live))
    return CheckResult("policy invariance", mismatches == 0,
                       f"{mismatches} mismatches over {compared} state comparisons "
                       f"({n_mdps} MDPs x {n_potentials} potentials)",
                       {"mismatches": mismatches, "compared": compared})


def check_value_shift(n_mdps: int = 200, n_potentials: int = 50, seed: int = 0, tol: float = 1e-8) -> CheckResult:
    """V*_shaped(s) = V*_lam(s) - Phi(s), with Phi = 0 on terminal states."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(n_mdps):
        mdp, energy, lam = _instance(seed * 100_003 + k, rng)
        v_lam = value_iteration(regularized_mdp(mdp, lam, energy), tol=VI_TOL).v
        for _ in range(n_potentials):
            phi = rng.uniform(-5.0, 5.0, size=mdp.n_states)
            phi[mdp.terminal] = 0.0
            v_sh = value_iteration(embed_shaped_mdp(mdp, phi, lam, energy), tol=VI_TOL).v
            worst = max(worst, float(np.max(np.abs(v_sh - (v_lam - phi)))))
    return CheckResult("value shift", worst <= tol, f"sup |V_shaped - (V_lam - Phi)| = {worst:.3e} (tol {tol:g})",
                       {"sup_error": worst})


def check_reward_bound(n_samples: int = 100_000, seed: int = 0) -> CheckResult:
    """Sampled shaped rewards stay inside R_max + 2 gamma Phi_max + lam max E.

    Potentials are energy potentials, nonpositive and clipped at -Phi_max.
    """
    rng = np.random.default_rng(seed)
    op = OPERATING_POINT
    lmax = lambda_max(**op)
    cfg = ShapingConfig(lam=lmax, gamma=op["gamma"], r_max=op["r_max"], phi_max=op["phi_max"],
                        mean_action_energy=op["mean_action_energy"], q_matrix=np.eye(2))
    a = rng.uniform(-1.0, 1.0, size=(n_samples, 2)) * math.sqrt(op["mean_action_energy"])
    energy = np.einsum("ni,ij,nj->n", a, cfg.q_matrix, a)
    r = rng.uniform(-op["r_max"], op["r_max"], size=n_samples)
    phi = clip_potential(-rng.exponential(2.0, size=n_samples), op["phi_max"])
    phi_next = clip_potential(-rng.exponential(2.0, size=n_samples), op["phi_max"])
    shaped = shaped_reward(r, phi, phi_next, energy, op["gamma"], cfg.lam)
    bound = cfg.reward_bound(float(energy.max()))
    worst = float(np.max(np.abs(shaped)))
    in_range = 0.050 <= lmax <= 0.051
    ok = worst <= bound and in_range
    return CheckResult("reward bound", ok,
                       f"lambda_max={lmax:.5f} at the operating point; max |R| = {worst:.4g} <= bound {bound:.4g} "
                       f"over {n_samples} samples", {"lambda_max": lmax, "max_abs": worst, "bound": bound})


def check_envelope(n_mdps: int = 50, seed: int = 0, rel_tol: float = 1e-6, delta: float = 1e-6) -> CheckResult:
    """dJ/dlam by finite difference matches -E[discounted E(a)] where the optimum is locally constant."""
    rng = np.random.default_rng(seed)
    worst, used, attempts = 0.0, 0, 0
    while used < n_mdps and attempts < 20 * n_mdps:
        attempts += 1
        mdp, energy, lam = _instance(seed * 7919 + attempts, rng)
        phi = rng.uniform(-2.0, 2.0, size=mdp.n_states)
        chk = envelope_derivative_check(mdp, phi, energy, lam, delta=delta)
        if not chk.policy_constant:
            continue
        used += 1
        denom = max(abs(chk.expected), 1e-12)
        worst = max(worst, abs(chk.finite_diff - chk.expected) / denom)
    ok = used == n_mdps and worst <= rel_tol
    return CheckResult("envelope derivative", ok, f"max relative error {worst:.3e} over {used} MDPs (tol {rel_tol:g})",
                       {"max_rel_error": worst, "n": used})


def check_approx_potential(seed: int = 0) -> CheckResult:
    bound = approx_potential_bound(0.2, 0.99, 0.01)
    mdp = random_mdp(seed, 8, 3, gamma=0.9, n_terminal=1)
    true_phi = -np.abs(np.random.default_rng(seed).normal(size=mdp.n_states))
    report = approx_potential_gap_check(mdp, true_phi, delta_bound=0.0, trials=3, seed=seed)
    noisy = approx_potential_gap_check(mdp, true_phi, delta_bound=0.2 * float(np.max(np.abs(true_phi))),
                                       trials=10, seed=seed)
    emitted = "0.495" in noisy.note and "<5%" in noisy.note
    ok = abs(bound - 0.495) <= 1e-3 and report.absolute_gap == 0.0 and emitted
    return CheckResult("approximate potential", ok,
                       f"bound(0.2, 0.99, 0.01) = {bound:.4f}; exact-potential gap = {report.absolute_gap:g}; "
                       f"noisy gap = {noisy.worst_relative_gap:.3g}; discrepancy note emitted: {emitted}",
                       {"bound": bound, "note": noisy.note})


def check_energy_conservation(steps: int = 10_000, dt: float = 0.01, tol: float = 1e-4) -> CheckResult:
    env = PendulumSwingUp(dt=dt, damping=0.0, max_steps=steps + 1)
    theta, omega = 1.0, 0.0
    model_e = lambda th, om: env.total_energy(_pend_state(th, om))  # noqa: E731
    e0 = model_e(theta, omega)
    worst = 0.0
    for _ in range(steps):
        theta, omega = env.integrate(theta, omega, 0.0)
        worst = max(worst, abs(model_e(theta, omega) - e0) / abs(e0))
    return CheckResult("energy conservation", worst <= tol,
                       f"max relative drift {worst:.3e} over {steps} steps at dt={dt}", {"drift": worst})


def _pend_state(theta: float, omega: float):
    from hears.envs.base import EnvState
    return EnvState(np.array([theta]), np.array([omega]), {}, 0)


def gradient_error(seed: int, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients of a random net."""
    rng = np.random.default_rng(seed)
    sizes = (int(rng.integers(1, 5)), int(rng.integers(2, 9)), int(rng.integers(2, 9)), int(rng.integers(1, 3)))
    shape = MlpShape(sizes)
    params = init_params(shape, rng, out_scale=1.0) + rng.normal(scale=0.1, size=shape.n_params)
    x = rng.normal(size=(4, sizes[0]))
    w = rng.normal(size=(4, sizes[-1]))

    def loss(p):
        out, _ = mlp_forward(p, shape, x)
        return float(np.sum(w * out))

    _, acts = mlp_forward(params, shape, x)
    grad, _ = mlp_backward(params, shape, acts, w)
    num = np.zeros_like(params)
    for i in range(params.size):
        e = np.zeros_like(params)
        e[i] = h
        num[i] = (loss(params + e) - loss(params - e)) / (2 * h)
    scale = np.maximum(np.abs(grad) + np.abs(num), 1e-6)
    return float(np.max(np.abs(grad - num) / scale))


def check_gradients(n_nets: int = 20, tol: float = 1e-4) -> CheckResult:
    worst = max(gradient_error(s) for s in range(n_nets))
    return CheckResult("gradient correctness", worst <= tol, f"max relative error {worst:.3e} over {n_nets} nets",
                       {"max_rel_error": worst})


def _traces_equal(a, b) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(a, b)) and len(a) == len(b)


def check_shaping_off_identity(seeds=(0, 1, 2), ac_episodes: int = 3) -> CheckResult:
    """(0, 0, 0) shaping reproduces the vanilla learners bit for bit."""
    from hears.envs import GridNav
    grid = GridNav(6)
    hyper = TabularHyper(alpha=0.5, epsilon=0.2, max_steps=200)
    tab_ok = True
    for s in seeds:
        van = tabular_q_learning(grid, None, 20, s, hyper)
        off = tabular_q_learning(grid, TabularShaping(np.zeros(grid.n_states), 0.0, np.ones(4)), 20, s, hyper)
        tab_ok &= np.array_equal(van.extras["q"], off.extras["q"]) and van.returns == off.returns
    env = PendulumSwingUp(max_steps=40)
    cfg = AcConfig(episodes=ac_episodes, warmup=32, batch_size=16, record_params=True)
    ac_ok = True
    for s in seeds:
        van = actor_critic_train(env, None, cfg, s)
        off = actor_critic_train(env, AcShaping(PotentialSpec(0.0, 0.0, env.task_potential, env.energy_potential),
                                                0.0), cfg, s)
        ac_ok &= _traces_equal(van.extras["param_trajectory"], off.extras["param_trajectory"])
    return CheckResult("shaping-off identity", tab_ok and ac_ok,
                       f"tabular identical: {tab_ok}; actor-critic identical: {ac_ok} ({len(seeds)} seeds each)")


def check_alternating_probe(steps: int = 200, ratio: float = 100.0) -> CheckResult:
    from hears.envs import Lander2D
    env = Lander2D(max_steps=steps + 1)
    # side-thruster chatter with the main engine off: large action variation, little net energy
    start = env.reset(np.random.default_rng(0))
    res = oscillation_probe(env, alternating_policy(np.array([0.0, 1.0])), 2 * (steps // 2), state=start)
    ok = res.action_total_variation >= ratio * res.net_energy_change
    return CheckResult("alternating-policy chatter", ok,
                       f"action TV {res.action_total_variation:.3g} vs net |dE| {res.net_energy_change:.3g} "
                       f"(ratio {res.chatter_ratio:.3g})", {"ratio": res.chatter_ratio})


# --- discretisation residual ------------------------------------------------------

def pendulum_residual(dt: float, horizon: float = 2.0, torque: float = 0.5) -> float:
    """Max |dE - Edot dt| along a torque-driven pendulum trajectory."""
    env = PendulumSwingUp(dt=dt, max_steps=10**6)
    theta, omega = 0.5, 0.0
    worst = 0.0
    tau = torque * env.max_torque
    for _ in range(int(round(horizon / dt))):
        state = _pend_state(theta, omega)
        e0 = env.total_energy(state)
        edot = env.energy_rate(state, np.array([torque]))
        theta, omega = env.integrate(theta, omega, tau)
        e1 = env.total_energy(_pend_state(theta, omega))
        worst = max(worst, abs((e1 - e0) - edot * dt))
    return worst


def vehicle_residual(dt: float, horizon: float = 2.0, delta: float = 0.03, m_z: float = 200.0,
                     f_x: float = 500.0) -> float:
    """Same residual for the vehicle's kinetic energy under constant inputs."""
    params = VehicleParams()
    road = generate_road(2024, 300.0)
    plant = VehiclePlant(params, road, dt)
    x = np.array([0.0, road.centerline(0.0), road.centerline_heading(0.0), 12.0, 0.0, 0.0])

    def kinetic(v):
        return 0.5 * params.m * (v[3] ** 2 + v[4] ** 2) + 0.5 * params.i_z * v[5] ** 2

    worst = 0.0
    for _ in range(int(round(horizon / dt))):
        d = plant.derivative(x, delta, m_z, f_x)
        edot = params.m * (x[3] * d[3] + x[4] * d[4]) + params.i_z * x[5] * d[5]
        nxt = plant.step(x, delta, m_z, f_x)
        worst = max(worst, abs(kinetic(nxt) - kinetic(x) - edot * dt))
        x = nxt
    return worst


def check_lyapunov_residual(dt: float = 0.02, factor: float = 3.0) -> CheckResult:
    p = pendulum_residual(dt) / pendulum_residual(dt / 2)
    v = vehicle_residual(dt) / vehicle_residual(dt / 2)
    ok = p >= factor and v >= factor
    return CheckResult("discretisation residual", ok,
                       f"residual ratio on halving dt: pendulum {p:.2f}, vehicle {v:.2f} (need >= {factor:g})",
                       {"pendulum": p, "vehicle": v})


def check_ablation_grid() -> CheckResult:
    grid = ablation_grid(preset_config("ant"))
    names = [c.variant for c in grid]
    triples = [c.coefficients for c in grid]
    without_task = dict(zip(names, triples))["Without Task"]
    ok = (len(grid) == 8 and len(set(triples)) == 8 and triples[0] == (0.0, 0.0, 0.0)
          and without_task == (0.0, 3e-2, 1e-2) and triples[-1] == preset_config("ant").coefficients)
    return CheckResult("ablation grid", ok, f"{len(grid)} variants, Without Task = {without_task}",
                       {"variants": dict(zip(names, triples))})


def run_all(scale: str = "quick") -> list[CheckResult]:
    """Run the suite; ``quick`` shrinks instance counts, ``full`` uses the acceptance sizes."""
    full = scale == "full"
    n_mdp, n_phi = (200, 50) if full else (20, 5)
    return [
        check_policy_invariance(n_mdp, n_phi),
        check_value_shift(n_mdp, n_phi),
        check_reward_bound(100_000 if full else 10_000),
        check_envelope(50 if full else 10),
        check_approx_potential(),
        check_energy_conservation(10_000 if full else 2_000),
        check_gradients(20 if full else 5),
        check_shaping_off_identity(),
        check_alternating_probe(),
        check_lyapunov_residual(),
        check_ablation_grid(),
    ]
