"""Off-policy actor-critic consuming shaped rewards.

Per environment step:

1. act with ``a = clip(mu_phi(s) + sigma * noise)``;
2. observe ``(r, s')`` and only then evaluate ``Phi(s')`` (zero if terminal),
   ``E(a)`` and the shaped reward ``r + gamma Phi(s') - Phi(s) - lam E(a)``;
3. store the transition with its cached potentials and action energy;
4. update the critic towards ``y = R + gamma (1 - done) Q_target(s', mu_target(s'))``;
5. update the actor from critic advantages: for antithetic probes
   ``a_pm = mu +- sigma_g eps`` the advantage ``(Q(s, a_+) - Q(s, a_-)) / 2``
   weights the Gaussian score ``eps / sigma_g``;
6. Polyak-average both target networks.

The base reward reaches learning only through the stored shaped reward,
and the actor sees only the critic.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from hears.learner.mlp import (MlpShape, clip_by_norm, init_params, make_optimizer, mlp_backward, mlp_forward,
                               polyak_update)
from hears.learner.replay import ReplayBuffer
from hears.records import RunRecord
from hears.shaping import PotentialSpec, shaped_reward


@dataclass(frozen=True)
class AcConfig:
    episodes: int = 100
    max_steps: int | None = None
    hidden: tuple[int, ...] = (32, 32)
    gamma: float = 0.99
    tau: float = 0.005
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    optimizer: str = "adam"
    grad_clip: float = 1.0
    batch_size: int = 64
    buffer_size: int = 100_000
    warmup: int = 500
    update_every: int = 1
    sigma_start: float = 0.3
    sigma_end: float = 0.05
    sigma_grad: float = 0.1
    antithetic: int = 4
    eval_every: int = 0
    eval_episodes: int = 1
    record_params: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class AcShaping:
    potential: PotentialSpec | None = None
    lam: float = 0.0

    @property
    def is_zero(self) -> bool:
        return (self.potential is None or self.potential.is_zero) and self.lam == 0.0


class AcNets:
    """Actor, critic and their target copies as flat parameter vectors."""

    def __init__(self, obs_dim: int, action_dim: int, hidden, rng: np.random.Generator, tau: float):
        self.actor_shape = MlpShape((obs_dim, *hidden, action_dim))
        self.critic_shape = MlpShape((obs_dim + action_dim, *hidden, 1))
        self.actor = init_params(self.actor_shape, rng)
        self.critic = init_params(self.critic_shape, rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.tau = tau

    def mean_action(self, obs, params: np.ndarray | None = None) -> np.ndarray:
        z, _ = mlp_forward(self.actor if params is None else params, self.actor_shape, obs)
        return np.tanh(z)

    def q_value(self, obs, actions, params: np.ndarray | None = None) -> np.ndarray:
        x = np.concatenate([np.atleast_2d(obs), np.atleast_2d(actions)], axis=1)
        q, _ = mlp_forward(self.critic if params is None else params, self.critic_shape, x)
        return q[:, 0]

    def update_targets(self) -> None:
        polyak_update(self.critic_target, self.critic, self.tau)
        polyak_update(self.actor_target, self.actor, self.tau)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {"actor": self.actor, "critic": self.critic,
                "actor_target": self.actor_target, "critic_target": self.critic_target}


def critic_loss_and_grad(nets: AcNets, batch: dict, gamma: float) -> tuple[float, np.ndarray]:
    """0.5 * mean (Q(s, a) - y)^2 and its gradient w.r.t. the critic parameters."""
    next_a = nets.mean_action(batch["next_obs"], nets.actor_target)
    q_next = nets.q_value(batch["next_obs"], next_a, nets.critic_target)
    y = batch["rewards"] + gamma * (1.0 - batch["done"]) * q_next
    x = np.concatenate([batch["obs"], batch["actions"]], axis=1)
    q, acts = mlp_forward(nets.critic, nets.critic_shape, x)
    err = q[:, 0] - y
    n = err.shape[0]
    grad, _ = mlp_backward(nets.critic, nets.critic_shape, acts, (err / n)[:, None])
    return float(0.5 * np.mean(err**2)), grad


def actor_grad(nets: AcNets, obs: np.ndarray, eps: np.ndarray, sigma: float,
               low: np.ndarray, high: np.ndarray) -> np.ndarray:
    """Descent direction for the actor from antithetic critic advantages.

    ``eps`` has shape (K, batch, action_dim).
    """
    z, acts = mlp_forward(nets.actor, nets.actor_shape, obs)
    mu = np.tanh(z)
    k, n, d = eps.shape
    obs_rep = np.broadcast_to(obs, (k, n, obs.shape[1])).reshape(k * n, -1)
    plus = np.clip(mu[None] + sigma * eps, low, high).reshape(k * n, d)
    minus = np.clip(mu[None] - sigma * eps, low, high).reshape(k * n, d)
    adv = 0.5 * (nets.q_value(obs_rep, plus) - nets.q_value(obs_rep, minus)).reshape(k, n, 1)
    score_weighted = np.mean(adv * eps / sigma, axis=0)  # (n, d): ascent direction for mu
    grad_z = -(score_weighted / n) * (1.0 - mu**2)
    grad, _ = mlp_backward(nets.actor, nets.actor_shape, acts, grad_z)
    return grad


def _check_finite(nets: AcNets, batch: dict) -> None:
    for name, p in nets.state_dict().items():
        if not np.all(np.isfinite(p)):
            raise FloatingPointError(f"non-finite {name} parameters; last batch rewards={batch['rewards']}, "
                                     f"obs[0]={batch['obs'][0]}, actions[0]={batch['actions'][0]}")


def _sigma(cfg: AcConfig, episode: int) -> float:
    if cfg.episodes <= 1:
        return cfg.sigma_start
    frac = min(episode / (cfg.episodes - 1), 1.0)
    return cfg.sigma_start + frac * (cfg.sigma_end - cfg.sigma_start)


def evaluate_policy_rollout(env, nets: AcNets, rng: np.random.Generator, max_steps: int) -> dict:
    """Deterministic rollout of the mean action; returns base return, TV and trace."""
    state = env.reset(rng)
    ret = tv = 0.0
    prev = None
    steps = 0
    infos = []
    for steps in range(1, max_steps + 1):
        a = nets.mean_action(env.observe(state))[0]
        res = env.step(state, a)
        if prev is not None:
            tv += float(np.linalg.norm(a - prev))
        prev = a
        ret += res.reward
        infos.append(res.info)
        state = res.state
        if res.terminal:
            break
    return {"return": ret, "action_tv": tv, "steps": steps, "infos": infos, "final_state": state}


def actor_critic_train(env, shaping: AcShaping | None, config: AcConfig, seed: int,
                       eval_fn=None) -> RunRecord:
    """Train on ``env`` and return the per-episode record.

    ``eval_fn(env, nets, episode)`` (optional) is called every
    ``config.eval_every`` episodes and its float result stored in
    ``record.evaluations``.
    """
    shaping = shaping or AcShaping()
    cfg = config
    env_rng = np.random.default_rng([seed, 0])
    act_rng = np.random.default_rng([seed, 1])
    init_rng = np.random.default_rng([seed, 2])
    obs_dim, act_dim = env.obs_dim, env.action_dim
    nets = AcNets(obs_dim, act_dim, cfg.hidden, init_rng, cfg.tau)
    opt_actor = make_optimizer(cfg.optimizer, nets.actor.size, cfg.lr_actor)
    opt_critic = make_optimizer(cfg.optimizer, nets.critic.size, cfg.lr_critic)
    buffer = ReplayBuffer(cfg.buffer_size, obs_dim, act_dim, seed=seed)
    low, high = env.action_low, env.action_high
    gamma, lam = cfg.gamma, float(shaping.lam)
    potential = shaping.potential
    max_steps = cfg.max_steps or env.max_steps
    record = RunRecord(seed=seed)
    trajectory = []
    start = time.perf_counter()
    total = 0
    batch = None

    def phi(state, episode) -> float:
        return 0.0 if potential is None else potential(state, episode)

    for ep in range(cfg.episodes):
        sigma = _sigma(cfg, ep)
        state = env.reset(env_rng)
        obs = env.observe(state)
        phi_s = phi(state, ep)
        ret = shaped_ret = tv = energy_sum = 0.0
        prev_a = None
        steps = 0
        for steps in range(1, max_steps + 1):
            noise = act_rng.standard_normal(act_dim)
            a = np.clip(nets.mean_action(obs)[0] + sigma * noise, low, high)
            res = env.step(state, a)
            e_a = env.action_energy(a, state)
            phi_next = 0.0 if res.terminal else phi(res.state, ep)
            r_h = shaped_reward(res.reward, phi_s, phi_next, e_a, gamma, lam)
            next_obs = env.observe(res.state)
            buffer.add(obs, a, res.reward, r_h, next_obs, res.terminal, (phi_s, phi_next), e_a)
            total += 1

            if len(buffer) >= max(cfg.warmup, cfg.batch_size) and total % cfg.update_every == 0:
                batch = buffer.sample(cfg.batch_size)
                _, g_c = critic_loss_and_grad(nets, batch, gamma)
                opt_critic.step(nets.critic, clip_by_norm(g_c, cfg.grad_clip))
                eps = act_rng.standard_normal((cfg.antithetic, cfg.batch_size, act_dim))
                g_a = actor_grad(nets, batch["obs"], eps, cfg.sigma_grad, low, high)
                opt_actor.step(nets.actor, clip_by_norm(g_a, cfg.grad_clip))
                nets.update_targets()
                _check_finite(nets, batch)

            if prev_a is not None:
                tv += float(np.linalg.norm(a - prev_a))
            prev_a = a
            ret += res.reward
            shaped_ret += r_h
            energy_sum += env.total_energy(res.state) if hasattr(env, "energy") else 0.0
            state, obs, phi_s = res.state, next_obs, phi_next
            if res.terminal:
                break
        record.returns.append(ret)
        record.shaped_returns.append(shaped_ret)
        record.lengths.append(steps)
        record.action_tv.append(tv)
        record.energy_mean.append(energy_sum / steps)
        if cfg.record_params:
            trajectory.append(np.concatenate([nets.actor, nets.critic]))
        if eval_fn is not None and cfg.eval_every and (ep + 1) % cfg.eval_every == 0:
            record.evaluations.append(float(eval_fn(env, nets, ep)))
    record.wall_clock = time.perf_counter() - start
    record.extras.update({"nets": nets, "total_steps": total, "mean_action_energy": buffer.mean_action_energy()})
    if cfg.record_params:
        record.extras["param_trajectory"] = trajectory
    return record
