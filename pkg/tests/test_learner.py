import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hears.envs import GridNav, HopperLite, Lander2D, PendulumSwingUp
from hears.harness.verify import gradient_error
from hears.learner import (AcConfig, AcShaping, MlpShape, ReplayBuffer, TabularHyper, TabularShaping, Transition,
                           actor_critic_train, alternating_policy, episodes_to_fraction, init_params,
                           mlp_backward, mlp_forward, oscillation_probe, tabular_q_learning)
from hears.learner.actor_critic import AcNets, critic_loss_and_grad
from hears.learner.checkpoint import load_checkpoint, save_checkpoint
from hears.learner.mlp import Adam, Sgd, clip_by_norm, make_optimizer, polyak_update
from hears.mdp import value_iteration
from hears.shaping import PotentialSpec, embed_shaped_mdp


class TestMlp:
    def test_zero_network(self):
        shape = MlpShape((3, 5, 2))
        out, _ = mlp_forward(np.zeros(shape.n_params), shape, np.ones((4, 3)))
        np.testing.assert_array_equal(out, 0.0)

    def test_param_count(self):
        assert MlpShape((3, 4, 2)).n_params == 3 * 4 + 4 + 4 * 2 + 2

    def test_linear_layer_gradient(self):
        shape = MlpShape((3, 2))
        rng = np.random.default_rng(0)
        params = rng.normal(size=shape.n_params)
        x = rng.normal(size=(5, 3))
        g_out = rng.normal(size=(5, 2))
        _, acts = mlp_forward(params, shape, x)
        grad, g_in = mlp_backward(params, shape, acts, g_out)
        W, _ = shape.unpack(params)[0]
        gW, gb = shape.unpack(grad)[0]
        np.testing.assert_allclose(gW, x.T @ g_out)
        np.testing.assert_allclose(gb, g_out.sum(axis=0))
        np.testing.assert_allclose(g_in, g_out @ W.T)

    def test_two_sixteen_one_finite_difference(self):
        shape = MlpShape((2, 16, 1))
        rng = np.random.default_rng(3)
        params = init_params(shape, rng, out_scale=1.0)
        x = rng.normal(size=(6, 2))
        _, acts = mlp_forward(params, shape, x)
        grad, _ = mlp_backward(params, shape, acts, np.ones((6, 1)))
        h = 1e-5
        num = np.array([(mlp_forward(params + h * e, shape, x)[0].sum() - mlp_forward(params - h * e, shape, x)[0].sum())
                        / (2 * h) for e in np.eye(shape.n_params)])
        rel = np.abs(grad - num) / np.maximum(np.abs(grad) + np.abs(num), 1e-6)
        assert rel.max() <= 1e-5

    def test_ten_parameter_critic(self):
        shape = MlpShape((2, 2, 1))
        assert shape.n_params == 9
        shape = MlpShape((3, 2, 1))
        assert shape.n_params == 11

    @given(st.integers(0, 1000))
    def test_random_nets(self, seed):
        assert gradient_error(seed) <= 1e-4

    def test_input_width_checked(self):
        with pytest.raises(ValueError):
            mlp_forward(np.zeros(MlpShape((3, 1)).n_params), MlpShape((3, 1)), np.ones((1, 2)))

    def test_clip_and_polyak(self):
        np.testing.assert_allclose(clip_by_norm(np.array([3.0, 4.0]), 1.0), [0.6, 0.8])
        t = np.zeros(2)
        polyak_update(t, np.ones(2), 0.25)
        np.testing.assert_allclose(t, 0.25)

    def test_optimizers(self):
        p = np.array([1.0])
        Sgd(1, 0.1).step(p, np.array([2.0]))
        assert p[0] == pytest.approx(0.8)
        q = np.array([1.0])
        Adam(1, 0.01).step(q, np.array([5.0]))
        assert q[0] == pytest.approx(0.99)
        with pytest.raises(ValueError):
            make_optimizer("rmsprop", 1, 0.1)


class TestReplay:
    def test_transition_shaped(self):
        t = Transition(None, np.zeros(1), 1.0, None, False, (2.0, 3.0), 4.0)
        assert t.shaped(0.99, 0.01) == pytest.approx(1.93)

    def test_ring_overwrite(self):
        buf = ReplayBuffer(3, 1, 1, seed=0)
        for i in range(5):
            buf.add([i], [0.0], float(i), float(i), [i], False, (0.0, 0.0), 1.0)
        assert len(buf) == 3
        assert sorted(buf.base_rewards) == [2.0, 3.0, 4.0]

    def test_recompute_matches_cache(self):
        buf = ReplayBuffer(10, 1, 1, seed=0)
        rng = np.random.default_rng(0)
        for _ in range(10):
            r, p0, p1, e = rng.normal(), rng.normal(), rng.normal(), rng.uniform()
            buf.add([0.0], [0.0], r, r + 0.9 * p1 - p0 - 0.1 * e, [0.0], False, (p0, p1), e)
        np.testing.assert_allclose(buf.recompute_shaped(0.9, 0.1), buf.shaped_rewards)

    def test_sampling_deterministic(self):
        a, b = ReplayBuffer(5, 1, 1, seed=4), ReplayBuffer(5, 1, 1, seed=4)
        for buf in (a, b):
            for i in range(5):
                buf.add([i], [0.0], 0.0, 0.0, [i], False, (0.0, 0.0), 0.0)
        np.testing.assert_array_equal(a.sample(8)["index"], b.sample(8)["index"])

    def test_empty_sample(self):
        with pytest.raises(ValueError):
            ReplayBuffer(2, 1, 1, 0).sample(1)


class TestProbe:
    def test_constant_policy_no_variation(self):
        env = PendulumSwingUp()
        res = oscillation_probe(env, lambda s, t: np.array([0.3]), 50)
        assert res.action_total_variation == 0.0

    def test_alternating_hopper(self):
        env = HopperLite()
        res = oscillation_probe(env, alternating_policy(np.array([0.0, 0.0, 1.0])), 100, state=env.standing_state())
        assert res.action_total_variation == pytest.approx(99 * 2.0)
        assert res.action_total_variation >= 100 * res.net_energy_change

    def test_alternating_lander(self):
        env = Lander2D(max_steps=500)
        res = oscillation_probe(env, alternating_policy(np.array([0.0, 1.0])), 200)
        assert res.chatter_ratio >= 100


class TestTabular:
    def test_shaping_off_identity(self):
        g = GridNav(5)
        hyper = TabularHyper(alpha=0.5, epsilon=0.3, max_steps=100)
        a = tabular_q_learning(g, None, 15, 3, hyper)
        b = tabular_q_learning(g, TabularShaping(np.zeros(g.n_states), 0.0, np.ones(4)), 15, 3, hyper)
        np.testing.assert_array_equal(a.extras["q"], b.extras["q"])
        assert a.returns == b.returns and a.lengths == b.lengths

    def test_converges_to_shaped_optimum(self):
        g = GridNav(4)
        phi = 0.1 * g.potential_table()
        energy = np.array([0.0, 0.1, 0.2, 0.3])
        hyper = TabularHyper(alpha=1.0, epsilon=1.0, gamma=0.9, max_steps=200)
        rec = tabular_q_learning(g, TabularShaping(phi, 0.05, energy), 400, 0, hyper)
        oracle = value_iteration(embed_shaped_mdp(g.to_mdp(0.9), phi, 0.05, energy), tol=1e-12)
        live = np.arange(g.n_states) != g.goal_index
        np.testing.assert_allclose(rec.extras["q"][live], oracle.q[live], atol=1e-6)
        np.testing.assert_array_equal(rec.extras["policy"][live], np.argmax(oracle.q, axis=1)[live])

    def test_shaping_speeds_up_small_grid(self):
        g = GridNav(10)
        hyper = TabularHyper(alpha=1.0, epsilon=0.1, max_steps=2000)
        opt = g.optimal_start_value(hyper.gamma)

        def run(phi, seed):
            rec = tabular_q_learning(g, TabularShaping(phi), 500, seed, hyper,
                                     eval_fn=lambda p: g.greedy_rollout_value(p, hyper.gamma),
                                     stop_fn=lambda v: v >= 0.95 * opt)
            return episodes_to_fraction(rec.evaluations, opt) or 500

        vanilla = np.median([run(None, s) for s in range(7)])
        shaped = np.median([run(0.5 * g.potential_table(), s) for s in range(7)])
        assert shaped < vanilla

    def test_episodes_to_fraction(self):
        assert episodes_to_fraction([0.1, 0.5, 0.96], 1.0) == 3
        assert episodes_to_fraction([0.1], 1.0) is None


class TestActorCritic:
    def test_shaping_off_identity(self):
        env = PendulumSwingUp(max_steps=30)
        cfg = AcConfig(episodes=3, warmup=20, batch_size=8, record_params=True)
        van = actor_critic_train(env, None, cfg, 1)
        off = actor_critic_train(env, AcShaping(PotentialSpec(0, 0, env.task_potential, env.energy_potential)),
                                 cfg, 1)
        for x, y in zip(van.extras["param_trajectory"], off.extras["param_trajectory"]):
            np.testing.assert_array_equal(x, y)
        assert van.returns == off.returns

    def test_shaped_returns_differ_from_base(self):
        env = PendulumSwingUp(max_steps=20)
        cfg = AcConfig(episodes=2, warmup=10, batch_size=8)
        rec = actor_critic_train(env, AcShaping(PotentialSpec(1.0, 0.5, env.task_potential, env.energy_potential),
                                                0.1), cfg, 0)
        assert rec.returns != rec.shaped_returns
        assert len(rec.returns) == 2 and all(n == 20 for n in rec.lengths)

    def test_critic_gradient_finite_difference(self):
        rng = np.random.default_rng(0)
        nets = AcNets(2, 1, (4,), rng, 0.01)
        batch = {"obs": rng.normal(size=(5, 2)), "actions": rng.uniform(-1, 1, (5, 1)),
                 "rewards": rng.normal(size=5), "next_obs": rng.normal(size=(5, 2)), "done": np.zeros(5)}
        _, grad = critic_loss_and_grad(nets, batch, 0.9)
        h = 1e-6
        base = nets.critic.copy()
        num = np.zeros_like(base)
        for i in range(base.size):
            nets.critic = base.copy()
            nets.critic[i] += h
            lp, _ = critic_loss_and_grad(nets, batch, 0.9)
            nets.critic = base.copy()
            nets.critic[i] -= h
            lm, _ = critic_loss_and_grad(nets, batch, 0.9)
            num[i] = (lp - lm) / (2 * h)
        nets.critic = base
        np.testing.assert_allclose(grad, num, rtol=1e-4, atol=1e-9)

    def test_learns_contextual_bandit(self):
        """One-step task with reward -(a - 0.5 s)^2: the mean action should track 0.5 s."""
        from hears.envs.base import Env, EnvState, StepResult

        class Bandit(Env):
            name = "bandit"
            max_steps = 1
            action_low = -np.ones(1)
            action_high = np.ones(1)

            def reset(self, rng):
                return EnvState(np.array([rng.choice([-1.0, 1.0])]), np.zeros(1), {}, 0)

            def _step(self, state, action):
                r = -float((action[0] - 0.5 * state.q[0]) ** 2)
                return StepResult(EnvState(state.q, state.q_dot, {}, 1), r, True, {})

            def total_energy(self, state):
                return 0.0

        env = Bandit()
        rec = actor_critic_train(env, None, AcConfig(episodes=3000, warmup=64, batch_size=32, lr_critic=3e-3), 0)
        nets = rec.extras["nets"]
        np.testing.assert_allclose(nets.mean_action(np.array([[1.0, 0.0], [-1.0, 0.0]]))[:, 0], [0.5, -0.5],
                                   atol=0.05)


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        arrays = {"a": np.arange(6.0).reshape(2, 3), "b": np.array([1.5])}
        save_checkpoint(tmp_path / "ck", arrays, {"seed": 3})
        back, meta = load_checkpoint(tmp_path / "ck")
        np.testing.assert_array_equal(back["a"], arrays["a"])
        assert meta["seed"] == 3 and meta["dtype"] == "float64-le"

    def test_truncated_file(self, tmp_path):
        save_checkpoint(tmp_path / "ck", {"a": np.ones(4)})
        np.ones(2).astype("<f8").tofile(tmp_path / "ck.bin")
        with pytest.raises(ValueError):
            load_checkpoint(tmp_path / "ck")
