import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hears.mdp import evaluate_policy, greedy_policy, random_mdp, value_iteration
from hears.shaping import (PotentialSpec, RunningMean, ShapingConfig, acceleration_diagnostic, action_energy,
                           approx_potential_bound, approx_potential_gap_check, clip_potential,
                           discounted_shaping_sum, embed_shaped_mdp, envelope_derivative_check, lambda_max,
                           make_schedule, regularized_mdp, schedule_weights, shaped_reward,
                           shaped_reward_bound_check)

finite = st.floats(-1e3, 1e3, allow_nan=False)


class TestActionEnergy:
    def test_zero(self):
        assert action_energy([0.0, 0.0]) == 0.0

    def test_identity_weight(self):
        assert action_energy([1.0, 2.0], np.eye(2)) == 5.0

    @given(st.lists(finite, min_size=1, max_size=4))
    def test_symmetric(self, a):
        a = np.array(a)
        assert action_energy(a) == action_energy(-a)

    def test_weighted(self):
        assert action_energy([1.0, 1.0], np.diag([2.0, 3.0])) == 5.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            action_energy([1.0, 2.0], np.eye(3))


class TestShapedReward:
    def test_identity(self):
        assert shaped_reward(0.7, 0.0, 0.0, 3.0, 0.99, 0.0) == 0.7

    def test_hand_value(self):
        assert shaped_reward(1.0, 2.0, 3.0, 4.0, 0.99, 0.01) == pytest.approx(1.93, abs=1e-12)

    @given(finite, finite, st.floats(0, 1, exclude_max=True), st.floats(0, 1), st.floats(0, 10))
    def test_constant_potential(self, r, c, gamma, lam, energy):
        got = shaped_reward(r, c, c, energy, gamma, lam)
        assert got == pytest.approx(r + (gamma - 1.0) * c - lam * energy, abs=1e-9)

    def test_array_broadcast(self):
        out = shaped_reward(np.ones(3), np.zeros(3), np.ones(3), np.zeros(3), 0.5, 0.0)
        np.testing.assert_allclose(out, 1.5)


class TestPotentialSpec:
    def test_dual_combination(self):
        spec = PotentialSpec(2.0, 3.0, lambda s: s, lambda s: -s)
        assert spec(1.5) == pytest.approx(2.0 * 1.5 - 3.0 * 1.5)

    def test_clipped(self):
        spec = PotentialSpec(1.0, 0.0, lambda s: s, phi_max=1.0)
        assert spec(5.0) == 1.0 and spec(-5.0) == -1.0

    def test_schedule_overrides_weights(self):
        spec = PotentialSpec(0.0, 0.0, lambda s: 1.0, lambda s: 1.0, schedule=lambda ep: (ep, 1.0))
        assert spec(None, episode=3) == 4.0
        assert spec(None) == 0.0

    def test_non_finite_raises(self):
        spec = PotentialSpec(1.0, 0.0, lambda s: math.inf)
        with pytest.raises(FloatingPointError):
            spec(0)

    def test_is_zero(self):
        assert PotentialSpec().is_zero
        assert not PotentialSpec(alpha_task=0.1).is_zero


class TestLambdaMax:
    def test_operating_point(self):
        assert lambda_max(10.0, 0.99, 1.0, 100.0) == pytest.approx(10.0 / 198.0)
        assert 0.050 <= lambda_max(10.0, 0.99, 1.0, 100.0) <= 0.051

    @given(st.floats(0.1, 100), st.floats(0.1, 0.999), st.floats(0.1, 10), st.floats(0.1, 100))
    def test_homogeneity(self, r, g, phi, e):
        assert lambda_max(r, g, 2 * phi, e) == pytest.approx(lambda_max(r, g, phi, e) / 2)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            lambda_max(10.0, 0.99, 0.0, 100.0)

    def test_config_rejects_non_psd(self):
        with pytest.raises(ValueError, match="semidefinite"):
            ShapingConfig(q_matrix=np.diag([1.0, -1.0]))

    def test_running_mean(self):
        m = RunningMean()
        m.update([1.0, 2.0])
        assert m.update(6.0) == 3.0


class TestBoundCheck:
    def test_empty(self):
        rep = shaped_reward_bound_check(ShapingConfig(), [])
        assert rep.n_checked == 0 and rep.held

    def test_inside_band(self):
        rep = shaped_reward_bound_check(ShapingConfig(r_max=1.0), [-3.0, 0.0, 2.9])
        assert rep.held and rep.bound == 3.0

    def test_flags_outliers(self):
        rep = shaped_reward_bound_check(ShapingConfig(r_max=1.0), [0.0, 3.5, -4.0])
        assert rep.flagged == [1, 2]

    def test_vehicle_lambda_below_ceiling(self):
        cfg = ShapingConfig(lam=0.01, r_max=10.0, gamma=0.99, phi_max=1.0, mean_action_energy=100.0)
        assert cfg.lam < cfg.lambda_max()
        assert shaped_reward_bound_check(cfg, [0.0]).held

    def test_rejects_lambda_above_ceiling(self):
        cfg = ShapingConfig(lam=0.1, r_max=10.0, gamma=0.99, phi_max=1.0, mean_action_energy=100.0)
        with pytest.raises(ValueError, match="lambda_max"):
            shaped_reward_bound_check(cfg, [0.0])

    def test_tabular_run_inside_bound(self):
        """Shaped rewards of random MDPs with clipped potentials never leave the band."""
        rng = np.random.default_rng(5)
        r_max, gamma, phi_max, e_mean = 10.0, 0.99, 1.0, 100.0
        lam = lambda_max(r_max, gamma, phi_max, e_mean)
        cfg = ShapingConfig(lam=lam, gamma=gamma, r_max=r_max, phi_max=phi_max, mean_action_energy=e_mean)
        rewards = []
        while sum(len(r) for r in rewards) < 100_000:
            m = random_mdp(int(rng.integers(1 << 30)), 8, 3, reward_scale=r_max, gamma=gamma)
            energy = rng.uniform(0, e_mean, size=3)
            phi = clip_potential(rng.normal(size=8), phi_max)
            rewards.append(embed_shaped_mdp(m, phi, lam, energy).reward.ravel())
        rep = shaped_reward_bound_check(cfg, np.concatenate(rewards))
        assert rep.held, rep.max_abs


class TestEmbedding:
    def test_identity(self):
        m = random_mdp(2, 5, 2)
        out = embed_shaped_mdp(m, 0.0, 0.0)
        np.testing.assert_array_equal(out.reward, m.reward)

    @pytest.mark.parametrize("seed", range(100))
    def test_shaping_alone_preserves_policy(self, seed):
        m = random_mdp(seed, 6, 3, n_terminal=seed % 2)
        phi = np.random.default_rng(seed).uniform(-3, 3, size=6)
        base = value_iteration(m, tol=1e-12)
        shaped = greedy_policy(value_iteration(embed_shaped_mdp(m, phi, 0.0), tol=1e-12))
        best = base.q.max(axis=1)
        assert np.all(base.q[np.arange(6), shaped] >= best - 1e-9)

    @pytest.mark.parametrize("seed", range(100))
    def test_shaping_preserves_regularised_policy(self, seed):
        rng = np.random.default_rng(seed)
        m = random_mdp(seed, 6, 3)
        energy, lam = rng.uniform(0, 1, 3), float(rng.uniform(0, 0.5))
        phi = rng.uniform(-3, 3, size=6)
        base = value_iteration(regularized_mdp(m, lam, energy), tol=1e-12)
        shaped = greedy_policy(value_iteration(embed_shaped_mdp(m, phi, lam, energy), tol=1e-12))
        assert np.all(base.q[np.arange(6), shaped] >= base.q.max(axis=1) - 1e-9)

    def test_terminal_untouched(self):
        m = random_mdp(4, 5, 2, n_terminal=1)
        out = embed_shaped_mdp(m, np.arange(5.0), 0.3, np.ones(2))
        assert np.all(out.reward[4] == 0.0)

    def test_rejects_negative_energy(self):
        with pytest.raises(ValueError):
            embed_shaped_mdp(random_mdp(0, 3, 2), 0.0, 0.1, np.array([1.0, -1.0]))

    @given(st.lists(st.floats(-10, 10), min_size=2, max_size=30), st.floats(0.5, 0.999))
    def test_telescoping(self, phis, gamma):
        direct, closed = discounted_shaping_sum(phis, gamma)
        assert direct == pytest.approx(closed, abs=1e-9)


class TestSchedule:
    def test_start_ratio(self):
        at, ae = schedule_weights(0, "exponential", 100.0, 1.0, 50, 0.01)
        assert at / ae == 100.0

    @pytest.mark.parametrize("kind", ["linear", "exponential"])
    def test_end_ratio(self, kind):
        for ep in (50, 51, 500):
            at, ae = schedule_weights(ep, kind, 100.0, 1.0, 50, 0.01)
            assert at / ae == 1.0

    def test_constant(self):
        sched = make_schedule("constant", 7.0, 1.0, 10, 0.5)
        assert {sched(e) for e in range(30)} == {(3.5, 0.5)}

    @given(st.integers(0, 99))
    def test_exponential_monotone(self, ep):
        a, _ = schedule_weights(ep, "exponential", 100.0, 1.0, 100)
        b, _ = schedule_weights(ep + 1, "exponential", 100.0, 1.0, 100)
        assert b <= a

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            schedule_weights(0, "cosine")


class TestEnvelope:
    def test_zero_energy(self):
        m = random_mdp(3, 6, 3)
        chk = envelope_derivative_check(m, 0.0, np.zeros(3), 0.2, delta=1e-6)
        assert chk.finite_diff == 0.0 and chk.expected == 0.0

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_where_policy_constant(self, seed):
        rng = np.random.default_rng(seed)
        m = random_mdp(seed, 6, 3)
        chk = envelope_derivative_check(m, rng.uniform(-1, 1, 6), rng.uniform(0, 1, 3), 0.3, delta=1e-6)
        if not chk.policy_constant:
            pytest.skip("optimum switches inside the step")
        assert chk.abs_error <= 1e-6 * abs(chk.expected) + 1e-9

    @given(st.integers(0, 1000), st.floats(0, 1))
    def test_derivative_nonpositive(self, seed, lam):
        m = random_mdp(seed, 5, 2)
        chk = envelope_derivative_check(m, 0.0, np.array([0.2, 0.9]), lam, delta=1e-4)
        assert chk.finite_diff <= 1e-9 and chk.expected <= 0.0


class TestApproxPotential:
    def test_bound_value(self):
        assert approx_potential_bound(0.2, 0.99, 0.01) == pytest.approx(0.495, abs=1e-3)

    def test_zero_noise_zero_gap(self):
        m = random_mdp(1, 6, 3)
        rep = approx_potential_gap_check(m, -np.arange(1.0, 7.0), 0.0, trials=2)
        assert rep.worst_relative_gap == 0.0 and rep.policies_identical

    def test_tabular_gap_vanishes_under_noise(self):
        m = random_mdp(2, 6, 3)
        rep = approx_potential_gap_check(m, -np.arange(1.0, 7.0), 1.5, trials=5)
        assert rep.absolute_gap == pytest.approx(0.0, abs=1e-9)

    def test_discrepancy_note(self):
        rep = approx_potential_gap_check(random_mdp(1, 4, 2), -np.ones(4), 0.1, trials=1)
        assert "0.495" in rep.note and "<5%" in rep.note

    def test_rejects_epsilon_one(self):
        with pytest.raises(ValueError):
            approx_potential_bound(1.0, 0.9, 0.1)


class TestDiagnostic:
    def test_ratio(self):
        assert acceleration_diagnostic([2.0, 4.0], [1.0, 0.0, 2.0]) == 2.0

    def test_no_task_gradient(self):
        assert acceleration_diagnostic([1.0], [0.0]) == math.inf


def test_value_shift_on_one_instance():
    m = random_mdp(9, 7, 3, n_terminal=1)
    phi = np.random.default_rng(9).uniform(-2, 2, 7)
    phi[m.terminal] = 0.0
    energy = np.array([0.0, 0.5, 1.0])
    v_lam = value_iteration(regularized_mdp(m, 0.2, energy), tol=1e-12).v
    v_sh = value_iteration(embed_shaped_mdp(m, phi, 0.2, energy), tol=1e-12).v
    np.testing.assert_allclose(v_sh, v_lam - phi, atol=1e-8)
    pol = greedy_policy(value_iteration(embed_shaped_mdp(m, phi, 0.2, energy), tol=1e-12))
    np.testing.assert_allclose(evaluate_policy(regularized_mdp(m, 0.2, energy), pol), v_lam, atol=1e-8)
