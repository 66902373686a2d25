import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hears.energy import (EnergyTrace, VehicleEnergyParams, approximate_model, energy_potential, hopper_model,
                          lander_model, lyapunov_heuristic_check, numeric_gradient, pendulum_model,
                          relative_approx_error, sideslip, total_energy, vehicle_energy_terms,
                          vehicle_internal_energy, vehicle_lyapunov, vehicle_model)
from hears.envs import PendulumSwingUp

angles = st.floats(-10, 10, allow_nan=False)


class TestTotalEnergy:
    def test_pendulum_rest_bottom(self):
        assert total_energy(pendulum_model(), [0.0], [0.0]) == 0.0

    def test_pendulum_inverted(self):
        assert total_energy(pendulum_model(), [math.pi], [0.0]) == pytest.approx(19.62, abs=1e-12)

    def test_lander_zero(self):
        assert total_energy(lander_model(), [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]) == 0.0

    def test_lander_hand_value(self):
        m = lander_model(m=2.0, inertia=0.5, g=1.5)
        e = total_energy(m, [0.3, 2.0, 0.1], [1.0, -2.0, 4.0])
        assert e == pytest.approx(0.5 * 2 * 5 + 0.5 * 0.5 * 16 + 2 * 1.5 * 2.0)

    def test_non_finite_raises(self):
        with pytest.raises(FloatingPointError):
            total_energy(pendulum_model(), [math.nan], [0.0])

    @given(angles, angles)
    def test_nonnegative(self, th, om):
        assert total_energy(pendulum_model(), [th], [om]) >= 0.0

    def test_hopper_posture_is_pseudo(self):
        m = hopper_model()
        assert m.terms["posture"].kind == "pseudo"
        q = np.array([0.0, 0.0, 0.1, -0.2, 0.3])
        assert total_energy(m, q, np.zeros(5)) == pytest.approx(0.1 * (0.01 + 0.04 + 0.09))


class TestEnergyPotential:
    def test_zero_state(self):
        assert energy_potential(pendulum_model(), [0.0], [0.0]) == 0.0

    @given(angles, angles, st.floats(0.1, 100))
    def test_definition(self, th, om, norm):
        m = pendulum_model(normalizer=norm)
        assert energy_potential(m, [th], [om]) == pytest.approx(-total_energy(m, [th], [om]) / norm)

    def test_clipped(self):
        m = pendulum_model(phi_max=1.0)
        assert energy_potential(m, [math.pi], [0.0]) == -1.0

    @pytest.mark.parametrize("theta", [-2.0, 0.3, 1.7])
    def test_gradient_matches_numeric(self, theta):
        m = pendulum_model()
        num = numeric_gradient(lambda q: m.potential_energy(q), np.array([theta]))
        np.testing.assert_allclose(m.grad_potential([theta]), num, rtol=1e-6)


class TestVehicleEnergy:
    def test_linear_term_at_target(self):
        p = VehicleEnergyParams()
        assert vehicle_energy_terms(15.0, 0.0, 0.0, 0.0, p)["lin"] == 1.0

    def test_nominal_total_is_one(self):
        assert vehicle_internal_energy((15.0, 0.0, 0.0), 0.0, VehicleEnergyParams()) == 1.0

    def test_slip_quadratic(self):
        p = VehicleEnergyParams()
        vx = 15.0
        beta = 0.05
        e1 = vehicle_energy_terms(vx, vx * math.tan(beta), 0.0, 0.0, p)["slip"]
        e2 = vehicle_energy_terms(vx, vx * math.tan(2 * beta), 0.0, 0.0, p)["slip"]
        assert e1 == pytest.approx(2.0 * beta**2)
        assert e2 == pytest.approx(4 * e1)

    def test_no_yaw_change(self):
        assert vehicle_energy_terms(10.0, 0.3, 0.2, 0.2, VehicleEnergyParams())["dr"] == 0.0

    def test_missing_normalisers(self):
        with pytest.raises(ValueError):
            vehicle_internal_energy((1.0, 0.0, 0.0), 0.0, None)
        with pytest.raises(ValueError):
            VehicleEnergyParams(v_target=0.0)

    def test_sideslip_guard(self):
        assert sideslip(0.1, 0.2) == 0.0
        assert sideslip(1.0, 1.0) == pytest.approx(math.pi / 4)

    def test_lyapunov_candidate(self):
        assert vehicle_lyapunov(0.0, 0.0) == 0.0
        assert vehicle_lyapunov(1.0, 1.0, i_z=2.0) == pytest.approx(1.0 + 1.0)


def _vehicle_samples(n=200, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        vx = rng.uniform(0, 20)
        yield (np.zeros(3), np.array([vx, rng.uniform(-1, 1), rng.uniform(-0.5, 0.5)]),
               {"prev_yaw_rate": rng.uniform(-0.5, 0.5)})


class TestApproximateModel:
    def test_identity(self):
        full = pendulum_model()
        same = approximate_model(full, sample_states=[([0.3], [1.0], {}), ([2.0], [-1.0], {})])
        assert same.approx_error == 0.0
        for th in np.linspace(-3, 3, 7):
            assert energy_potential(same, [th], [0.5]) == energy_potential(full, [th], [0.5])

    def test_vehicle_kinetic_only(self):
        full = vehicle_model()
        states = list(_vehicle_samples())
        reduced = approximate_model(full, omit=("slip", "dr", "dv"), sample_states=states)
        eps = relative_approx_error(full, reduced, states)
        assert reduced.approx_error > 0 and 0 < eps < 1

    @given(st.floats(0.0, 2.0), st.integers(0, 100))
    def test_noise_bounded(self, delta, seed):
        full = pendulum_model()
        noisy = approximate_model(full, noise_delta=delta, seed=seed)
        rng = np.random.default_rng(seed)
        for _ in range(20):
            q, qd = rng.uniform(-3, 3, 1), rng.uniform(-3, 3, 1)
            assert abs(energy_potential(noisy, q, qd) - energy_potential(full, q, qd)) <= delta + 1e-12

    def test_unknown_component(self):
        with pytest.raises(KeyError):
            approximate_model(pendulum_model(), omit=("spin",))

    def test_cannot_drop_everything(self):
        with pytest.raises(ValueError):
            approximate_model(pendulum_model(), omit=("kinetic", "gravity"))


class TestLyapunovCheck:
    def test_constant_trace(self):
        trace = EnergyTrace.from_series(np.full(5, 3.0), np.zeros(4), 0.1)
        rep = lyapunov_heuristic_check(trace)
        assert rep.residual_max == 0.0 and rep.monotone_fraction is None and rep.flags

    def test_sign_agreement(self):
        trace = EnergyTrace.from_series([0.0, 1.0, 0.5], [10.0, -5.0], 0.1)
        rep = lyapunov_heuristic_check(trace)
        assert rep.sign_agreement == 1.0 and rep.residual_max == pytest.approx(0.0)

    def test_exclude_contact_steps(self):
        trace = EnergyTrace.from_series([0.0, 5.0, 5.0], [0.0, 0.0], 0.1)
        assert lyapunov_heuristic_check(trace, exclude=[0]).residual_max == 0.0

    def test_dt_mismatch(self):
        trace = EnergyTrace.from_series([0.0, 1.0], [1.0], 0.1)
        with pytest.raises(ValueError):
            lyapunov_heuristic_check(trace, dt=0.2)

    def test_csv(self, tmp_path):
        trace = EnergyTrace.from_series([0.0, 1.0, 3.0], [1.0, 2.0], 0.5)
        trace.to_csv(tmp_path / "e.csv")
        lines = (tmp_path / "e.csv").read_text().splitlines()
        assert lines[0] == "t,E,dE,dPhi,Edot_dt" and len(lines) == 3

    def test_pendulum_conservation(self):
        env = PendulumSwingUp(dt=0.01, damping=0.0)
        th, om = 2.0, 0.0
        m = pendulum_model(env.m, env.length, env.g)
        e0 = total_energy(m, [th], [om])
        worst = 0.0
        for _ in range(10_000):
            th, om = env.integrate(th, om, 0.0)
            worst = max(worst, abs(total_energy(m, [th], [om]) - e0))
        assert worst <= 1e-4 * e0
