"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` (the report lines bypass
output capture) or directly with ``python3 tests/test_acceptance.py``.
The training criteria take several minutes each on one core.
"""

import contextlib
import json
import math
import sys
import time

import numpy as np
import pytest

from hears.cli import main as cli_main
from hears.harness import preset_config, run_experiment
from hears.harness.experiment import gridnav_acceleration, paired_seeds
from hears.harness.verify import (check_ablation_grid, check_alternating_probe, check_approx_potential,
                                  check_energy_conservation, check_envelope, check_gradients,
                                  check_lyapunov_residual, check_policy_invariance, check_reward_bound,
                                  check_shaping_off_identity, check_value_shift)

pytestmark = pytest.mark.acceptance

# coefficient tables for the ablation variants, (alpha_task, alpha_energy, lambda)
ANT_TABLE = {
    "Vanilla": (0.0, 0.0, 0.0),
    "Energy Only": (0.0, 3e-2, 0.0),
    "Task Only": (5e-3, 0.0, 0.0),
    "Regularization Only": (0.0, 0.0, 1e-2),
    "Without Regularization": (5e-3, 3e-2, 0.0),
    "Without Energy": (5e-3, 0.0, 1e-2),
    "Without Task": (0.0, 3e-2, 1e-2),
    "Full": (5e-3, 3e-2, 1e-2),
}
HOPPER_TABLE = {
    "Vanilla": (0.0, 0.0, 0.0),
    "Energy Only": (0.0, 1e-3, 0.0),
    "Task Only": (5e-1, 0.0, 0.0),
    "Regularization Only": (0.0, 0.0, 5e-4),
    "Without Regularization": (5e-1, 1e-3, 0.0),
    "Without Energy": (5e-1, 0.0, 5e-4),
    "Without Task": (0.0, 1e-3, 5e-4),
    "Full": (5e-1, 1e-3, 5e-4),
}

LANDER_EPISODES = 250
LANDER_LAMBDA = 0.1
LANDER_PARAMS = {"lr_actor": 3e-4, "final_eval_episodes": 3}
VEHICLE_EPISODES = 40
VEHICLE_PARAMS = {"lr_actor": 3e-4, "warmup": 300, "final_eval_episodes": 1}


@pytest.fixture
def report(capsys):
    def emit(number: int, passed: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\ncriterion {number:2d}: {'PASS' if passed else 'FAIL'} {detail}", flush=True)
    return emit


def timed(fn, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - start


def test_01_policy_invariance(report):
    res, secs = timed(check_policy_invariance, 200, 50)
    ok = res.passed and secs < 30.0
    report(1, ok, f"{res.detail}; {secs:.1f} s (limit 30 s)")
    assert ok


def test_02_value_shift(report):
    res = check_value_shift(200, 50, tol=1e-8)
    report(2, res.passed, res.detail)
    assert res.passed


def test_03_reward_bound(report):
    res = check_reward_bound(100_000)
    report(3, res.passed, res.detail)
    assert res.passed


def test_04_envelope_derivative(report):
    res = check_envelope(50, rel_tol=1e-6)
    report(4, res.passed, res.detail)
    assert res.passed


def test_05_approximate_potential(report):
    res = check_approx_potential()
    report(5, res.passed, res.detail)
    assert res.passed


def test_06_energy_conservation(report):
    res = check_energy_conservation(10_000, dt=0.01, tol=1e-4)
    report(6, res.passed, res.detail)
    assert res.passed


def test_07_gradients(report):
    res = check_gradients(20, tol=1e-4)
    report(7, res.passed, res.detail)
    assert res.passed


def test_08_shaping_off_identity(report):
    res = check_shaping_off_identity(seeds=(0, 1, 2))
    report(8, res.passed, res.detail)
    assert res.passed


def test_09_convergence_acceleration(report):
    res, secs = timed(gridnav_acceleration, seeds=paired_seeds(20))
    ok = res["ratio"] <= 0.8 and secs < 300.0
    report(9, ok, f"median episodes to 95% of optimal: shaped {res['median_shaped']:g} vs vanilla "
                  f"{res['median_vanilla']:g} (ratio {res['ratio']:.3f}, need <= 0.8); {secs:.0f} s (limit 300 s)")
    assert ok


def test_10_oscillation_suppression(report):
    probe = check_alternating_probe(ratio=100.0)
    start = time.perf_counter()
    seeds = paired_seeds(10)
    base = preset_config("lander", seeds=seeds, episodes=LANDER_EPISODES, learner_params=LANDER_PARAMS)
    medians = {}
    for lam in (LANDER_LAMBDA, 0.0):
        result = run_experiment(base.with_overrides(lam=lam))
        per_seed = [o.metrics for o in result.outcomes]
        medians[lam] = (float(np.median([m["eval_action_tv_per_step"] for m in per_seed])),
                        float(np.median([m["eval_return_mean"] for m in per_seed])))
    secs = time.perf_counter() - start
    (tv_on, ret_on), (tv_off, ret_off) = medians[LANDER_LAMBDA], medians[0.0]
    gap = abs(ret_on - ret_off) / max(abs(ret_on), abs(ret_off), 1e-12)
    ok = probe.passed and tv_on < tv_off and gap <= 0.05 and secs < 900.0
    report(10, ok, f"{probe.detail}; trained median TV/step lambda={LANDER_LAMBDA:g}: {tv_on:.4g} vs lambda=0: "
                   f"{tv_off:.4g}; median return {ret_on:.3g} vs {ret_off:.3g} (relative gap {gap:.1%}, need "
                   f"<= 5%); {secs:.0f} s (limit 900 s)")
    assert ok


def _settled_cv(metrics: dict) -> float:
    value = metrics["vehicle"]["settled_speed_cv_percent"]
    # a run that never reaches cruising speed has no settled segment and counts as worst
    return math.inf if value is None else value


def test_11_vehicle(report):
    start = time.perf_counter()
    shaped = preset_config("vehicle", episodes=VEHICLE_EPISODES, learner_params=VEHICLE_PARAMS)
    vanilla = shaped.with_overrides(alpha_task=0.0, alpha_energy=0.0, lam=0.0, variant="Vanilla")
    stats, logged, bounded = {}, True, True
    for name, cfg in (("shaped", shaped), ("vanilla", vanilla)):
        result = run_experiment(cfg)
        veh = [o.metrics for o in result.outcomes]
        stats[name] = (float(np.median([m["vehicle"]["max_abs_beta_deg"] for m in veh])),
                       float(np.median([_settled_cv(m) for m in veh])))
        for o in result.outcomes:
            logged &= len(o.mpc_rows) == o.metrics["vehicle"]["steps"]
            logged &= all(math.isfinite(r["feasibility_ratio"]) for r in o.mpc_rows)
            bounded &= o.metrics["vehicle"]["inputs_within_bounds"]
    secs = time.perf_counter() - start
    (beta_h, cv_h), (beta_v, cv_v) = stats["shaped"], stats["vanilla"]
    ok = beta_h < beta_v and cv_h < cv_v and logged and bounded and secs < 1800.0
    report(11, ok, f"median max |beta| {beta_h:.2f} vs {beta_v:.2f} deg; median settled speed CV {cv_h:.2f}% vs "
                   f"{cv_v:.2f}%; feasibility logged every step: {logged}; inputs within bounds: {bounded}; "
                   f"{secs:.0f} s (limit 1800 s)")
    assert ok


def test_12_discretisation_residual(report):
    res = check_lyapunov_residual(factor=3.0)
    report(12, res.passed, res.detail)
    assert res.passed


def test_13_ablation_grid(report, tmp_path, capsys):
    ok = check_ablation_grid().passed
    found = {}
    for preset, table in (("ant", ANT_TABLE), ("hopper-table", HOPPER_TABLE)):
        out = tmp_path / preset
        with contextlib.redirect_stdout(sys.stderr):
            status = cli_main(["ablate", "--preset", preset, "--dry-run", "--out", str(out)])
        variants = json.loads((out / "ablation.json").read_text())["variants"]
        found[preset] = {v["variant"]: (v["alpha_task"], v["alpha_energy"], v["lambda"]) for v in variants}
        ok &= status == 0 and len(variants) == 8 and found[preset] == table
    report(13, ok, f"8 variants per preset matching both tables; Ant Without Task = {found['ant']['Without Task']}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
