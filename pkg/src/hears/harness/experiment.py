"""Seeded experiment runner.

One run per seed, each owning its own environment, learner and random
streams. Runs may execute in worker processes; results are always merged
in seed order so the written files depend only on the configuration.

Files written to the output directory:

* ``summary.json``: configuration, per-seed and aggregate statistics;
* ``episodes.csv``: one row per training episode and seed;
* ``energy_trace.csv``: per-step energy bookkeeping of a final greedy rollout;
* ``mpc_log.csv``: per-step MPC diagnostics (vehicle only, header otherwise);
* ``checkpoint_<seed>.bin/.json``: final network parameters (actor-critic).

Every row and document carries the configuration hash, the seed and the
package version. Wall-clock time is kept out of the files so reruns are
byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from hears import __version__
from hears.envs import BicycleVehicle, GridNav, generate_road, make_env
from hears.harness.config import DEFAULT_SEEDS, ExperimentConfig, preset_config
from hears.harness.metrics import (coefficient_of_variation, episodes_to_threshold, final_stable_mean,
                                   stable_slice)
from hears.learner.actor_critic import AcConfig, AcShaping, actor_critic_train
from hears.learner.checkpoint import save_checkpoint
from hears.learner.tabular import TabularHyper, TabularShaping, episodes_to_fraction, tabular_q_learning
from hears.records import RunRecord
from hears.shaping import PotentialSpec, make_schedule

EPISODE_FIELDS = ("config_hash", "version", "seed", "episode", "return", "shaped_return", "length",
                  "action_tv", "energy_mean", "evaluation")
ENERGY_FIELDS = ("config_hash", "version", "seed", "t", "E", "dE", "dPhi", "Edot_dt")
MPC_FIELDS = ("config_hash", "version", "seed", "t", "feasibility_ratio", "u_delta", "u_mz", "within_bounds",
              "converged", "iterations", "mode", "cost", "beta", "r", "vx")

# GridNav learner defaults chosen for the paired acceleration experiment
GRIDNAV_HYPER = {"alpha": 1.0, "epsilon": 0.1, "gamma": 0.99, "max_steps": 2000, "q_init": 0.0}
GRIDNAV_TARGET_FRACTION = 0.95

VEHICLE_ROADS = {"train_road_seed": 7, "train_road_length": 1000.0,
                 "test_road_seed": 2024, "test_road_length": 300.0}
VEHICLE_TRAIN_STEPS = 300


class ExperimentFailure(RuntimeError):
    """A seed failed; ``result`` holds everything finished before the abort."""

    def __init__(self, message: str, result: "ExperimentResult"):
        super().__init__(message)
        self.result = result


@dataclass
class SeedOutcome:
    record: RunRecord
    energy_rows: list[dict] = field(default_factory=list)
    mpc_rows: list[dict] = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    checkpoint: dict | None = None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    outcomes: list[SeedOutcome]
    summary: dict
    out_dir: Path | None = None

    @property
    def records(self) -> list[RunRecord]:
        return [o.record for o in self.outcomes]

    @property
    def failed(self) -> bool:
        return any(o.record.failed for o in self.outcomes)


# --- construction -------------------------------------------------------------

def build_envs(config: ExperimentConfig):
    """(training env, evaluation env) for ``config``."""
    params = dict(config.env_params)
    if config.env == "vehicle":
        roads = {k: params.pop(k, v) for k, v in VEHICLE_ROADS.items()}
        params.setdefault("max_steps", VEHICLE_TRAIN_STEPS)
        train = BicycleVehicle(road=generate_road(int(roads["train_road_seed"]), float(roads["train_road_length"])),
                               **params)
        eval_params = {k: v for k, v in params.items() if k not in ("max_steps", "random_start", "start_speed")}
        test = BicycleVehicle(road=generate_road(int(roads["test_road_seed"]), float(roads["test_road_length"])),
                              random_start=False, start_speed=0.0, max_steps=5000, **eval_params)
        return train, test
    env = make_env(config.env, **params)
    return env, env


def build_potential(config: ExperimentConfig, env) -> PotentialSpec:
    at, ae, _ = config.coefficients
    sched = config.schedule
    schedule = None
    if sched.kind != "constant" and ae > 0:
        horizon = max(1, int(round(sched.horizon_fraction * max(config.episodes, 1))))
        schedule = make_schedule(sched.kind, sched.start_ratio, sched.end_ratio, horizon, ae)
    return PotentialSpec(alpha_task=at, alpha_energy=ae, phi_task=env.task_potential,
                         phi_energy=env.energy_potential, schedule=schedule)


def _learner_config(cls, config: ExperimentConfig, defaults: dict | None = None, **fixed):
    names = {f.name for f in fields(cls)}
    params = {**(defaults or {}), **config.learner_params}
    extra = set(params) - names - {"final_eval_episodes", "stop_at_target"}
    if extra:
        raise KeyError(f"unknown learner parameters {sorted(extra)} for {cls.__name__}")
    kwargs = {k: v for k, v in params.items() if k in names}
    if "hidden" in kwargs:
        kwargs["hidden"] = tuple(kwargs["hidden"])
    kwargs.update({k: v for k, v in fixed.items() if k in names})
    return cls(**kwargs)


# --- per-seed runs ------------------------------------------------------------

def _run_tabular(config: ExperimentConfig, seed: int) -> SeedOutcome:
    env, _ = build_envs(config)
    if not isinstance(env, GridNav):
        raise TypeError("the tabular learner needs a GridNav environment")
    defaults = dict(GRIDNAV_HYPER)
    if config.max_steps:
        defaults["max_steps"] = config.max_steps
    hyper = _learner_config(TabularHyper, config, defaults)
    at, _, lam = config.coefficients
    shaping = TabularShaping(potential=at * env.potential_table() if at else None, lam=lam,
                             energy_per_action=np.ones(env.n_actions) if lam else None)
    optimum = env.optimal_start_value(hyper.gamma)
    stop = None
    if config.learner_params.get("stop_at_target", False):
        stop = lambda v: v >= GRIDNAV_TARGET_FRACTION * optimum  # noqa: E731
    record = tabular_q_learning(env, shaping, config.episodes, seed, hyper,
                                eval_fn=lambda policy: env.greedy_rollout_value(policy, hyper.gamma),
                                stop_fn=stop)
    metrics = {"optimal_value": optimum,
               "episodes_to_target": episodes_to_fraction(record.evaluations, optimum, GRIDNAV_TARGET_FRACTION),
               "total_steps": record.extras["total_steps"]}
    return SeedOutcome(record=record, metrics=metrics)


def _energy_rows(env, rollout: dict, start_state) -> list[dict]:
    rows = []
    state = start_state
    for t, info in enumerate(rollout["infos"]):
        nxt = rollout["states"][t]
        e0, e1 = env.total_energy(state), env.total_energy(nxt)
        edot = env.energy_rate(state, info["action"]) * env.dt if hasattr(env, "energy_rate") else float("nan")
        rows.append({"t": t, "E": e1, "dE": e1 - e0,
                     "dPhi": env.energy_potential(nxt) - env.energy_potential(state), "Edot_dt": edot})
        state = nxt
    return rows


def _mpc_rows(rollout: dict) -> list[dict]:
    rows = []
    for t, info in enumerate(rollout["infos"]):
        rep, sig = info["mpc"], info["signals"]
        u = np.asarray(rep.u0, dtype=float)
        rows.append({"t": t, "feasibility_ratio": float(rep.feasibility_ratio), "u_delta": float(u[0]),
                     "u_mz": float(u[1]), "within_bounds": bool(np.all(np.abs(u) <= 1.0 + 1e-12)),
                     "converged": bool(rep.converged), "iterations": int(rep.iterations), "mode": rep.mode,
                     "cost": float(rep.cost), "beta": sig.beta, "r": sig.r, "vx": sig.vx})
    return rows


def greedy_rollout(env, nets, rng: np.random.Generator, max_steps: int) -> dict:
    """:func:`evaluate_policy_rollout` plus the visited states and the start state."""
    start = env.reset(rng)
    states, infos = [], []
    state, ret, tv, prev = start, 0.0, 0.0, None
    steps = 0
    for steps in range(1, max_steps + 1):
        a = nets.mean_action(env.observe(state))[0]
        res = env.step(state, a)
        if prev is not None:
            tv += float(np.linalg.norm(res.info["action"] - prev))
        prev = res.info["action"]
        ret += res.reward
        states.append(res.state)
        infos.append(res.info)
        state = res.state
        if res.terminal:
            break
    return {"return": ret, "action_tv": tv, "steps": steps, "infos": infos, "states": states, "start": start}


def settled_index(vx, v_target: float, fraction: float = 0.9) -> int:
    """First step at which the speed reaches ``fraction * v_target`` (len(vx) if never)."""
    hits = np.flatnonzero(np.asarray(vx) >= fraction * v_target)
    return int(hits[0]) if hits.size else len(vx)


def vehicle_metrics(rollout: dict, v_target: float) -> dict:
    """Sideslip, speed regularity and MPC feasibility on one evaluation drive.

    The speed CV is reported over the whole trace and over the settled part,
    which starts once the car first reaches 90% of the target speed, so the
    launch from standstill does not dominate the figure.
    """
    sig = [i["signals"] for i in rollout["infos"]]
    vx = [s.vx for s in sig]
    settled = vx[settled_index(vx, v_target):]
    f = [float(i["mpc"].feasibility_ratio) for i in rollout["infos"]]
    bounded = all(np.all(np.abs(i["mpc"].u0) <= 1.0 + 1e-12) for i in rollout["infos"])
    cv = coefficient_of_variation(vx)
    return {"max_abs_beta_deg": float(np.degrees(max(abs(s.beta) for s in sig))),
            "speed_cv_percent": cv.value,
            "settled_speed_cv_percent": coefficient_of_variation(settled).value if len(settled) > 1 else None,
            "mean_speed": float(np.mean(vx)),
            "mean_feasibility": float(np.mean(f)), "min_feasibility": float(np.min(f)),
            "inputs_within_bounds": bool(bounded), "finished": bool(rollout["infos"][-1]["finished"]),
            "failed": bool(rollout["infos"][-1]["failed"]), "steps": rollout["steps"]}


def _run_actor_critic(config: ExperimentConfig, seed: int) -> SeedOutcome:
    train_env, eval_env = build_envs(config)
    ac = _learner_config(AcConfig, config, episodes=config.episodes, max_steps=config.max_steps)
    shaping = AcShaping(build_potential(config, train_env), config.lam)
    record = actor_critic_train(train_env, shaping, ac, seed)
    nets = record.extras["nets"]
    n_eval = int(config.learner_params.get("final_eval_episodes", 5))
    rng = np.random.default_rng([seed, 3])
    rollouts = [greedy_rollout(eval_env, nets, rng, eval_env.max_steps) for _ in range(max(n_eval, 1))]
    metrics = {
        "eval_return_mean": float(np.mean([r["return"] for r in rollouts])),
        "eval_action_tv_mean": float(np.mean([r["action_tv"] for r in rollouts])),
        "eval_action_tv_per_step": float(np.mean([r["action_tv"] / r["steps"] for r in rollouts])),
        "eval_steps_mean": float(np.mean([r["steps"] for r in rollouts])),
        "total_steps": int(record.extras["total_steps"]),
        "mean_action_energy": float(record.extras["mean_action_energy"]),
    }
    first = rollouts[0]
    outcome = SeedOutcome(record=record, energy_rows=_energy_rows(eval_env, first, first["start"]), metrics=metrics,
                          checkpoint=nets.state_dict())
    if config.env == "vehicle":
        outcome.mpc_rows = _mpc_rows(first)
        metrics["vehicle"] = vehicle_metrics(first, eval_env.task.v_target)
    record.extras.pop("nets", None)
    record.extras["eval_outcomes"] = [r["infos"][-1].get("outcome") for r in rollouts]
    return outcome


def run_seed(config: ExperimentConfig, seed: int) -> SeedOutcome:
    """Run one seed; exceptions are captured into a failed record."""
    try:
        if config.learner == "tabular":
            return _run_tabular(config, seed)
        return _run_actor_critic(config, seed)
    except Exception as exc:  # noqa: BLE001 - any failure is recorded, then the experiment aborts
        rec = RunRecord(seed=seed, failed=True, error=f"{type(exc).__name__}: {exc}")
        rec.extras["traceback"] = traceback.format_exc()
        return SeedOutcome(record=rec)


# --- summaries and files --------------------------------------------------------

def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def summarize(config: ExperimentConfig, outcomes: list[SeedOutcome]) -> dict:
    done = [o for o in outcomes if not o.record.failed]
    finals = {o.record.seed: final_stable_mean(o.record.returns, config.stable_fraction)
              for o in done if o.record.n_episodes}
    threshold = config.threshold
    if threshold is None and finals:
        threshold = config.threshold_fraction * float(np.median(list(finals.values())))
    per_seed = {}
    for o in outcomes:
        rec = o.record
        entry = {"failed": rec.failed, "error": rec.error, "episodes": rec.n_episodes}
        if not rec.failed and rec.n_episodes:
            tail = stable_slice(rec.returns, config.stable_fraction)
            entry.update({
                "final_stable_mean": finals[rec.seed],
                "final_stable_std": float(np.std(tail)),
                "cv_percent": coefficient_of_variation(tail).value,
                "episodes_to_threshold": (None if threshold is None else
                                          episodes_to_threshold(rec.returns, threshold, config.threshold_window)),
                **o.metrics,
            })
        per_seed[str(rec.seed)] = entry
    final_values = list(finals.values())
    settings = config.to_dict()
    settings.pop("output_dir", None)  # location-independent, like the hash
    return _clean({
        "config": settings,
        "config_hash": config.config_hash(),
        "version": __version__,
        "seeds": [o.record.seed for o in outcomes],
        "failed": any(o.record.failed for o in outcomes),
        "complete": len(outcomes) == len(config.seeds) and not any(o.record.failed for o in outcomes),
        "threshold": threshold,
        "final_mean": float(np.mean(final_values)) if final_values else None,
        "final_std": float(np.std(final_values)) if final_values else None,
        "per_seed": per_seed,
    })


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return v


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(header), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row.get(k)) for k in header})


def write_outputs(config: ExperimentConfig, outcomes: list[SeedOutcome], summary: dict, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tag = {"config_hash": config.config_hash(), "version": __version__}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    episode_rows, energy_rows, mpc_rows = [], [], []
    for o in outcomes:
        rec = o.record
        for row in rec.episode_rows():
            i = row["episode"]
            row["evaluation"] = rec.evaluations[i] if i < len(rec.evaluations) else None
            episode_rows.append({**tag, **row})
        energy_rows += [{**tag, "seed": rec.seed, **r} for r in o.energy_rows]
        mpc_rows += [{**tag, "seed": rec.seed, **r} for r in o.mpc_rows]
        if o.checkpoint is not None:
            save_checkpoint(out / f"checkpoint_{rec.seed}", o.checkpoint, {**tag, "seed": rec.seed})
    _write_csv(out / "episodes.csv", EPISODE_FIELDS, episode_rows)
    _write_csv(out / "energy_trace.csv", ENERGY_FIELDS, energy_rows)
    _write_csv(out / "mpc_log.csv", MPC_FIELDS, mpc_rows)
    return out


def run_experiment(config: ExperimentConfig, out_dir=None, workers: int = 1) -> ExperimentResult:
    """Run every seed of ``config``, write the output files and return the merged result.

    The first failed seed aborts the experiment: seeds not yet started are
    skipped, finished ones are written with ``failed`` set in the summary,
    and :class:`ExperimentFailure` is raised carrying the partial result.
    """
    seeds = list(config.seeds)
    outcomes: dict[int, SeedOutcome] = {}
    if workers <= 1:
        for seed in seeds:
            outcomes[seed] = run_seed(config, seed)
            if outcomes[seed].record.failed:
                break
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {seed: pool.submit(run_seed, config, seed) for seed in seeds}
            for seed in seeds:
                outcomes[seed] = futures[seed].result()
                if outcomes[seed].record.failed:
                    for f in futures.values():
                        f.cancel()
                    break
    ordered = [outcomes[s] for s in seeds if s in outcomes]
    summary = summarize(config, ordered)
    path = write_outputs(config, ordered, summary, out_dir) if out_dir is not None else None
    result = ExperimentResult(config, ordered, summary, path)
    if result.failed:
        bad = next(o.record for o in ordered if o.record.failed)
        raise ExperimentFailure(f"seed {bad.seed} failed: {bad.error}", result)
    return result


def paired_seeds(n: int, base: int = DEFAULT_SEEDS[0], stride: int = 10_000) -> tuple[int, ...]:
    return tuple(base + stride * k for k in range(n))


def gridnav_acceleration(seeds=None, episodes: int = 2000, preset: str = "gridnav", workers: int = 1) -> dict:
    """Paired vanilla / shaped Q-learning on the sparse 20x20 grid.

    Each seed trains both learners until the greedy policy reaches 95% of the
    optimal start value. The ratio compares the median episode counts
    (shaped over vanilla), so values below 1 mean faster convergence.
    Seeds that never reach the target count as ``episodes``.
    """
    seeds = paired_seeds(20) if seeds is None else tuple(seeds)
    common = dict(seeds=seeds, episodes=episodes, learner_params={"stop_at_target": True})
    shaped_cfg = preset_config(preset, **common)
    vanilla_cfg = shaped_cfg.with_overrides(alpha_task=0.0, alpha_energy=0.0, lam=0.0, variant="Vanilla")
    counts = {}
    for name, cfg in (("vanilla", vanilla_cfg), ("shaped", shaped_cfg)):
        result = run_experiment(cfg, workers=workers)
        counts[name] = [o.metrics["episodes_to_target"] or episodes for o in result.outcomes]
    med_v = float(np.median(counts["vanilla"]))
    med_s = float(np.median(counts["shaped"]))
    return {"seeds": list(seeds), "vanilla": counts["vanilla"], "shaped": counts["shaped"],
            "median_vanilla": med_v, "median_shaped": med_s, "ratio": med_s / med_v}
