"""Experiment configuration, shaping presets and the ablation lattice."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

DEFAULT_SEEDS = (12345, 22345, 32345, 42345, 52345)

# (alpha_task, alpha_energy, lambda)
PRESETS: dict[str, tuple[float, float, float]] = {
    "ant": (5e-3, 3e-2, 1e-2),
    "hopper-table": (0.5, 1e-3, 5e-4),
    "hopper-appendix": (0.5, 0.01, 1e-4),
    "lander": (0.5, 0.001, 0.0001),
    "humanoid": (0.1, 0.001, 0.0001),
    "vehicle": (0.45, 0.35, 0.20),
    "vehicle-text": (0.45, 0.35, 0.01),
    "gridnav": (0.02, 0.0, 0.0),
    "vanilla": (0.0, 0.0, 0.0),
}

# environment each preset drives when no --env is given
PRESET_ENVS = {
    "ant": "pendulum",
    "hopper-table": "hopper",
    "hopper-appendix": "hopper",
    "lander": "lander",
    "humanoid": "lander",
    "vehicle": "vehicle",
    "vehicle-text": "vehicle",
    "gridnav": "gridnav",
    "vanilla": "pendulum",
}

# variant name -> which of (task, energy, regularisation) stay switched on
ABLATION_VARIANTS = (
    ("Vanilla", (False, False, False)),
    ("Energy Only", (False, True, False)),
    ("Task Only", (True, False, False)),
    ("Regularization Only", (False, False, True)),
    ("Without Regularization", (True, True, False)),
    ("Without Energy", (True, False, True)),
    ("Without Task", (False, True, True)),
    ("Full", (True, True, True)),
)


@dataclass(frozen=True)
class ScheduleSettings:
    kind: str = "exponential"
    start_ratio: float = 100.0
    end_ratio: float = 1.0
    horizon_fraction: float = 0.5


@dataclass(frozen=True)
class ExperimentConfig:
    env: str = "pendulum"
    learner: str = "actor_critic"
    alpha_task: float = 0.0
    alpha_energy: float = 0.0
    lam: float = 0.0
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    episodes: int = 50
    max_steps: int | None = None
    threshold: float | None = None  # absolute; derived from the run when None
    threshold_fraction: float = 0.885
    threshold_window: int = 5
    stable_fraction: float = 0.2
    schedule: ScheduleSettings = field(default_factory=ScheduleSettings)
    learner_params: dict = field(default_factory=dict)
    env_params: dict = field(default_factory=dict)
    preset: str | None = None
    variant: str | None = None
    output_dir: str = "runs"

    def __post_init__(self):
        if self.learner not in ("actor_critic", "tabular"):
            raise ValueError(f"unknown learner {self.learner!r}")
        if min(self.alpha_task, self.alpha_energy, self.lam) < 0:
            raise ValueError("shaping coefficients must be nonnegative")
        if self.episodes < 0:
            raise ValueError("episodes must be nonnegative")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if isinstance(self.schedule, dict):
            object.__setattr__(self, "schedule", ScheduleSettings(**self.schedule))

    @property
    def coefficients(self) -> tuple[float, float, float]:
        return (self.alpha_task, self.alpha_energy, self.lam)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def config_hash(self) -> str:
        """Hash of everything except the output location."""
        d = self.to_dict()
        d.pop("output_dir", None)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise KeyError(f"unknown config keys {sorted(unknown)}")
        d = dict(d)
        if "seeds" in d:
            d["seeds"] = tuple(d["seeds"])
        if "schedule" in d and isinstance(d["schedule"], dict):
            d["schedule"] = ScheduleSettings(**d["schedule"])
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})


def preset_config(name: str, **overrides) -> ExperimentConfig:
    try:
        at, ae, lam = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    # table presets use fixed weights
    base = ExperimentConfig(env=PRESET_ENVS[name], alpha_task=at, alpha_energy=ae, lam=lam, preset=name,
                            learner="tabular" if PRESET_ENVS[name] == "gridnav" else "actor_critic",
                            schedule=ScheduleSettings(kind="constant"))
    return base.with_overrides(**overrides)


def ablation_grid(base: ExperimentConfig) -> list[ExperimentConfig]:
    """The 2^3 on/off lattice over (task potential, energy potential, regulariser)."""
    at, ae, lam = base.coefficients
    out = []
    for name, (task_on, energy_on, reg_on) in ABLATION_VARIANTS:
        out.append(replace(base, alpha_task=at if task_on else 0.0, alpha_energy=ae if energy_on else 0.0,
                           lam=lam if reg_on else 0.0, variant=name))
    return out
