"""Per-run experiment record shared by the learners and the harness."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


@dataclass
class RunRecord:
    seed: int
    returns: list[float] = field(default_factory=list)  # base-reward episode returns
    shaped_returns: list[float] = field(default_factory=list)
    lengths: list[int] = field(default_factory=list)
    action_tv: list[float] = field(default_factory=list)
    energy_mean: list[float] = field(default_factory=list)
    evaluations: list[float] = field(default_factory=list)
    wall_clock: float = 0.0
    failed: bool = False
    error: str | None = None
    extras: dict = field(default_factory=dict)

    @property
    def n_episodes(self) -> int:
        return len(self.returns)

    def episode_rows(self) -> list[dict]:
        rows = []
        for i in range(self.n_episodes):
            rows.append({
                "seed": self.seed,
                "episode": i,
                "return": self.returns[i],
                "shaped_return": self.shaped_returns[i] if i < len(self.shaped_returns) else float("nan"),
                "length": self.lengths[i] if i < len(self.lengths) else 0,
                "action_tv": self.action_tv[i] if i < len(self.action_tv) else float("nan"),
                "energy_mean": self.energy_mean[i] if i < len(self.energy_mean) else float("nan"),
            })
        return rows

    def to_csv(self, path) -> None:
        fields = ["seed", "episode", "return", "shaped_return", "length", "action_tv", "energy_mean"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=fields)
            w.writeheader()
            for row in self.episode_rows():
                w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in row.items()})
