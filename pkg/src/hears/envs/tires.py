"""Vehicle body parameters and a saturating lateral tire law."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GRAVITY = 9.81


@dataclass(frozen=True)
class VehicleParams:
    """Two-axle passenger vehicle; lengths in metres, mass in kg, inertia in kg m^2.

    ``stiffness_per_load`` is the normalised cornering stiffness C / F_z (1/rad).
    """

    m: float = 2100.0
    i_z: float = 4116.0
    h: float = 0.71
    a: float = 1.35
    b: float = 1.45
    d_f: float = 1.8
    d_r: float = 1.8
    stiffness_per_load: float = 8.0

    def __post_init__(self):
        for name in ("m", "i_z", "h", "a", "b", "d_f", "d_r", "stiffness_per_load"):
            if getattr(self, name) <= 0:
                raise ValueError(f"vehicle parameter {name} must be positive")

    @property
    def wheelbase(self) -> float:
        return self.a + self.b

    @property
    def track(self) -> float:
        return 0.5 * (self.d_f + self.d_r)

    def axle_loads(self, grade_rad: float = 0.0) -> tuple[float, float]:
        """Static (F_zf, F_zr) on a road of the given grade."""
        w = self.m * GRAVITY * math.cos(grade_rad)
        return w * self.b / self.wheelbase, w * self.a / self.wheelbase

    def cornering_stiffness(self) -> tuple[float, float]:
        """Small-slip axle stiffnesses (C_f, C_r) in N/rad on level ground."""
        fzf, fzr = self.axle_loads()
        return self.stiffness_per_load * fzf, self.stiffness_per_load * fzr


def tire_lateral_force(slip_angle, normal_load, mu, stiffness_per_load: float = 8.0):
    """F = mu F_z tanh(c alpha / mu).

    Slope c F_z at zero slip, saturating smoothly at mu F_z, odd in alpha.
    Broadcasts over array inputs.
    """
    mu_arr = np.asarray(mu, dtype=float)
    load = np.asarray(normal_load, dtype=float)
    if np.any(mu_arr <= 0) or np.any(load <= 0):
        raise ValueError("friction and normal load must be positive")
    force = mu_arr * load * np.tanh(stiffness_per_load * np.asarray(slip_angle, dtype=float) / mu_arr)
    return float(force) if np.ndim(force) == 0 else force
