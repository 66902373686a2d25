"""Procedural test roads: friction patches, banked and graded sections, gentle curves."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

MU_MIN, MU_MAX = 0.1, 1.0
LATERAL_SLOPE_CAP_DEG = 15.0
LONGITUDINAL_SLOPE_CAP_DEG = 20.0


@dataclass(frozen=True)
class SegmentSpec:
    """Knobs for :func:`generate_road`. Slopes in degrees, lengths in metres."""

    n_low_mu: int = 3
    low_mu_range: tuple[float, float] = (0.1, 0.4)
    high_mu: float = 1.0
    patch_length: tuple[float, float] = (10.0, 30.0)
    n_lateral: int = 2
    max_lateral_deg: float = 6.0
    n_longitudinal: int = 2
    max_longitudinal_deg: float = 8.0
    ramp_length: tuple[float, float] = (20.0, 50.0)
    curve_amplitude: float = 1.5
    curve_wavelength: float = 120.0

    def validate(self) -> None:
        lo, hi = self.low_mu_range
        if not (MU_MIN <= lo <= hi <= MU_MAX) or not (MU_MIN <= self.high_mu <= MU_MAX):
            raise ValueError(f"friction must lie in [{MU_MIN}, {MU_MAX}]")
        if not 0.0 <= self.max_lateral_deg <= LATERAL_SLOPE_CAP_DEG:
            raise ValueError(f"lateral slope cap is {LATERAL_SLOPE_CAP_DEG} deg")
        if not 0.0 <= self.max_longitudinal_deg <= LONGITUDINAL_SLOPE_CAP_DEG:
            raise ValueError(f"longitudinal slope cap is {LONGITUDINAL_SLOPE_CAP_DEG} deg")
        if self.curve_wavelength <= 0:
            raise ValueError("curve wavelength must be positive")


def _cosine_bump(x: float, start: float, length: float, peak: float) -> float:
    """Smooth 0 -> peak -> 0 over [start, start + length]."""
    u = (x - start) / length
    if u <= 0.0 or u >= 1.0:
        return 0.0
    return peak * 0.5 * (1.0 - math.cos(2.0 * math.pi * u))


@dataclass(frozen=True)
class RoadProfile:
    """Road along the X axis with centreline Y = A sin(2 pi X / wavelength)."""

    length: float
    friction_patches: tuple = ()  # (start, end, mu)
    lateral_ramps: tuple = ()  # (start, length, peak_deg)
    longitudinal_ramps: tuple = ()  # (start, length, peak_deg)
    base_mu: float = 1.0
    curve_amplitude: float = 0.0
    curve_wavelength: float = 120.0
    seed: int | None = None

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError("road length must be positive")
        for _, _, mu in self.friction_patches:
            if not MU_MIN <= mu <= MU_MAX:
                raise ValueError(f"friction {mu} outside [{MU_MIN}, {MU_MAX}]")
        for _, _, peak in self.lateral_ramps:
            if abs(peak) > LATERAL_SLOPE_CAP_DEG:
                raise ValueError(f"lateral slope {peak} exceeds cap")
        for _, _, peak in self.longitudinal_ramps:
            if abs(peak) > LONGITUDINAL_SLOPE_CAP_DEG:
                raise ValueError(f"longitudinal slope {peak} exceeds cap")

    def friction(self, x: float) -> float:
        for start, end, mu in self.friction_patches:
            if start <= x < end:
                return mu
        return self.base_mu

    def lateral_slope(self, x: float) -> float:
        """Bank angle in degrees; positive pushes the car towards +Y."""
        total = sum(_cosine_bump(x, s, ln, p) for s, ln, p in self.lateral_ramps)
        return min(max(total, -LATERAL_SLOPE_CAP_DEG), LATERAL_SLOPE_CAP_DEG)

    def longitudinal_slope(self, x: float) -> float:
        """Grade in degrees; positive is uphill."""
        total = sum(_cosine_bump(x, s, ln, p) for s, ln, p in self.longitudinal_ramps)
        return min(max(total, -LONGITUDINAL_SLOPE_CAP_DEG), LONGITUDINAL_SLOPE_CAP_DEG)

    def centerline(self, x: float) -> float:
        return self.curve_amplitude * math.sin(2.0 * math.pi * x / self.curve_wavelength)

    def centerline_heading(self, x: float) -> float:
        k = 2.0 * math.pi / self.curve_wavelength
        return math.atan(self.curve_amplitude * k * math.cos(k * x))

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RoadProfile":
        d = json.loads(text)
        for key in ("friction_patches", "lateral_ramps", "longitudinal_ramps"):
            d[key] = tuple(tuple(item) for item in d[key])
        return cls(**d)


def generate_road(seed: int, length: float, segment_spec: SegmentSpec | None = None) -> RoadProfile:
    if length <= 0:
        raise ValueError("road length must be positive")
    spec = segment_spec or SegmentSpec()
    spec.validate()
    rng = np.random.default_rng(seed)

    patches = []
    for _ in range(spec.n_low_mu):
        ln = float(rng.uniform(*spec.patch_length))
        start = float(rng.uniform(0.1 * length, max(0.1 * length, length - ln)))
        patches.append((start, start + ln, float(rng.uniform(*spec.low_mu_range))))
    patches.sort()

    def ramps(n, cap):
        out = []
        for _ in range(n):
            ln = float(rng.uniform(*spec.ramp_length))
            start = float(rng.uniform(0.0, max(0.0, length - ln)))
            out.append((start, ln, float(rng.uniform(-cap, cap))))
        return tuple(sorted(out))

    lateral = ramps(spec.n_lateral, spec.max_lateral_deg)
    longitudinal = ramps(spec.n_longitudinal, spec.max_longitudinal_deg)
    return RoadProfile(length=float(length), friction_patches=tuple(patches), lateral_ramps=lateral,
                       longitudinal_ramps=longitudinal, base_mu=spec.high_mu,
                       curve_amplitude=spec.curve_amplitude, curve_wavelength=spec.curve_wavelength, seed=seed)
