"""Mechanical energy models and the energy potential Phi_energy = -E.

An :class:`EnergyModel` is a named collection of additive terms, each tagged
as kinetic, potential or pseudo (a shaping term that is not mechanical
energy, e.g. a posture penalty). Keeping terms named lets
:func:`approximate_model` drop components to build the reduced models used
in the approximation-error experiments.

Datum convention: every model's potential energy has minimum 0 on its
declared domain, so E >= 0 and clipping of the potential stays symmetric.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np

TermFn = Callable[[np.ndarray, np.ndarray, dict], float]


@dataclass(frozen=True)
class EnergyTerm:
    fn: TermFn
    kind: str = "kinetic"
    grad_q: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in ("kinetic", "potential", "pseudo"):
            raise ValueError(f"unknown energy term kind {self.kind!r}")


def _zero_noise(q, q_dot, aux) -> float:
    return 0.0


@dataclass(frozen=True)
class EnergyModel:
    terms: dict[str, EnergyTerm]
    params: dict = field(default_factory=dict)
    normalizer: float = 1.0
    phi_max: float | None = None
    noise: TermFn = _zero_noise
    approx_error: float | None = None

    def kinetic(self, q_dot, q=None, aux=None) -> float:
        q = np.zeros(0) if q is None else q
        return sum(t.fn(q, q_dot, aux or {}) for t in self.terms.values() if t.kind == "kinetic")

    def potential_energy(self, q, aux=None) -> float:
        return sum(t.fn(q, np.zeros(0), aux or {}) for t in self.terms.values() if t.kind == "potential")

    def grad_potential(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        g = np.zeros_like(q)
        for t in self.terms.values():
            if t.kind != "kinetic":
                if t.grad_q is None:
                    raise NotImplementedError("term without closed-form gradient")
                g = g + t.grad_q(q)
        return g


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise FloatingPointError(f"non-finite state passed to energy model: {a}")


def total_energy(model: EnergyModel, q, q_dot, aux: dict | None = None) -> float:
    """T(q_dot) + U(q), summed over every term of the model."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    q_dot = np.atleast_1d(np.asarray(q_dot, dtype=float))
    _check_finite(q, q_dot)
    aux = aux or {}
    return float(sum(t.fn(q, q_dot, aux) for t in model.terms.values()))


def energy_potential(model: EnergyModel, q, q_dot, aux: dict | None = None) -> float:
    """-E / normalizer (plus any injected approximation noise), clipped to phi_max."""
    e = total_energy(model, q, q_dot, aux) / model.normalizer
    phi = -e + model.noise(np.atleast_1d(q), np.atleast_1d(q_dot), aux or {})
    if model.phi_max is not None:
        phi = min(max(phi, -model.phi_max), model.phi_max)
    return float(phi)


# --- environment models -----------------------------------------------------

def pendulum_model(m: float = 1.0, length: float = 1.0, g: float = 9.81,
                   normalizer: float = 1.0, phi_max: float | None = None) -> EnergyModel:
    """Point-mass pendulum, theta = 0 hanging down."""
    mgl = m * g * length
    return EnergyModel(
        terms={
            "kinetic": EnergyTerm(lambda q, qd, aux: 0.5 * m * length**2 * float(qd[0]) ** 2),
            "gravity": EnergyTerm(lambda q, qd, aux: mgl * (1.0 - math.cos(float(q[0]))), "potential",
                                  lambda q: np.array([mgl * math.sin(float(q[0]))])),
        },
        params={"m": m, "l": length, "g": g},
        normalizer=normalizer,
        phi_max=phi_max,
    )


def lander_model(m: float = 1.0, inertia: float = 0.1, g: float = 1.0,
                 normalizer: float = 1.0, phi_max: float | None = None) -> EnergyModel:
    """Rigid lander: q = (x, y, theta), q_dot = (vx, vy, omega); h = y."""
    return EnergyModel(
        terms={
            "linear": EnergyTerm(lambda q, qd, aux: 0.5 * m * (qd[0] ** 2 + qd[1] ** 2)),
            "angular": EnergyTerm(lambda q, qd, aux: 0.5 * inertia * qd[2] ** 2),
            "gravity": EnergyTerm(lambda q, qd, aux: m * g * max(float(q[1]), 0.0), "potential",
                                  lambda q: np.array([0.0, m * g if q[1] > 0 else 0.0, 0.0])),
        },
        params={"m": m, "I": inertia, "g": g},
        normalizer=normalizer,
        phi_max=phi_max,
    )


POSTURE_WEIGHT = 0.1


def hopper_model(m: float = 1.0, inertia: float = 0.05, g: float = 9.81,
                 normalizer: float = 1.0, phi_max: float | None = None) -> EnergyModel:
    """Hopper: q = (x, z, th1, th2, th3), q_dot = (vx, vz, w1, w2, w3).

    The posture term 0.1 * sum(theta_i^2) is a pseudo-energy: it shapes
    towards upright posture but is not mechanical energy.
    """
    return EnergyModel(
        terms={
            "linear": EnergyTerm(lambda q, qd, aux: 0.5 * m * (qd[0] ** 2 + qd[1] ** 2)),
            "angular": EnergyTerm(lambda q, qd, aux: 0.5 * inertia * float(np.sum(qd[2:5] ** 2))),
            "gravity": EnergyTerm(lambda q, qd, aux: m * g * max(float(q[1]), 0.0), "potential",
                                  lambda q: np.array([0.0, m * g if q[1] > 0 else 0.0, 0.0, 0.0, 0.0])),
            "posture": EnergyTerm(lambda q, qd, aux: POSTURE_WEIGHT * float(np.sum(q[2:5] ** 2)), "pseudo",
                                  lambda q: np.concatenate([[0.0, 0.0], 2.0 * POSTURE_WEIGHT * q[2:5]])),
        },
        params={"m": m, "I": inertia, "g": g},
        normalizer=normalizer,
        phi_max=phi_max,
    )


@dataclass(frozen=True)
class VehicleEnergyParams:
    """Normalisers for the dimensionless vehicle internal energy."""

    m: float = 2100.0
    i_z: float = 4116.0
    v_target: float = 15.0
    r_typical: float = 0.5
    r_ref: float = 0.05
    v_ideal: float = 15.0

    def __post_init__(self):
        for name in ("v_target", "r_typical", "r_ref", "v_ideal"):
            if not getattr(self, name) or getattr(self, name) <= 0:
                raise ValueError(f"vehicle energy normaliser {name} must be configured and positive")


SLIP_COEF = 2.0
YAW_CHANGE_COEF = 1.0
SPEED_DEV_COEF = 0.5


def sideslip(vx: float, vy: float, v_min: float = 0.5) -> float:
    """Sideslip angle atan2(vy, vx); zero below the low-speed guard."""
    if abs(vx) < v_min and abs(vy) < v_min:
        return 0.0
    return math.atan2(vy, vx)


def vehicle_energy_terms(vx: float, vy: float, r: float, prev_yaw_rate: float,
                         params: VehicleEnergyParams) -> dict[str, float]:
    beta = sideslip(vx, vy)
    return {
        "lin": params.m * (vx**2 + vy**2) / (params.m * params.v_target**2),
        "ang": params.i_z * r**2 / (params.i_z * params.r_typical**2),
        "slip": SLIP_COEF * beta**2,
        "dr": YAW_CHANGE_COEF * (r - prev_yaw_rate) ** 2 / params.r_ref**2,
        "dv": SPEED_DEV_COEF * ((vx - params.v_ideal) / params.v_ideal) ** 2,
    }


def vehicle_internal_energy(state, prev_yaw_rate: float, params: VehicleEnergyParams | None) -> float:
    """Sum of the five dimensionless vehicle energy terms.

    ``state`` is anything with ``q_dot = (vx, vy, r)`` or such a triple.
    """
    if params is None:
        raise ValueError("vehicle energy normalisers are not configured")
    qd = getattr(state, "q_dot", state)
    vx, vy, r = (float(x) for x in qd[:3])
    return float(sum(vehicle_energy_terms(vx, vy, r, prev_yaw_rate, params).values()))


def vehicle_model(params: VehicleEnergyParams | None = None, phi_max: float | None = None) -> EnergyModel:
    """Vehicle internal energy as an EnergyModel; aux carries ``prev_yaw_rate``."""
    p = params or VehicleEnergyParams()

    def term(name):
        def fn(q, qd, aux):
            return vehicle_energy_terms(float(qd[0]), float(qd[1]), float(qd[2]),
                                        float(aux.get("prev_yaw_rate", qd[2])), p)[name]
        return fn

    return EnergyModel(
        terms={name: EnergyTerm(term(name), "kinetic" if name in ("lin", "ang") else "pseudo",
                                (lambda q: np.zeros_like(q)))
               for name in ("lin", "ang", "slip", "dr", "dv")},
        params={"vehicle": p},
        normalizer=1.0,
        phi_max=phi_max,
    )


def vehicle_mechanical_model(m: float = 2100.0, i_z: float = 4116.0) -> EnergyModel:
    """Planar rigid-body kinetic energy 0.5 m (vx^2 + vy^2) + 0.5 I_z r^2."""
    return EnergyModel(
        terms={
            "linear": EnergyTerm(lambda q, qd, aux: 0.5 * m * (qd[0] ** 2 + qd[1] ** 2)),
            "yaw": EnergyTerm(lambda q, qd, aux: 0.5 * i_z * qd[2] ** 2),
        },
        params={"m": m, "I_z": i_z},
    )


# --- approximate models -----------------------------------------------------

def _bounded_noise(delta: float, seed: int, n_features: int = 8) -> TermFn:
    rng = np.random.default_rng(seed)
    state: dict = {}

    def noise(q, q_dot, aux) -> float:
        x = np.concatenate([np.atleast_1d(q), np.atleast_1d(q_dot)]).astype(float)
        if "w" not in state or state["w"].shape[1] != x.size:
            state["w"] = rng.normal(size=(n_features, x.size))
            state["phase"] = rng.uniform(0, 2 * np.pi, size=n_features)
            state["coef"] = rng.uniform(-1, 1, size=n_features) / n_features
        return float(delta * np.clip(np.sum(state["coef"] * np.sin(state["w"] @ x + state["phase"])), -1, 1))

    return noise


def approximate_model(
    model: EnergyModel,
    omit: Iterable[str] = (),
    noise_delta: float = 0.0,
    sample_states: Iterable[tuple] | None = None,
    seed: int = 0,
) -> EnergyModel:
    """Reduced model with components dropped and bounded noise added.

    When ``sample_states`` (``(q, q_dot, aux)`` tuples) are supplied, the
    sup-norm potential gap to the full model over those states is stored in
    ``approx_error``.
    """
    omit = list(omit)
    missing = [name for name in omit if name not in model.terms]
    if missing:
        raise KeyError(f"cannot omit unknown components {missing}")
    kept = {k: v for k, v in model.terms.items() if k not in omit}
    if not kept:
        raise ValueError("cannot omit every energy component")
    reduced = replace(model, terms=kept,
                      noise=_bounded_noise(noise_delta, seed) if noise_delta > 0 else _zero_noise)
    if sample_states is not None:
        gap = 0.0
        for q, q_dot, aux in sample_states:
            gap = max(gap, abs(energy_potential(model, q, q_dot, aux) - energy_potential(reduced, q, q_dot, aux)))
        reduced = replace(reduced, approx_error=gap)
    return reduced


def relative_approx_error(model: EnergyModel, approx: EnergyModel, sample_states) -> float:
    """eps = sup|Phi* - Phi_hat| / sup|Phi*| over the sampled states."""
    states = list(sample_states)
    full = np.array([energy_potential(model, *s) for s in states])
    red = np.array([energy_potential(approx, *s) for s in states])
    scale = float(np.max(np.abs(full)))
    if scale == 0:
        raise ValueError("full potential vanishes on every sampled state")
    return float(np.max(np.abs(full - red)) / scale)


# --- traces and the Lyapunov heuristic ---------------------------------------

@dataclass
class EnergyTrace:
    energy: np.ndarray
    d_energy: np.ndarray
    d_phi: np.ndarray
    edot_dt: np.ndarray
    lyapunov: np.ndarray | None = None
    dt: float = 0.02

    @classmethod
    def from_series(cls, energy, edot, dt: float, lyapunov=None) -> "EnergyTrace":
        """Build from E at T+1 visited states and dE/dt at the first T of them."""
        e = np.asarray(energy, dtype=float)
        edot = np.asarray(edot, dtype=float)
        if edot.shape[0] != e.shape[0] - 1:
            raise ValueError("need one energy-rate sample per transition")
        d_e = np.diff(e)
        return cls(energy=e, d_energy=d_e, d_phi=-d_e, edot_dt=edot * dt,
                   lyapunov=None if lyapunov is None else np.asarray(lyapunov, dtype=float), dt=dt)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "E", "dE", "dPhi", "Edot_dt"])
            for i in range(self.d_energy.size):
                w.writerow([f"{i * self.dt:.6f}", repr(self.energy[i]), repr(self.d_energy[i]),
                            repr(self.d_phi[i]), repr(self.edot_dt[i])])


@dataclass
class LyapunovReport:
    residual_max: float
    sign_agreement: float
    monotone_fraction: float | None
    flags: list[str] = field(default_factory=list)


def lyapunov_heuristic_check(trace: EnergyTrace, dt: float | None = None,
                             exclude: Iterable[int] = ()) -> LyapunovReport:
    """Discretisation residual of dE ~ Edot*dt and sign consistency of dPhi.

    ``exclude`` lists step indices (contact events) left out of the residual.
    """
    if trace.energy.size < 2:
        raise ValueError("trace needs at least 2 states")
    if dt is not None and not math.isclose(dt, trace.dt):
        raise ValueError(f"dt={dt} does not match trace dt={trace.dt}")
    mask = np.ones(trace.d_energy.size, dtype=bool)
    mask[list(exclude)] = False
    resid = np.abs(trace.d_energy - trace.edot_dt)[mask]
    flags: list[str] = []
    nz = trace.d_energy != 0
    agree = float(np.mean(np.sign(trace.d_phi[nz]) == -np.sign(trace.d_energy[nz]))) if nz.any() else 1.0
    mono = None
    if trace.lyapunov is not None:
        dl = np.diff(trace.lyapunov)
        if np.all(dl == 0):
            flags.append("lyapunov candidate constant: monotonicity undefined")
        else:
            mono = float(np.mean(dl <= 0))
    else:
        if np.all(trace.d_energy == 0):
            flags.append("energy constant: monotonicity undefined")
    return LyapunovReport(residual_max=float(resid.max()) if resid.size else 0.0,
                          sign_agreement=agree, monotone_fraction=mono, flags=flags)


def vehicle_lyapunov(r, beta, i_z: float = 4116.0, k_beta: float | None = None):
    """L = 0.5 I_z r^2 + k_beta beta^2 with k_beta defaulting to I_z / 2."""
    k = i_z / 2.0 if k_beta is None else k_beta
    r = np.asarray(r, dtype=float)
    beta = np.asarray(beta, dtype=float)
    return 0.5 * i_z * r**2 + k * beta**2


def numeric_hessian(fn: Callable[[np.ndarray], float], q, h: float = 1e-4) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = q.size
    H = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = h
            ej[j] = h
            H[i, j] = (fn(q + ei + ej) - fn(q + ei - ej) - fn(q - ei + ej) + fn(q - ei - ej)) / (4 * h * h)
    return 0.5 * (H + H.T)


def numeric_gradient(fn: Callable[[np.ndarray], float], q, h: float = 1e-6) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    g = np.zeros_like(q)
    for i in range(q.size):
        e = np.zeros_like(q)
        e[i] = h
        g[i] = (fn(q + e) - fn(q - e)) / (2 * h)
    return g
