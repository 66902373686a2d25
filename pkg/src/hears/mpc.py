"""Linear tracking MPC solved by projected gradient on the condensed QP.

Decision variable: the first ``n_c`` inputs, with ``u_k = u_{n_c-1}`` for
``k >= n_c`` (move blocking). Predicted outputs are ``y_k = C x_{k+1}`` for
``k = 0 .. n_p-1``. Cost::

    sum_k |y_k - y_ref_k|^2_{Q_k} + sum_{k<n_c} |u_k - u_{k-1}|^2_{R_k}

with ``u_{-1}`` the previously applied input.

The solver works on the input increments ``v_k = u_k - u_{k-1}``. The rate
bound is then a box on ``v``, and the input box on the applied first input
folds into the box on ``v_0``, so every projection is an exact clip. The
input box at later predicted steps is not projected: a predicted sequence
that leaves it loses those steps in the feasibility ratio, and the next
solve enforces the box on whatever input is actually applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import expm

from hears.envs.tires import VehicleParams

V_MIN_LINEARIZE = 0.5


@dataclass(frozen=True)
class MpcProblem:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    n_p: int = 10
    n_c: int = 5
    q: np.ndarray | None = None  # (n_y, n_y) or (n_p, n_y, n_y)
    r: np.ndarray | None = None  # (n_u, n_u) or (n_c, n_u, n_u)
    u_min: np.ndarray | None = None
    u_max: np.ndarray | None = None
    du_max: np.ndarray | None = None
    y_tol: np.ndarray | None = None
    y_max: np.ndarray | None = None
    max_iters: int = 300
    tol: float = 1e-4

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.atleast_2d(np.asarray(self.b, dtype=float))
        c = np.atleast_2d(np.asarray(self.c, dtype=float))
        nx, nu, ny = a.shape[0], b.shape[1], c.shape[0]
        if a.shape != (nx, nx) or b.shape[0] != nx or c.shape[1] != nx:
            raise ValueError("inconsistent model matrices")
        if not 1 <= self.n_c <= self.n_p:
            raise ValueError("need 1 <= n_c <= n_p")
        q = np.eye(ny) if self.q is None else np.asarray(self.q, dtype=float)
        r = np.eye(nu) if self.r is None else np.asarray(self.r, dtype=float)
        q = np.broadcast_to(q, (self.n_p, ny, ny)).copy()
        r = np.broadcast_to(r, (self.n_c, nu, nu)).copy()
        for w in list(q) + list(r):
            if np.min(np.linalg.eigvalsh(0.5 * (w + w.T))) < -1e-10:
                raise ValueError("stage weights must be PSD")
        u_min = np.full(nu, -np.inf) if self.u_min is None else np.asarray(self.u_min, dtype=float)
        u_max = np.full(nu, np.inf) if self.u_max is None else np.asarray(self.u_max, dtype=float)
        if np.any(u_min >= u_max):
            raise ValueError("need u_min < u_max elementwise")
        du = np.full(nu, np.inf) if self.du_max is None else np.asarray(self.du_max, dtype=float)
        if np.any(du <= 0):
            raise ValueError("rate bound must be positive")
        y_tol = np.full(ny, np.inf) if self.y_tol is None else np.asarray(self.y_tol, dtype=float)
        y_max = np.full(ny, np.inf) if self.y_max is None else np.asarray(self.y_max, dtype=float)
        for name, val in (("a", a), ("b", b), ("c", c), ("q", q), ("r", r), ("u_min", u_min),
                          ("u_max", u_max), ("du_max", du), ("y_tol", y_tol), ("y_max", y_max)):
            object.__setattr__(self, name, val)

    @property
    def n_x(self) -> int:
        return self.a.shape[0]

    @property
    def n_u(self) -> int:
        return self.b.shape[1]

    @property
    def n_y(self) -> int:
        return self.c.shape[0]

    @cached_property
    def _condensed(self):
        nx, nu, ny, n_p, n_c = self.n_x, self.n_u, self.n_y, self.n_p, self.n_c
        # free response y_k = C A^{k+1} x0
        phi = np.zeros((n_p * ny, nx))
        gamma = np.zeros((n_p * ny, n_p * nu))
        powers = [np.eye(nx)]
        for _ in range(n_p):
            powers.append(self.a @ powers[-1])
        for k in range(n_p):
            phi[k * ny:(k + 1) * ny] = self.c @ powers[k + 1]
            for j in range(k + 1):
                gamma[k * ny:(k + 1) * ny, j * nu:(j + 1) * nu] = self.c @ powers[k - j] @ self.b
        blocking = np.zeros((n_p * nu, n_c * nu))
        for k in range(n_p):
            j = min(k, n_c - 1)
            blocking[k * nu:(k + 1) * nu, j * nu:(j + 1) * nu] = np.eye(nu)
        g = gamma @ blocking
        diff = np.eye(n_c * nu) - np.eye(n_c * nu, k=-nu)
        first = np.zeros((n_c * nu, nu))
        first[:nu] = np.eye(nu)
        q_bar = _block_diag(self.q)
        r_bar = _block_diag(self.r)
        hessian = 2.0 * (g.T @ q_bar @ g + diff.T @ r_bar @ diff)
        hessian = 0.5 * (hessian + hessian.T)
        # u = 1 (x) u_prev + cumsum @ v
        cumsum = np.kron(np.tril(np.ones((n_c, n_c))), np.eye(nu))
        h_inc = cumsum.T @ hessian @ cumsum
        h_inc = 0.5 * (h_inc + h_inc.T)
        return {"phi": phi, "g": g, "diff": diff, "first": first, "q_bar": q_bar, "r_bar": r_bar,
                "hessian": hessian, "blocking": blocking, "cumsum": cumsum, "h_inc": h_inc,
                "lipschitz": _power_iteration(h_inc)}


def _block_diag(blocks: np.ndarray) -> np.ndarray:
    n, k, _ = blocks.shape
    out = np.zeros((n * k, n * k))
    for i in range(n):
        out[i * k:(i + 1) * k, i * k:(i + 1) * k] = blocks[i]
    return out


def _power_iteration(h: np.ndarray, iters: int = 200, margin: float = 1.05) -> float:
    """Largest eigenvalue of a PSD matrix, inflated by a safety margin."""
    v = np.ones(h.shape[0]) / math.sqrt(h.shape[0])
    lam = 0.0
    for _ in range(iters):
        w = h @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 1.0
        v = w / norm
        lam = float(v @ h @ v)
    return max(lam * margin, 1e-12)


@dataclass
class MpcReport:
    u0: np.ndarray
    u_sequence: np.ndarray
    predicted_outputs: np.ndarray
    feasibility_ratio: float
    iterations: int
    converged: bool
    cost: float
    y_ref: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mode: str = "qp"
    y_exec: np.ndarray | None = None


def _project_box(u: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return np.minimum(np.maximum(u, lo), hi)


def increment_bounds(problem: MpcProblem, u_prev: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Box on the (n_c, n_u) increments: the rate bound, tightened at step 0 by the input box."""
    shape = (problem.n_c, problem.n_u)
    lo = np.broadcast_to(-problem.du_max, shape).copy()
    hi = np.broadcast_to(problem.du_max, shape).copy()
    lo[0] = np.maximum(lo[0], problem.u_min - u_prev)
    hi[0] = np.minimum(hi[0], problem.u_max - u_prev)
    return lo, hi


def _inputs_feasible(problem: MpcProblem, seq: np.ndarray, u_prev: np.ndarray, atol: float = 1e-9) -> np.ndarray:
    """Per-step input-constraint satisfaction over a full (n_p, n_u) sequence."""
    in_box = np.all((seq >= problem.u_min - atol) & (seq <= problem.u_max + atol), axis=1)
    prev = np.vstack([u_prev[None, :], seq[:-1]])
    in_rate = np.all(np.abs(seq - prev) <= problem.du_max + atol, axis=1)
    return in_box & in_rate


def feasibility_ratio(problem: MpcProblem, u_full: np.ndarray, y_pred: np.ndarray, y_ref: np.ndarray,
                      u_prev: np.ndarray) -> float:
    """Fraction of prediction steps meeting input, output-bound and tracking-tolerance constraints."""
    ok = _inputs_feasible(problem, u_full, u_prev)
    ok &= np.all(np.abs(y_pred) <= problem.y_max + 1e-12, axis=1)
    ok &= np.all(np.abs(y_pred - y_ref) <= problem.y_tol + 1e-12, axis=1)
    return float(np.mean(ok))


def solve(problem: MpcProblem, x0, y_ref, u_prev=None) -> MpcReport:
    x0 = np.asarray(x0, dtype=float).ravel()
    nu, ny, n_p, n_c = problem.n_u, problem.n_y, problem.n_p, problem.n_c
    y_ref = np.asarray(y_ref, dtype=float)
    if y_ref.ndim == 1:
        y_ref = np.broadcast_to(y_ref, (n_p, ny))
    if y_ref.shape[0] < n_p or y_ref.shape[1] != ny:
        raise ValueError(f"reference needs shape (>= {n_p}, {ny}), got {y_ref.shape}")
    y_ref = y_ref[:n_p]
    u_prev = np.zeros(nu) if u_prev is None else np.asarray(u_prev, dtype=float).ravel()
    u_prev = _project_box(u_prev, problem.u_min, problem.u_max)

    cz = problem._condensed
    h, g_mat, cum = cz["hessian"], cz["g"], cz["cumsum"]
    resid0 = cz["phi"] @ x0 - y_ref.ravel()
    d0 = cz["first"] @ u_prev
    lin = 2.0 * (g_mat.T @ cz["q_bar"] @ resid0 - cz["diff"].T @ cz["r_bar"] @ d0)
    const = float(resid0 @ cz["q_bar"] @ resid0 + d0 @ cz["r_bar"] @ d0)
    u_base = np.tile(u_prev, n_c)
    h_v = cz["h_inc"]
    lin_v = cum.T @ (h @ u_base + lin)
    lo, hi = (b.ravel() for b in increment_bounds(problem, u_prev))

    def cost(z: np.ndarray) -> float:
        return float(0.5 * z @ h @ z + lin @ z + const)

    def cost_v(v: np.ndarray) -> float:
        return cost(u_base + cum @ v)

    def project(v: np.ndarray) -> np.ndarray:
        return np.minimum(np.maximum(v, lo), hi)

    iterations = 0
    converged = False
    try:
        v_free = np.linalg.solve(h_v, -lin_v)
    except np.linalg.LinAlgError:
        v_free = None
    if v_free is not None and np.all((v_free >= lo) & (v_free <= hi)):
        v = v_free
        converged = True
    else:
        # monotone accelerated projected gradient from the clipped free optimum
        step = 1.0 / cz["lipschitz"]
        v = project(np.zeros_like(lo) if v_free is None else v_free)
        hv = h_v @ v
        f_v = 0.5 * v @ hv + lin_v @ v
        w, t = v.copy(), 1.0
        scale = max(1.0, float(np.linalg.norm(lin_v)))
        for iterations in range(1, problem.max_iters + 1):
            cand = project(w - step * (h_v @ w + lin_v))
            h_cand = h_v @ cand
            f_c = 0.5 * cand @ h_cand + lin_v @ cand
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            v_prev = v
            if f_c <= f_v:
                v, hv, f_v = cand, h_cand, f_c
            w = v + (t / t_next) * (cand - v) + ((t - 1.0) / t_next) * (v - v_prev)
            t = t_next
            # gradient mapping at the best iterate: zero exactly at the constrained optimum
            g_map = (v - project(v - step * (hv + lin_v))) / step
            if math.sqrt(g_map @ g_map) <= problem.tol * scale:
                converged = True
                break

    u_block = (u_base + cum @ v).reshape(n_c, nu)
    # hard guarantee on the applied input
    u0 = _project_box(u_block[0], np.maximum(problem.u_min, u_prev - problem.du_max),
                      np.minimum(problem.u_max, u_prev + problem.du_max))
    u_block[0] = u0
    u_full = (cz["blocking"] @ u_block.ravel()).reshape(n_p, nu)
    y_pred = (cz["phi"] @ x0 + g_mat @ u_block.ravel()).reshape(n_p, ny)
    f = feasibility_ratio(problem, u_full, y_pred, y_ref, u_prev)
    return MpcReport(u0=u0, u_sequence=u_full, predicted_outputs=y_pred, feasibility_ratio=f,
                     iterations=iterations, converged=converged, cost=cost(u_block.ravel()), y_ref=y_ref.copy())


def continuous_vehicle_model(params: VehicleParams, vx: float, cf: float | None = None,
                             cr: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """State (v_y, r), inputs (delta [rad], M_z [N m])."""
    if vx <= V_MIN_LINEARIZE:
        raise ValueError(f"cannot linearise below v_x = {V_MIN_LINEARIZE} m/s (got {vx})")
    c_f, c_r = params.cornering_stiffness()
    cf = c_f if cf is None else cf
    cr = c_r if cr is None else cr
    m, iz, a, b = params.m, params.i_z, params.a, params.b
    A = np.array([
        [-(cf + cr) / (m * vx), (-a * cf + b * cr) / (m * vx) - vx],
        [(-a * cf + b * cr) / (iz * vx), -(a * a * cf + b * b * cr) / (iz * vx)],
    ])
    B = np.array([[cf / m, 0.0], [a * cf / iz, 1.0 / iz]])
    return A, B


def discretize(a: np.ndarray, b: np.ndarray, dt: float, method: str = "expm") -> tuple[np.ndarray, np.ndarray]:
    n, m = b.shape
    if method == "expm":
        block = np.zeros((n + m, n + m))
        block[:n, :n] = a
        block[:n, n:] = b
        e = expm(block * dt)
        return e[:n, :n], e[:n, n:]
    if method == "bilinear":
        eye = np.eye(n)
        inv = np.linalg.inv(eye - 0.5 * dt * a)
        return inv @ (eye + 0.5 * dt * a), inv @ b * dt
    raise ValueError(f"unknown discretisation {method!r}")


def linearize_vehicle(params: VehicleParams, vx: float, dt: float = 0.02, method: str = "expm",
                      cf: float | None = None, cr: float | None = None,
                      input_scale=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Discrete (A_d, B_d, C) with outputs y = (beta, r) ~ (v_y / v_x, r).

    ``input_scale`` multiplies the input columns so the MPC can work in
    normalised units.
    """
    A, B = continuous_vehicle_model(params, vx, cf, cr)
    if input_scale is not None:
        B = B * np.asarray(input_scale, dtype=float)[None, :]
    Ad, Bd = discretize(A, B, dt, method)
    C = np.diag([1.0 / vx, 1.0])
    return Ad, Bd, C
