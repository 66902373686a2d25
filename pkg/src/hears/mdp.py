"""Finite tabular MDPs and exact solvers.

These solvers are the ground-truth oracles for every shaping check in the
package: value iteration for V*/Q*, a direct linear solve for policy
evaluation, and a seeded random instance generator.

Arrays follow the layout ``P[s, a, s']`` and ``R[s, a, s']``. Terminal states
are absorbing self-loops with zero reward so the infinite-horizon formulas
apply uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PROB_TOL = 1e-9


class ConvergenceError(RuntimeError):
    """Raised when an iterative solver exhausts its budget."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class TabularMdp:
    transition: np.ndarray
    reward: np.ndarray
    gamma: float
    terminal: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        R = np.asarray(self.reward, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {P.shape}")
        if R.shape != P.shape:
            raise ValueError(f"reward shape {R.shape} does not match transition {P.shape}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if np.any(P < -PROB_TOL) or np.any(P > 1.0 + PROB_TOL):
            raise ValueError("transition probabilities must lie in [0, 1]")
        if np.max(np.abs(P.sum(axis=2) - 1.0)) > PROB_TOL:
            raise ValueError("transition rows must sum to 1")
        if not np.all(np.isfinite(R)):
            raise ValueError("reward contains non-finite entries")
        term = np.zeros(P.shape[0], dtype=bool) if self.terminal is None else np.asarray(self.terminal, dtype=bool)
        if term.shape != (P.shape[0],):
            raise ValueError("terminal mask must have one entry per state")
        for s in np.flatnonzero(term):
            if not np.allclose(P[s, :, s], 1.0, atol=PROB_TOL) or np.any(R[s] != 0.0):
                raise ValueError(f"terminal state {s} must be a zero-reward self-loop")
        P.setflags(write=False)
        R.setflags(write=False)
        term.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", R)
        object.__setattr__(self, "terminal", term)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def expected_reward(self) -> np.ndarray:
        """r(s, a) = sum_s' P[s, a, s'] R[s, a, s']."""
        return np.einsum("ijk,ijk->ij", self.transition, self.reward)

    def with_reward(self, reward: np.ndarray) -> "TabularMdp":
        return TabularMdp(self.transition, reward, self.gamma, self.terminal)


@dataclass(frozen=True)
class ValueTable:
    v: np.ndarray
    q: np.ndarray
    residual: float = 0.0
    iterations: int = 0


def q_from_v(mdp: TabularMdp, v: np.ndarray) -> np.ndarray:
    return mdp.expected_reward() + mdp.gamma * mdp.transition @ v


def bellman_residual(mdp: TabularMdp, v: np.ndarray) -> float:
    """Sup-norm of T v - v for the optimality operator T."""
    return float(np.max(np.abs(q_from_v(mdp, v).max(axis=1) - v)))


def value_iteration(mdp: TabularMdp, tol: float = 1e-10, max_iters: int = 100_000) -> ValueTable:
    """Solve the Bellman optimality equation by successive approximation.

    The returned ``v`` is the last backup, so ``v == q.max(axis=1)`` holds
    exactly and its Bellman residual is at most ``gamma * tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    r = mdp.expected_reward()
    P = mdp.transition
    v = np.zeros(mdp.n_states)
    residual = np.inf
    for it in range(1, max_iters + 1):
        q = r + mdp.gamma * (P @ v)
        v_new = q.max(axis=1)
        residual = float(np.max(np.abs(v_new - v)))
        v = v_new
        if residual <= tol:
            return ValueTable(v=v, q=q, residual=residual, iterations=it)
    raise ConvergenceError("value iteration did not converge", residual, max_iters)


def greedy_policy(values: ValueTable | np.ndarray, atol: float = 0.0) -> np.ndarray:
    """Argmax over actions; ties go to the lowest action index.

    ``atol`` widens what counts as a tie, which keeps comparisons between
    solves of algebraically equivalent MDPs stable against rounding.
    """
    q = values.q if isinstance(values, ValueTable) else np.asarray(values, dtype=float)
    if q.ndim == 1:
        q = q[None, :]
    best = q.max(axis=1, keepdims=True)
    return np.argmax(q >= best - atol, axis=1)


def _policy_matrix(mdp: TabularMdp, policy: np.ndarray) -> np.ndarray:
    pi = np.asarray(policy)
    if pi.ndim == 1:
        if pi.shape[0] != mdp.n_states:
            raise ValueError("deterministic policy must assign one action per state")
        mat = np.zeros((mdp.n_states, mdp.n_actions))
        mat[np.arange(mdp.n_states), pi.astype(int)] = 1.0
        return mat
    if pi.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(f"stochastic policy must have shape (S, A), got {pi.shape}")
    if np.max(np.abs(pi.sum(axis=1) - 1.0)) > PROB_TOL:
        raise ValueError("policy rows must sum to 1")
    return pi.astype(float)


def evaluate_policy(
    mdp: TabularMdp,
    policy: np.ndarray,
    tol: float = 1e-10,
    reward: np.ndarray | None = None,
) -> np.ndarray:
    """Exact state values of ``policy`` via a linear solve.

    ``policy`` is either an action index per state or an (S, A) matrix of
    action probabilities. ``reward`` optionally replaces the MDP's reward
    tensor (used to evaluate discounted action-energy, for instance).
    """
    pi = _policy_matrix(mdp, policy)
    R = mdp.reward if reward is None else np.asarray(reward, dtype=float)
    if R.shape != mdp.transition.shape:
        raise ValueError("reward override must match transition shape")
    r_pi = np.einsum("sa,sak,sak->s", pi, mdp.transition, R)
    P_pi = np.einsum("sa,sak->sk", pi, mdp.transition)
    A = np.eye(mdp.n_states) - mdp.gamma * P_pi
    v = np.linalg.solve(A, r_pi)
    residual = float(np.max(np.abs(r_pi + mdp.gamma * P_pi @ v - v)))
    if not np.isfinite(residual) or residual > tol * max(1.0, float(np.max(np.abs(v)))):
        raise ConvergenceError("policy evaluation failed to reach tolerance", residual, 1)
    return v


def random_mdp(
    seed: int,
    n_states: int,
    n_actions: int,
    reward_scale: float = 1.0,
    gamma: float = 0.9,
    n_terminal: int = 0,
    concentration: float = 1.0,
) -> TabularMdp:
    """Seeded random MDP with Dirichlet transition rows and uniform rewards.

    The last ``n_terminal`` states are made absorbing.
    """
    if n_states < 2 or n_actions < 2:
        raise ValueError("need at least 2 states and 2 actions")
    if not 0 <= n_terminal < n_states:
        raise ValueError("n_terminal must leave at least one live state")
    rng = np.random.default_rng(seed)
    P = rng.gamma(concentration, size=(n_states, n_actions, n_states))
    P /= P.sum(axis=2, keepdims=True)
    R = rng.uniform(-reward_scale, reward_scale, size=(n_states, n_actions, n_states))
    terminal = np.zeros(n_states, dtype=bool)
    if n_terminal:
        terminal[n_states - n_terminal:] = True
        for s in np.flatnonzero(terminal):
            P[s] = 0.0
            P[s, :, s] = 1.0
            R[s] = 0.0
    return TabularMdp(P, R, gamma, terminal)


def start_value(v: np.ndarray, start_dist: np.ndarray | None = None) -> float:
    """J(pi) = E_{s0 ~ d0}[V(s0)]; uniform d0 by default."""
    if start_dist is None:
        return float(np.mean(v))
    return float(np.dot(start_dist, v))
