"""Sparse-reward grid navigation with an exact tabular embedding."""

from __future__ import annotations

from collections import deque

import numpy as np

from hears.mdp import TabularMdp

# up, right, down, left
MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))


class GridNav:
    """Deterministic ``size x size`` grid; reward 1 on entering the goal.

    States are integer cell indices ``row * size + col``. Moves into walls
    or obstacles leave the agent in place.
    """

    name = "gridnav"
    n_actions = 4

    def __init__(self, size: int = 20, start=(0, 0), goal=None, obstacles=(), max_steps: int = 2000):
        self.size = size
        self.start = tuple(start)
        self.goal = tuple(goal) if goal is not None else (size - 1, size - 1)
        self.obstacles = frozenset(tuple(o) for o in obstacles)
        self.max_steps = max_steps
        if self.goal in self.obstacles or self.start in self.obstacles:
            raise ValueError("start and goal must be free cells")
        self.n_states = size * size
        self.start_index = self.index(*self.start)
        self.goal_index = self.index(*self.goal)
        self._next = self._build_table()
        self._dist = self._bfs_distances()

    def index(self, row: int, col: int) -> int:
        return row * self.size + col

    def cell(self, s: int) -> tuple[int, int]:
        return divmod(s, self.size)

    def _build_table(self) -> list[list[int]]:
        table = []
        for s in range(self.n_states):
            r, c = self.cell(s)
            row = []
            for dr, dc in MOVES:
                nr, nc = r + dr, c + dc
                if 0 <= nr < self.size and 0 <= nc < self.size and (nr, nc) not in self.obstacles:
                    row.append(self.index(nr, nc))
                else:
                    row.append(s)
            table.append(row)
        return table

    def _bfs_distances(self) -> np.ndarray:
        dist = np.full(self.n_states, np.inf)
        dist[self.goal_index] = 0
        queue = deque([self.goal_index])
        while queue:
            s = queue.popleft()
            for a in range(self.n_actions):
                # moves are reversible, so neighbours of s reach s in one step
                n = self._next[s][a]
                if dist[n] == np.inf:
                    dist[n] = dist[s] + 1
                    queue.append(n)
        return dist

    def shortest_distance(self, s: int) -> float:
        return float(self._dist[s])

    def task_potential(self, s: int) -> float:
        """Negative shortest-path distance to the goal (0 at the goal)."""
        d = self._dist[s]
        return -float(d) if np.isfinite(d) else -float(self.n_states)

    def potential_table(self) -> np.ndarray:
        return np.array([self.task_potential(s) for s in range(self.n_states)])

    def reset(self, rng: np.random.Generator | None = None) -> int:
        return self.start_index

    def step(self, s: int, a: int) -> tuple[int, float, bool]:
        if s == self.goal_index:
            return s, 0.0, True
        n = self._next[s][a]
        if n == self.goal_index:
            return n, 1.0, True
        return n, 0.0, False

    def step_rng(self, s: int, a: int, rng: np.random.Generator | None = None) -> tuple[int, float, bool]:
        return self.step(s, a)

    def to_mdp(self, gamma: float = 0.99) -> TabularMdp:
        S, A = self.n_states, self.n_actions
        P = np.zeros((S, A, S))
        R = np.zeros((S, A, S))
        for s in range(S):
            for a in range(A):
                n, r, _ = self.step(s, a)
                P[s, a, n] = 1.0
                R[s, a, n] = r
        terminal = np.zeros(S, dtype=bool)
        terminal[self.goal_index] = True
        P[self.goal_index] = 0.0
        P[self.goal_index, :, self.goal_index] = 1.0
        R[self.goal_index] = 0.0
        return TabularMdp(P, R, gamma, terminal)

    def optimal_start_value(self, gamma: float) -> float:
        d = self._dist[self.start_index]
        return gamma ** (d - 1)

    def greedy_rollout_value(self, policy, gamma: float, horizon: int | None = None) -> float:
        """Discounted return of a deterministic policy from the start cell."""
        horizon = horizon or 4 * self.n_states
        s = self.start_index
        for t in range(horizon):
            s, r, done = self.step(s, int(policy[s]))
            if done:
                return r * gamma**t
        return 0.0


class MdpEnv:
    """Sampling environment over an arbitrary :class:`TabularMdp`."""

    def __init__(self, mdp: TabularMdp, start_dist: np.ndarray | None = None, max_steps: int = 200):
        self.mdp = mdp
        self.n_states = mdp.n_states
        self.n_actions = mdp.n_actions
        self.start_dist = (np.full(mdp.n_states, 1.0 / mdp.n_states) if start_dist is None
                           else np.asarray(start_dist, dtype=float))
        self.max_steps = max_steps
        self._cdf = np.cumsum(mdp.transition, axis=2)

    def reset(self, rng: np.random.Generator) -> int:
        return int(rng.choice(self.n_states, p=self.start_dist))

    def step_rng(self, s: int, a: int, rng: np.random.Generator) -> tuple[int, float, bool]:
        u = rng.random()
        n = int(np.searchsorted(self._cdf[s, a], u, side="right"))
        n = min(n, self.n_states - 1)
        return n, float(self.mdp.reward[s, a, n]), bool(self.mdp.terminal[n])
