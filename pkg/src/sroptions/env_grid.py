"""Deterministic grid-world MDP.

Maps are ASCII text: '#' is a wall, '.' a free cell, and 'S'/'G' are accepted
as free cells (start and goal come from the task, not the map). Free cells are
indexed row-major, so state ``i`` is the i-th free cell scanning top to bottom,
left to right.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np


class Action(IntEnum):
    NOOP = 0
    LEFT = 1
    RIGHT = 2
    UP = 3
    DOWN = 4


N_ACTIONS = len(Action)

# (drow, dcol) per action, in Action order.
_DELTAS = ((0, 0), (0, -1), (0, 1), (-1, 0), (1, 0))

_FREE_CHARS = frozenset(".SG")


class MapError(ValueError):
    pass


@dataclass(frozen=True)
class GridMap:
    width: int
    height: int
    blocked: np.ndarray  # (height, width) bool
    name: str = ""
    cells: tuple[tuple[int, int], ...] = field(init=False, repr=False)
    index: np.ndarray = field(init=False, repr=False)  # (height, width) int, -1 on walls
    next_state: np.ndarray = field(init=False, repr=False)  # (n_states, 5) int

    def __post_init__(self):
        blocked = np.asarray(self.blocked, dtype=bool)
        if blocked.shape != (self.height, self.width):
            raise MapError(f"blocked mask has shape {blocked.shape}, expected {(self.height, self.width)}")
        if blocked.all():
            raise MapError("map has no free cells")
        blocked = blocked.copy()
        blocked.setflags(write=False)
        object.__setattr__(self, "blocked", blocked)

        cells = tuple((int(r), int(c)) for r, c in zip(*np.nonzero(~blocked)))
        index = np.full((self.height, self.width), -1, dtype=np.int64)
        for i, (r, c) in enumerate(cells):
            index[r, c] = i
        index.setflags(write=False)

        nxt = np.empty((len(cells), N_ACTIONS), dtype=np.int64)
        for i, (r, c) in enumerate(cells):
            for a, (dr, dc) in enumerate(_DELTAS):
                rr, cc = r + dr, c + dc
                if 0 <= rr < self.height and 0 <= cc < self.width and not blocked[rr, cc]:
                    nxt[i, a] = index[rr, cc]
                else:
                    nxt[i, a] = i
        nxt.setflags(write=False)

        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "index", index)
        object.__setattr__(self, "next_state", nxt)

    @property
    def n_states(self) -> int:
        return len(self.cells)

    def state_of(self, row: int, col: int) -> int:
        if not (0 <= row < self.height and 0 <= col < self.width) or self.blocked[row, col]:
            raise MapError(f"cell ({row}, {col}) is not a free cell")
        return int(self.index[row, col])

    def cell_of(self, s: int) -> tuple[int, int]:
        self._check_state(s)
        return self.cells[s]

    def _check_state(self, s: int) -> None:
        if not (0 <= s < self.n_states):
            raise IndexError(f"state {s} out of range [0, {self.n_states})")

    def to_text(self) -> str:
        return "\n".join("".join("#" if b else "." for b in row) for row in self.blocked)


def parse_map(text: str, name: str = "") -> GridMap:
    """Parse an ASCII map. Blank leading/trailing lines are ignored."""
    lines = [ln.rstrip("\r") for ln in text.strip("\n").split("\n")]
    lines = [ln for ln in lines if ln.strip() != ""]
    if not lines:
        raise MapError("empty map")
    width = len(lines[0])
    for r, ln in enumerate(lines):
        if len(ln) != width:
            raise MapError(f"ragged map: row {r} has length {len(ln)}, expected {width}")
        bad = set(ln) - _FREE_CHARS - {"#"}
        if bad:
            raise MapError(f"unknown character(s) {sorted(bad)!r} in row {r}")
    blocked = np.array([[ch == "#" for ch in ln] for ln in lines], dtype=bool)
    return GridMap(width=width, height=len(lines), blocked=blocked, name=name)


def load_map(path: str | Path) -> GridMap:
    """Load a map from a file path, or a bundled map by name (e.g. ``"grid1"``)."""
    p = Path(path)
    if p.exists():
        return parse_map(p.read_text(), name=p.stem)
    name = str(path)
    res = resources.files("sroptions") / "maps" / f"{name}.txt"
    if res.is_file():
        return parse_map(res.read_text(), name=name)
    raise FileNotFoundError(f"no map file or bundled map named {path!r}")


def bundled_maps() -> list[str]:
    root = resources.files("sroptions") / "maps"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".txt"))


def step(grid: GridMap, s: int, a: int) -> int:
    """Next state after primitive action ``a``; walls and edges clamp."""
    grid._check_state(s)
    if not 0 <= int(a) < N_ACTIONS:
        raise ValueError(f"unknown action {a}")
    return int(grid.next_state[s, int(a)])


def uniform_policy(grid: GridMap) -> np.ndarray:
    return np.full((grid.n_states, N_ACTIONS), 1.0 / N_ACTIONS)


def transition_matrix(grid: GridMap, policy: np.ndarray | None = None) -> np.ndarray:
    """State-to-state transition matrix induced by ``policy`` (|S| x 5)."""
    if policy is None:
        policy = uniform_policy(grid)
    policy = np.asarray(policy, dtype=float)
    if policy.shape != (grid.n_states, N_ACTIONS):
        raise ValueError(f"policy must have shape {(grid.n_states, N_ACTIONS)}, got {policy.shape}")
    if (policy < 0).any() or not np.allclose(policy.sum(axis=1), 1.0, rtol=0, atol=1e-9):
        raise ValueError("policy rows must be nonnegative and sum to 1")
    n = grid.n_states
    P = np.zeros((n, n))
    rows = np.repeat(np.arange(n), N_ACTIONS)
    np.add.at(P, (rows, grid.next_state.ravel()), policy.ravel())
    return P


def neighbors(grid: GridMap, s: int) -> list[int]:
    """Distinct states one primitive move away from ``s`` (excluding ``s``)."""
    return sorted({int(t) for t in grid.next_state[s] if t != s})


def bfs_distances(grid: GridMap, source: int) -> np.ndarray:
    """Shortest-path step counts from ``source``; -1 for unreachable states."""
    dist = np.full(grid.n_states, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    while queue:
        s = queue.popleft()
        for t in grid.next_state[s]:
            if dist[t] < 0:
                dist[t] = dist[s] + 1
                queue.append(int(t))
    return dist


def all_pairs_distances(grid: GridMap) -> np.ndarray:
    return np.stack([bfs_distances(grid, s) for s in range(grid.n_states)])


def is_connected(grid: GridMap) -> bool:
    return bool((bfs_distances(grid, 0) >= 0).all())


@dataclass(frozen=True)
class TaskSpec:
    """A navigation task. ``start`` of None means uniform over free cells."""

    goal: int
    start: int | None = None
    goal_reward: float = 10.0
    step_reward: float = 0.0
    gamma: float = 0.99
    horizon: int | None = None

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must be in (0, 1), got {self.gamma}")
        if self.horizon is not None and self.horizon < 1:
            raise ValueError(f"horizon must be positive, got {self.horizon}")

    def validate(self, grid: GridMap) -> None:
        grid._check_state(self.goal)
        if self.start is not None:
            grid._check_state(self.start)

    def sample_start(self, grid: GridMap, rng: np.random.Generator) -> int:
        if self.start is not None:
            return self.start
        return int(rng.integers(grid.n_states))

    def reward(self, s_next: int) -> float:
        return self.goal_reward if s_next == self.goal else self.step_reward


@dataclass(frozen=True)
class Transition:
    """Outcome of one primitive action or one option execution.

    ``reward`` is the discounted sum of rewards collected over ``steps`` primitive
    steps; ``visited`` lists the states entered, in order.
    """

    state: int
    choice: int
    next_state: int
    reward: float
    done: bool
    steps: int
    visited: Sequence[int] = ()
    truncated: bool = False


def corner_states(grid: GridMap) -> tuple[int, int]:
    """(bottom-leftmost, top-rightmost) free states, used by the finite-horizon task."""
    rows = np.array([rc[0] for rc in grid.cells])
    cols = np.array([rc[1] for rc in grid.cells])
    bl = max(range(grid.n_states), key=lambda i: (rows[i], -cols[i]))
    tr = min(range(grid.n_states), key=lambda i: (rows[i], -cols[i]))
    return bl, tr
