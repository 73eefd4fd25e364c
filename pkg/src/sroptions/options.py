"""Options that hill-climb a fixed per-state signal.

For successor options the signal is the landmark's SR row, giving the reward
psi_g(s') - psi_g(s). The same machinery trains eigen-options with a Laplacian
eigenvector as the signal. An option may start anywhere and terminates where
its own value function is nonpositive.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .env_grid import N_ACTIONS, GridMap

TERMINATION_TOL = 1e-9


@dataclass(frozen=True)
class PseudoReward:
    """Frozen copy of the signal an option climbs (an SR row or eigenvector)."""

    signal: np.ndarray

    def __post_init__(self):
        sig = np.array(self.signal, dtype=float)
        sig.setflags(write=False)
        object.__setattr__(self, "signal", sig)

    def __call__(self, s: int, s_next: int) -> float:
        return float(self.signal[s_next] - self.signal[s])


def pseudo_reward(pr: PseudoReward, s: int, s_next: int) -> float:
    return pr(s, s_next)


def feature_pseudo_reward(goal_features: np.ndarray, phi_s: np.ndarray, phi_next: np.ndarray) -> float:
    """Feature-space form goal . (phi(s') - phi(s)); equals the tabular reward for one-hot phi."""
    return float(np.dot(goal_features, phi_next - phi_s))


@dataclass
class Option:
    option_id: int
    goal: int | None
    q: np.ndarray  # (n_states, 5)
    reward: PseudoReward
    max_duration: int
    trained: bool = True
    kind: str = "sr"
    _policy: np.ndarray = field(init=False, repr=False)
    _beta: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        q.setflags(write=False)
        self.q = q
        self._policy = q.argmax(axis=1)
        self._beta = q.max(axis=1) <= TERMINATION_TOL
        self._policy.setflags(write=False)
        self._beta.setflags(write=False)

    @property
    def n_states(self) -> int:
        return self.q.shape[0]

    @property
    def values(self) -> np.ndarray:
        return self.q.max(axis=1)

    @property
    def policy(self) -> np.ndarray:
        """Greedy intra-option action per state (lowest action index on ties)."""
        return self._policy

    @property
    def termination(self) -> np.ndarray:
        """beta(s) as a bool array: True where V(s) <= 0."""
        return self._beta

    @property
    def initiation(self) -> np.ndarray:
        return np.ones(self.n_states, dtype=bool)

    def termination_states(self) -> np.ndarray:
        return np.flatnonzero(self._beta)


def default_option_budget(grid: GridMap) -> int:
    return max(200_000, 2_000 * grid.n_states)


def train_option(
    grid: GridMap,
    pr: PseudoReward,
    budget: int,
    rng: np.random.Generator,
    alpha: float = 0.1,
    epsilon: float = 0.1,
    gamma: float = 0.99,
    episode_cap: int | None = None,
    start_states: Sequence[int] | None = None,
    option_id: int = 0,
    goal: int | None = None,
    max_duration: int | None = None,
    kind: str = "sr",
) -> Option:
    """Epsilon-greedy tabular Q-learning on the pseudo-reward.

    Episodes restart from a uniformly random state in ``start_states`` (default
    all states) and end after entering a state whose current value is <= 0, or
    after ``episode_cap`` steps (default |S|). Targets always bootstrap: the
    termination rule ends episodes, it does not truncate the value.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    n = grid.n_states
    sig = pr.signal.tolist()
    nxt = grid.next_state.tolist()
    cap = episode_cap or n
    starts = list(range(n)) if start_states is None else [int(s) for s in start_states]
    q = [[0.0] * N_ACTIONS for _ in range(n)]

    explore = (rng.random(budget) < epsilon).tolist()
    rand_a = rng.integers(N_ACTIONS, size=budget).tolist()
    tie_u = rng.random(budget).tolist()
    t = 0
    while t < budget:
        s = starts[int(rng.integers(len(starts)))]
        for _ in range(cap):
            row = q[s]
            if explore[t]:
                a = rand_a[t]
            else:
                best = max(row)
                ties = [i for i in range(N_ACTIONS) if row[i] == best]
                a = ties[int(tie_u[t] * len(ties))]
            s1 = nxt[s][a]
            v1 = max(q[s1])
            row[a] += alpha * (sig[s1] - sig[s] + gamma * v1 - row[a])
            s = s1
            t += 1
            if t >= budget or v1 <= TERMINATION_TOL:
                break
    return Option(option_id, goal, np.array(q), pr, max_duration or n, True, kind)


@dataclass(frozen=True)
class OptionRun:
    terminal_state: int
    steps: int
    visited: list[int]
    truncated: bool = False
    hit_stop: bool = False


def execute_option(
    grid: GridMap, opt: Option, s: int, stop_at: int | None = None, max_steps: int | None = None
) -> OptionRun:
    """Follow the option's greedy policy from ``s`` until beta(s) = 1.

    Stops early on entering ``stop_at`` (the task goal). ``max_steps`` caps the
    run below ``opt.max_duration`` (e.g. a remaining episode horizon); hitting
    either cap returns a truncated run rather than raising.
    """
    if not opt.trained:
        raise ValueError("option has not been trained")
    limit = opt.max_duration if max_steps is None else min(opt.max_duration, max_steps)
    beta, pol, nxt = opt.termination, opt.policy, grid.next_state
    visited: list[int] = []
    for _ in range(limit):
        if beta[s]:
            return OptionRun(s, len(visited), visited)
        s = int(nxt[s, pol[s]])
        visited.append(s)
        if s == stop_at:
            return OptionRun(s, len(visited), visited, hit_stop=True)
    return OptionRun(s, len(visited), visited, truncated=not beta[s])


def build_sr_options(
    grid: GridMap,
    psi: np.ndarray,
    goals: Sequence[int],
    rng: np.random.Generator,
    budget: int | None = None,
    **train_kw,
) -> list[Option]:
    """One option per landmark state, each climbing that landmark's SR row."""
    budget = budget or default_option_budget(grid)
    return [
        train_option(grid, PseudoReward(psi[g]), budget, rng, option_id=i, goal=int(g), **train_kw)
        for i, g in enumerate(goals)
    ]


def save_options(options: Sequence[Option], path: str | Path) -> None:
    data = {"n": np.array(len(options))}
    for i, o in enumerate(options):
        data[f"q{i}"] = o.q
        data[f"signal{i}"] = o.reward.signal
        data[f"meta{i}"] = np.array([o.option_id, -1 if o.goal is None else o.goal, o.max_duration])
        data[f"kind{i}"] = np.array(o.kind)
    np.savez(path, **data)


def load_options(path: str | Path) -> list[Option]:
    with np.load(path) as z:
        out = []
        for i in range(int(z["n"])):
            oid, goal, dur = (int(x) for x in z[f"meta{i}"])
            out.append(Option(oid, None if goal < 0 else goal, z[f"q{i}"], PseudoReward(z[f"signal{i}"]),
                              dur, True, str(z[f"kind{i}"])))
    return out
