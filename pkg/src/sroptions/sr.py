"""Tabular successor representation: TD learning, closed form, and file I/O."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .env_grid import N_ACTIONS, GridMap, transition_matrix


@dataclass
class SRMatrix:
    psi: np.ndarray
    gamma: float = 0.99
    alpha: float = 0.1
    update_count: int = 0

    @classmethod
    def zeros(cls, n_states: int, gamma: float = 0.99, alpha: float = 0.1) -> "SRMatrix":
        return cls(np.zeros((n_states, n_states)), gamma=gamma, alpha=alpha)

    @property
    def n_states(self) -> int:
        return self.psi.shape[0]

    @property
    def row_sum_limit(self) -> float:
        return 1.0 / (1.0 - self.gamma)

    def copy(self) -> "SRMatrix":
        return SRMatrix(self.psi.copy(), self.gamma, self.alpha, self.update_count)


def td_update(sr: SRMatrix, s: int, s_next: int, alpha: float | None = None) -> None:
    """One TD step on row ``s`` toward onehot(s) + gamma * psi[s_next], in place."""
    n = sr.n_states
    if not (0 <= s < n and 0 <= s_next < n):
        raise IndexError(f"states ({s}, {s_next}) out of range [0, {n})")
    _td_row(sr.psi, s, s_next, sr.gamma, sr.alpha if alpha is None else alpha)
    sr.update_count += 1


def _td_row(psi: np.ndarray, s: int, s_next: int, gamma: float, alpha: float) -> None:
    # target is built before touching row s, so s == s_next is safe
    target = gamma * psi[s_next]
    target[s] += 1.0
    row = psi[s]
    row += alpha * (target - row)


def decayed_alpha(alpha: float, t: int, budget: int) -> float:
    """alpha / sqrt(1 + 10 t / budget): constant early, ~1/sqrt(t) late."""
    return alpha / math.sqrt(1.0 + 10.0 * t / budget)


def default_sr_budget(grid: GridMap) -> int:
    return max(1_000_000, 25_000 * grid.n_states)


def default_episode_length(grid: GridMap) -> int:
    return 10 * max(grid.width, grid.height)


def learn_sr(
    grid: GridMap,
    budget: int,
    rng: np.random.Generator,
    gamma: float = 0.99,
    alpha: float = 0.1,
    decay: bool = True,
    episode_length: int | None = None,
    start: int | None = None,
    sr: SRMatrix | None = None,
) -> SRMatrix:
    """Learn the SR of the uniform random policy from ``budget`` primitive steps.

    Episodes last ``episode_length`` steps (default 10 * max(width, height)) and
    restart from ``start``, or from a uniformly random free cell when ``start`` is
    None. Passing ``sr`` continues learning on an existing matrix.
    """
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    if sr is None:
        sr = SRMatrix.zeros(grid.n_states, gamma=gamma, alpha=alpha)
    if budget == 0:
        return sr
    length = episode_length or default_episode_length(grid)
    nxt = grid.next_state.tolist()
    psi, g = sr.psi, sr.gamma
    t = 0
    # full-length draws per episode keep runs with different budgets prefix-consistent
    while t < budget:
        s = start if start is not None else int(rng.integers(grid.n_states))
        actions = rng.integers(N_ACTIONS, size=length).tolist()
        for a in actions[: budget - t]:
            s1 = nxt[s][a]
            _td_row(psi, s, s1, g, decayed_alpha(sr.alpha, t, budget) if decay else sr.alpha)
            s = s1
            t += 1
    sr.update_count += budget
    return sr


def sr_oracle(P: np.ndarray, gamma: float) -> np.ndarray:
    """Exact SR (I - gamma P)^-1 for a row-stochastic ``P``."""
    P = np.asarray(P, dtype=float)
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must be in (0, 1), got {gamma}")
    n = P.shape[0]
    try:
        return np.linalg.solve(np.eye(n) - gamma * P, np.eye(n))
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("SR linear system is singular") from exc


def oracle_sr(grid: GridMap, gamma: float = 0.99) -> SRMatrix:
    """Closed-form SR of the uniform random policy on ``grid``."""
    return SRMatrix(sr_oracle(transition_matrix(grid), gamma), gamma=gamma)


def l1_norms(sr: SRMatrix | np.ndarray) -> np.ndarray:
    psi = sr.psi if isinstance(sr, SRMatrix) else np.asarray(sr)
    return np.abs(psi).sum(axis=1)


def save_sr(sr: SRMatrix, path: str | Path) -> None:
    """Row-major CSV with a one-line header carrying |S|, gamma and update count."""
    header = f"n_states={sr.n_states},gamma={sr.gamma!r},alpha={sr.alpha!r},update_count={sr.update_count}"
    np.savetxt(path, sr.psi, delimiter=",", header=header, fmt="%.17g")


def load_sr(path: str | Path) -> SRMatrix:
    with open(path) as f:
        header = f.readline().lstrip("#").strip()
    meta = dict(kv.split("=", 1) for kv in header.split(","))
    n = int(meta["n_states"])
    psi = np.loadtxt(path, delimiter=",", ndmin=2)
    if psi.shape != (n, n):
        raise ValueError(f"SR file holds shape {psi.shape}, header says {n}x{n}")
    return SRMatrix(psi, gamma=float(meta["gamma"]), alpha=float(meta["alpha"]),
                    update_count=int(meta["update_count"]))
