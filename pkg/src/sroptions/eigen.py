"""Eigen-option baseline: options that climb Laplacian eigenvectors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env_grid import GridMap, is_connected
from .options import Option, PseudoReward, default_option_budget, train_option


class DisconnectedMapError(ValueError):
    pass


@dataclass(frozen=True)
class LaplacianSpectrum:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # column i pairs with eigenvalues[i]

    def vector(self, i: int) -> np.ndarray:
        return self.eigenvectors[:, i]


def adjacency(grid: GridMap) -> np.ndarray:
    n = grid.n_states
    W = np.zeros((n, n))
    for s in range(n):
        for t in grid.next_state[s]:
            if t != s:
                W[s, t] = W[t, s] = 1.0
    return W


def build_laplacian(grid: GridMap, normalized: bool = False) -> np.ndarray:
    """Combinatorial D - W by default; I - D^-1/2 W D^-1/2 when ``normalized``."""
    if not is_connected(grid):
        raise DisconnectedMapError(f"map {grid.name!r} is not connected")
    W = adjacency(grid)
    deg = W.sum(axis=1)
    if normalized:
        d = 1.0 / np.sqrt(deg)
        return np.eye(grid.n_states) - d[:, None] * W * d[None, :]
    return np.diag(deg) - W


def spectrum(L: np.ndarray) -> LaplacianSpectrum:
    vals, vecs = np.linalg.eigh(L)
    return LaplacianSpectrum(vals, vecs)


def eigen_option_reward(v: np.ndarray, s: int, s_next: int) -> float:
    return float(v[s_next] - v[s])


def eigen_signals(spec: LaplacianSpectrum, m: int, tol: float = 1e-9) -> list[np.ndarray]:
    """The first ``m`` of v_1, -v_1, v_2, -v_2, ... over non-constant eigenvectors."""
    nonconst = [i for i in range(len(spec.eigenvalues)) if spec.eigenvalues[i] > tol]
    if m > 2 * len(nonconst):
        raise ValueError(f"m={m} exceeds the {2 * len(nonconst)} available eigen-options")
    out = []
    for i in nonconst:
        v = spec.vector(i)
        out.extend([v, -v])
        if len(out) >= m:
            break
    return out[:m]


def train_eigen_options(
    grid: GridMap,
    spec: LaplacianSpectrum,
    m: int,
    rng: np.random.Generator,
    budget: int | None = None,
    **train_kw,
) -> list[Option]:
    budget = budget or default_option_budget(grid)
    return [
        train_option(grid, PseudoReward(v), budget, rng, option_id=i, kind="eigen", **train_kw)
        for i, v in enumerate(eigen_signals(spec, m))
    ]
