"""Sub-goal discovery: k-means++ over SR rows, cosine landmark mapping,
and L1-norm candidate filtering for the incremental setting."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .sr import SRMatrix, l1_norms

log = logging.getLogger(__name__)


class ClusteringError(ValueError):
    pass


@dataclass
class ClusterResult:
    centroids: np.ndarray  # (k, d)
    labels: np.ndarray  # (n,) cluster id per input vector
    members: np.ndarray  # (n,) state index of each input vector
    inertia_history: list[float] = field(default_factory=list)
    n_iter: int = 0

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)

    @property
    def inertia(self) -> float:
        return self.inertia_history[-1]


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - C[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def kmeanspp_seed(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """D^2-weighted seeding; returns the row indices of the k seeds."""
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(X, X[chosen[0]][None])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            raise ClusteringError("ran out of distinct vectors while seeding")
        idx = int(rng.choice(n, p=d2 / total))
        chosen.append(idx)
        d2 = np.minimum(d2, _sq_dists(X, X[idx][None])[:, 0])
    return np.array(chosen)


def kmeanspp(
    vectors: np.ndarray,
    k: int,
    rng: np.random.Generator,
    max_iters: int = 300,
    members: np.ndarray | None = None,
) -> ClusterResult:
    """k-means++ seeding followed by Lloyd iterations (Euclidean).

    ``members`` labels each row with its state index; defaults to 0..n-1.
    Empty clusters are refilled with the point farthest from its own centroid.
    """
    X = np.asarray(vectors, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ClusteringError("need a non-empty 2-D array of vectors")
    if k < 1:
        raise ClusteringError(f"k must be positive, got {k}")
    n_distinct = np.unique(X, axis=0).shape[0]
    if k > n_distinct:
        raise ClusteringError(f"k={k} exceeds the {n_distinct} distinct vectors")
    members = np.arange(X.shape[0]) if members is None else np.asarray(members)

    C = X[kmeanspp_seed(X, k, rng)].copy()
    labels = np.full(X.shape[0], -1)
    history: list[float] = []
    it = 0
    for it in range(1, max_iters + 1):
        d2 = _sq_dists(X, C)
        new = d2.argmin(axis=1)
        for j in range(k):
            if not (new == j).any():
                own = d2[np.arange(X.shape[0]), new]
                far = int(own.argmax())
                new[far] = j
                C[j] = X[far]
                d2[:, j] = _sq_dists(X, C[j][None])[:, 0]
                log.debug("reseeded empty cluster %d with point %d", j, far)
        history.append(float(d2[np.arange(X.shape[0]), new].sum()))
        if np.array_equal(new, labels):
            break
        labels = new
        C = np.stack([X[labels == j].mean(axis=0) for j in range(k)])
    else:
        history.append(float(_sq_dists(X, C)[np.arange(X.shape[0]), labels].sum()))
    return ClusterResult(C, labels, members, history, it)


@dataclass(frozen=True)
class SubGoal:
    cluster_id: int
    state: int
    centroid: np.ndarray
    cluster_size: int


def cosine_to(rows: np.ndarray, v: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(rows, axis=1) * np.linalg.norm(v)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(norms > 0, rows @ v / norms, 0.0)


def select_landmarks(sr: SRMatrix | np.ndarray, clusters: ClusterResult) -> list[SubGoal]:
    """Map each centroid to the participating state whose SR row is most
    cosine-similar to it. Ties go to the lowest state; a landmark claimed by an
    earlier centroid is not reused, so fewer than k sub-goals may come back."""
    psi = sr.psi if isinstance(sr, SRMatrix) else np.asarray(sr)
    order = np.argsort(clusters.members, kind="stable")
    states = clusters.members[order]
    rows = psi[states]
    sizes = clusters.cluster_sizes
    goals: list[SubGoal] = []
    taken: set[int] = set()
    for j, c in enumerate(clusters.centroids):
        if not np.any(c):
            raise ClusteringError(f"centroid {j} is the zero vector")
        s = int(states[int(np.argmax(cosine_to(rows, c)))])
        if s in taken:
            log.info("centroid %d maps to landmark %d already in use; dropped", j, s)
            continue
        taken.add(s)
        goals.append(SubGoal(j, s, c, int(sizes[j])))
    return goals


def discover_subgoals(
    sr: SRMatrix, k: int, rng: np.random.Generator, states: np.ndarray | None = None
) -> tuple[ClusterResult, list[SubGoal]]:
    """Cluster the SR rows of ``states`` (default: every state with a nonzero row)."""
    if states is None:
        states = np.flatnonzero(l1_norms(sr) > 0)
    states = np.asarray(states)
    k_eff = min(k, np.unique(sr.psi[states], axis=0).shape[0])
    if k_eff < k:
        log.info("only %d distinct SR rows; clustering with k=%d instead of %d", k_eff, k_eff, k)
    clusters = kmeanspp(sr.psi[states], k_eff, rng, members=states)
    return clusters, select_landmarks(sr, clusters)


def nearest_rank(sorted_values: np.ndarray, pct: float) -> float:
    """Nearest-rank percentile of an ascending array (pct 0 gives the minimum)."""
    n = len(sorted_values)
    rank = max(1, math.ceil(pct / 100.0 * n))
    return float(sorted_values[rank - 1])


def filter_candidates(sr: SRMatrix | np.ndarray, pct_min: float = 5, pct_max: float = 40) -> np.ndarray:
    """States whose SR L1 norm lies strictly between two percentiles of the
    nonzero norms. Accepts an SR matrix or a precomputed norm vector."""
    if not 0 <= pct_min < pct_max <= 100:
        raise ValueError(f"need 0 <= pct_min < pct_max <= 100, got {pct_min}, {pct_max}")
    arr = sr.psi if isinstance(sr, SRMatrix) else np.asarray(sr, dtype=float)
    norms = l1_norms(arr) if arr.ndim == 2 else arr
    reached = np.flatnonzero(norms > 0)
    if len(reached) < 2:
        raise ValueError("fewer than 2 states with nonzero SR norm")
    vals = np.sort(norms[reached])
    lo, hi = nearest_rank(vals, pct_min), nearest_rank(vals, pct_max)
    keep = (norms[reached] > lo) & (norms[reached] < hi)
    return reached[keep]


def save_subgoals(goals: list[SubGoal], path: str | Path) -> None:
    with open(path, "w") as f:
        f.write("cluster_id,landmark_state,cluster_size\n")
        for g in goals:
            f.write(f"{g.cluster_id},{g.state},{g.cluster_size}\n")


def load_subgoal_table(path: str | Path) -> list[tuple[int, int, int]]:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, dtype=int, ndmin=2)
    return [tuple(int(x) for x in r) for r in rows]
