"""Incremental successor options for finite-horizon exploration.

Each iteration collects more SR experience from the fixed start state, mixing
in the current options, then rebuilds the options around states whose SR is
only partly developed (L1 norm between two percentiles). Options help reach
new states but never contribute SR updates themselves.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .env_grid import N_ACTIONS, GridMap
from .options import Option, PseudoReward, execute_option, train_option
from .sr import SRMatrix, _td_row, l1_norms
from .subgoals import SubGoal, discover_subgoals, filter_candidates

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class IncrementalConfig:
    n_iters: int = 4
    k_final: int = 10
    k_intermediate: int | None = None  # defaults to k_final
    pct_min: float = 5.0
    pct_max: float = 40.0
    explore_budget: int = 50_000
    option_budget: int = 20_000
    option_sampling_ratio: float = 500.0  # primitives per option draw
    final_option_budget: int | None = None

    def __post_init__(self):
        if self.n_iters < 1:
            raise ValueError("n_iters must be >= 1")
        if self.k_final < 1 or (self.k_intermediate is not None and self.k_intermediate < 1):
            raise ValueError("option counts must be positive")
        if not 0 <= self.pct_min < self.pct_max <= 100:
            raise ValueError("need 0 <= pct_min < pct_max <= 100")
        if self.explore_budget < 0 or self.option_budget < 1:
            raise ValueError("budgets must be nonnegative (option budget positive)")
        if not self.option_sampling_ratio > 0:
            raise ValueError("option_sampling_ratio must be positive")

    @property
    def k_mid(self) -> int:
        return self.k_final if self.k_intermediate is None else self.k_intermediate

    def step_budget(self) -> int:
        """Environment steps spent by the loop, excluding the final option build."""
        return self.n_iters * (self.explore_budget + self.k_mid * self.option_budget)


@dataclass
class SRCounters:
    sr_updates: int = 0
    option_steps: int = 0
    primitive_steps: int = 0
    episodes: int = 0


def update_sr_with_options(
    sr: SRMatrix,
    grid: GridMap,
    options: Sequence[Option],
    budget: int,
    ratio: float,
    horizon: int,
    start: int,
    rng: np.random.Generator,
    counters: SRCounters | None = None,
    visits: np.ndarray | None = None,
) -> SRMatrix:
    """Collect ``budget`` environment steps in horizon-limited episodes from
    ``start``. Each decision samples an option with probability 1/(1+ratio),
    else a uniform primitive; only primitive transitions update the SR.
    An option cut off by the horizon ends the episode.
    """
    if horizon < 1:
        raise ValueError("update_sr_with_options needs a finite positive horizon")
    counters = counters if counters is not None else SRCounters()
    p_opt = 1.0 / (1.0 + ratio) if options else 0.0
    nxt = grid.next_state.tolist()
    psi, g, alpha = sr.psi, sr.gamma, sr.alpha
    before = counters.sr_updates
    used = 0
    while used < budget:
        s, t = start, 0
        counters.episodes += 1
        if visits is not None:
            visits[s] += 1
        while t < horizon and used < budget:
            if p_opt and rng.random() < p_opt:
                opt = options[int(rng.integers(len(options)))]
                run = execute_option(grid, opt, s, max_steps=min(horizon - t, budget - used))
                path = run.visited or [nxt[s][int(opt.policy[s])]]
                counters.option_steps += len(path)
                t += len(path)
                used += len(path)
                s = path[-1]
                if visits is not None:
                    np.add.at(visits, path, 1)
            else:
                s1 = nxt[s][int(rng.integers(N_ACTIONS))]
                _td_row(psi, s, s1, g, alpha)
                counters.sr_updates += 1
                counters.primitive_steps += 1
                s = s1
                t += 1
                used += 1
                if visits is not None:
                    visits[s] += 1
    sr.update_count += counters.sr_updates - before
    return sr


def learn_sr_finite_horizon(
    grid: GridMap, budget: int, horizon: int, start: int, rng: np.random.Generator,
    gamma: float = 0.99, alpha: float = 0.1, visits: np.ndarray | None = None,
) -> SRMatrix:
    """Primitive-only SR from horizon-limited episodes (plain SR-Options baseline)."""
    sr = SRMatrix.zeros(grid.n_states, gamma, alpha)
    return update_sr_with_options(sr, grid, [], budget, np.inf, horizon, start, rng, visits=visits)


@dataclass
class IterationSnapshot:
    iteration: int
    norms: np.ndarray
    candidates: np.ndarray
    subgoals: list[int]
    coverage: int


@dataclass
class IncrementalResult:
    sr: SRMatrix
    subgoals: list[SubGoal]
    options: list[Option]
    snapshots: list[IterationSnapshot] = field(default_factory=list)
    counters: SRCounters = field(default_factory=SRCounters)
    option_training_steps: int = 0

    @property
    def total_steps(self) -> int:
        return self.counters.primitive_steps + self.counters.option_steps + self.option_training_steps


def _intermediate_options(
    grid: GridMap, sr: SRMatrix, cfg: IncrementalConfig, start: int, horizon: int, rng: np.random.Generator
) -> tuple[list[Option], list[int], np.ndarray]:
    try:
        cands = filter_candidates(sr, cfg.pct_min, cfg.pct_max)
    except ValueError:
        cands = np.array([], dtype=int)
    if len(cands) == 0:
        log.info("no candidate sub-goals this iteration")
        return [], [], cands
    distinct = np.unique(sr.psi[cands], axis=0).shape[0]
    k = min(cfg.k_mid, distinct)
    if k < cfg.k_mid:
        log.info("only %d distinct candidates; using k=%d", distinct, k)
    _, goals = discover_subgoals(sr, k, rng, states=cands)
    # restarts cover every reached state: from the start state alone a frontier
    # landmark's partial SR row gives no reward signal to climb
    reached = np.flatnonzero(l1_norms(sr) > 0)
    opts = [
        train_option(grid, PseudoReward(sr.psi[gl.state]), cfg.option_budget, rng,
                     episode_cap=horizon, start_states=reached, option_id=i, goal=gl.state)
        for i, gl in enumerate(goals)
    ]
    return opts, [gl.state for gl in goals], cands


def run_incremental(
    grid: GridMap,
    start: int,
    horizon: int,
    cfg: IncrementalConfig,
    rng: np.random.Generator,
    gamma: float = 0.99,
    alpha: float = 0.1,
    visits: np.ndarray | None = None,
) -> IncrementalResult:
    sr = SRMatrix.zeros(grid.n_states, gamma, alpha)
    counters = SRCounters()
    options: list[Option] = []
    snapshots: list[IterationSnapshot] = []
    train_steps = 0
    for i in range(1, cfg.n_iters + 1):
        update_sr_with_options(sr, grid, options, cfg.explore_budget, cfg.option_sampling_ratio,
                               horizon, start, rng, counters, visits)
        # old options are dropped before the new set is built
        options = []
        options, goals, cands = _intermediate_options(grid, sr, cfg, start, horizon, rng)
        train_steps += len(options) * cfg.option_budget
        norms = l1_norms(sr)
        snapshots.append(IterationSnapshot(i, norms, cands, goals, int((norms > 0).sum())))
        log.info("iteration %d: coverage %d/%d, %d candidates, sub-goals %s",
                 i, snapshots[-1].coverage, grid.n_states, len(cands), goals)
    _, final_goals = discover_subgoals(sr, cfg.k_final, rng)
    reached = np.flatnonzero(l1_norms(sr) > 0)
    budget = cfg.final_option_budget or cfg.option_budget
    final = [
        train_option(grid, PseudoReward(sr.psi[gl.state]), budget, rng, start_states=reached,
                     option_id=j, goal=gl.state)
        for j, gl in enumerate(final_goals)
    ]
    return IncrementalResult(sr, final_goals, final, snapshots, counters, train_steps)


def run_plain_finite_horizon(
    grid: GridMap, start: int, horizon: int, budget: int, k: int, rng: np.random.Generator,
    option_budget: int = 20_000, gamma: float = 0.99, alpha: float = 0.1,
) -> tuple[SRMatrix, list[SubGoal], list[Option]]:
    """Plain SR-Options in the finite-horizon setting: primitive-only SR, then options."""
    sr = learn_sr_finite_horizon(grid, budget, horizon, start, rng, gamma, alpha)
    _, goals = discover_subgoals(sr, k, rng)
    reached = np.flatnonzero(l1_norms(sr) > 0)
    opts = [
        train_option(grid, PseudoReward(sr.psi[gl.state]), option_budget, rng, start_states=reached,
                     option_id=j, goal=gl.state)
        for j, gl in enumerate(goals)
    ]
    return sr, goals, opts
