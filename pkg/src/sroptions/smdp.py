"""SMDP Q-learning over primitives plus options, with intra-option updates.

Q-table columns 0..4 are the primitives in ``Action`` order (NoOp, Left,
Right, Up, Down); column 5 + j is option j.

Random draws per decision, in order: one uniform to decide greedy vs
exploratory; then, when more than one candidate remains (the tied maxima, or
every choice on an exploratory draw), NU/AE draw one uniform to pick the
option or primitive class if both are present, and finally one integer picks
uniformly within what is left.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .env_grid import N_ACTIONS, GridMap, TaskSpec, Transition
from .options import Option, execute_option


@dataclass
class SMDPAgent:
    n_states: int
    n_options: int = 0
    alpha: float = 0.1
    gamma: float = 0.99
    epsilon: float = 0.1
    rows: list[list[float]] = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        if self.rows is None:
            self.rows = [[0.0] * self.n_choices for _ in range(self.n_states)]

    @property
    def n_choices(self) -> int:
        return N_ACTIONS + self.n_options

    @property
    def q(self) -> np.ndarray:
        return np.array(self.rows, dtype=float)

    @q.setter
    def q(self, table: np.ndarray) -> None:
        table = np.asarray(table, dtype=float)
        if table.shape != (self.n_states, self.n_choices):
            raise ValueError(f"q must have shape {(self.n_states, self.n_choices)}")
        self.rows = table.tolist()

    def value(self, s: int) -> float:
        return max(self.rows[s])

    def copy(self) -> "SMDPAgent":
        return SMDPAgent(self.n_states, self.n_options, self.alpha, self.gamma, self.epsilon,
                         [r[:] for r in self.rows])


UNIFORM, NU, AE = "uniform", "nu", "ae"


@dataclass
class ExplorationScheme:
    """How exploratory draws split between primitives and options.

    ``e`` is the primitives-per-option ratio: an exploratory draw picks the
    option class with probability 1 / (1 + ratio). Under AE the ratio is
    e * size(cluster of last picked option) / mean cluster size.
    """

    kind: str = UNIFORM
    e: float = 1.0
    cluster_sizes: Sequence[int] | None = None
    last_option: int | None = None

    def __post_init__(self):
        if self.kind not in (UNIFORM, NU, AE):
            raise ValueError(f"unknown exploration scheme {self.kind!r}")
        if self.kind != UNIFORM and not self.e > 0:
            raise ValueError("e must be positive for NU/AE")
        if self.kind == AE and not self.cluster_sizes:
            raise ValueError("AE needs cluster sizes")

    def ratio(self) -> float:
        if self.kind == AE and self.last_option is not None:
            sizes = self.cluster_sizes
            return self.e * sizes[self.last_option] / (sum(sizes) / len(sizes))
        return self.e

    def option_probability(self) -> float:
        return 1.0 / (1.0 + self.ratio())

    def reset(self) -> None:
        self.last_option = None


def _draw(candidates: list[int], scheme: ExplorationScheme, rng: np.random.Generator) -> int:
    """Pick from ``candidates`` with the scheme's option:primitive weighting."""
    if len(candidates) == 1:
        return candidates[0]
    if scheme.kind != UNIFORM:
        opts = [c for c in candidates if c >= N_ACTIONS]
        prims = [c for c in candidates if c < N_ACTIONS]
        if opts and prims:
            candidates = opts if rng.random() < scheme.option_probability() else prims
            if len(candidates) == 1:
                return candidates[0]
    return candidates[int(rng.integers(len(candidates)))]


def choose(agent: SMDPAgent, scheme: ExplorationScheme, s: int, rng: np.random.Generator) -> int:
    """Epsilon-greedy over primitives and options.

    Exploratory draws and ties among greedy maxima are both resolved with the
    scheme's class weighting, so a fresh all-zero table explores at 1:e too.
    """
    row = agent.rows[s]
    if rng.random() >= agent.epsilon:
        best = max(row)
        c = _draw([c for c, v in enumerate(row) if v == best], scheme, rng)
    else:
        c = _draw(list(range(agent.n_choices)), scheme, rng)
    if c >= N_ACTIONS:
        scheme.last_option = c - N_ACTIONS
    return c


def smdp_update(agent: SMDPAgent, s: int, choice: int, outcome: Transition) -> None:
    """Q[s, c] += alpha * (R + gamma^tau * max Q[s'] - Q[s, c]); no bootstrap at the goal."""
    boot = 0.0 if outcome.done else agent.gamma ** outcome.steps * max(agent.rows[outcome.next_state])
    row = agent.rows[s]
    row[choice] += agent.alpha * (outcome.reward + boot - row[choice])


def intra_option_update(
    agent: SMDPAgent, options: Sequence[Option], s: int, a: int, r: float, s_next: int, done: bool
) -> int:
    """Update every option whose greedy policy picks ``a`` at ``s``.

    Returns the number of options updated.
    """
    row, nrow = agent.rows[s], agent.rows[s_next]
    g, al = agent.gamma, agent.alpha
    vmax = max(nrow)
    n = 0
    for j, o in enumerate(options):
        if o.policy[s] != a:
            continue
        c = N_ACTIONS + j
        if done:
            u = 0.0
        elif o.termination[s_next]:
            u = vmax
        else:
            u = nrow[c]
        row[c] += al * (r + g * u - row[c])
        n += 1
    return n


def intra_option_update_transition(agent: SMDPAgent, options: Sequence[Option], tr: Transition) -> int:
    if tr.steps != 1 or tr.choice >= N_ACTIONS:
        raise ValueError("intra-option updates take single primitive transitions")
    return intra_option_update(agent, options, tr.state, tr.choice, tr.reward, tr.next_state, tr.done)


@dataclass
class EpisodeResult:
    discounted_return: float
    undiscounted_return: float
    steps: int
    reached_goal: bool
    decisions: int = 0


def run_option_in_task(
    grid: GridMap, task: TaskSpec, opt: Option, s: int, gamma: float, max_steps: int | None = None
) -> Transition:
    """Execute ``opt`` inside a task, cutting it short at the goal.

    An option started on one of its own termination states still takes its
    greedy action once, so every option choice consumes at least one step.
    """
    run = execute_option(grid, opt, s, stop_at=task.goal, max_steps=max_steps)
    visited = run.visited
    truncated = run.truncated
    if not visited and (max_steps is None or max_steps > 0):
        visited = [int(grid.next_state[s, opt.policy[s]])]
        truncated = False
    R, disc = 0.0, 1.0
    for t in visited:
        R += disc * task.reward(t)
        disc *= gamma
    end = visited[-1] if visited else s
    return Transition(s, -1, end, R, end == task.goal, len(visited), visited, truncated)


def run_episode(
    grid: GridMap,
    task: TaskSpec,
    agent: SMDPAgent,
    scheme: ExplorationScheme,
    options: Sequence[Option],
    rng: np.random.Generator,
    max_steps: int | None = None,
    learn: bool = True,
    counts: np.ndarray | None = None,
    start: int | None = None,
    on_progress: Callable[[int], None] | None = None,
) -> EpisodeResult:
    """Run one episode from the task start until the goal, the task horizon, or
    ``max_steps`` primitive steps. Option-internal steps count toward all three.

    A start equal to the goal returns the goal reward after 0 steps.
    ``on_progress`` is called with the episode's step count after each decision.
    """
    if agent.n_options != len(options):
        raise ValueError(f"agent has {agent.n_options} option columns but {len(options)} options given")
    s = task.sample_start(grid, rng) if start is None else start
    if counts is not None:
        counts[s] += 1
    if s == task.goal:
        return EpisodeResult(task.goal_reward, task.goal_reward, 0, True)
    limit = min(x for x in (max_steps, task.horizon, float("inf")) if x is not None)
    gamma = agent.gamma
    nxt = grid.next_state
    ret = uret = 0.0
    disc = 1.0
    steps = decisions = 0
    done = False
    while steps < limit and not done:
        c = choose(agent, scheme, s, rng)
        decisions += 1
        if c < N_ACTIONS:
            s1 = int(nxt[s, c])
            r = task.reward(s1)
            done = s1 == task.goal
            tr = Transition(s, c, s1, r, done, 1, (s1,))
            if learn:
                smdp_update(agent, s, c, tr)
                intra_option_update(agent, options, s, c, r, s1, done)
            visited = (s1,)
        else:
            opt = options[c - N_ACTIONS]
            remaining = None if limit == float("inf") else int(limit - steps)
            tr = run_option_in_task(grid, task, opt, s, gamma, remaining)
            if learn:
                prev = s
                for t in tr.visited:
                    a = int(opt.policy[prev])
                    intra_option_update(agent, options, prev, a, task.reward(t), t, t == task.goal)
                    prev = t
                smdp_update(agent, s, c, tr)
            done = tr.done
            visited = tr.visited
            s1 = tr.next_state
        for t in visited:
            r = task.reward(t)
            ret += disc * r
            uret += r
            disc *= gamma
            if counts is not None:
                counts[t] += 1
        steps += len(visited)
        s = s1
        if on_progress is not None:
            on_progress(steps)
    return EpisodeResult(ret, uret, steps, done, decisions)


def make_agent(n_states: int, options: Sequence[Option], alpha=0.1, gamma=0.99, epsilon=0.1) -> SMDPAgent:
    return SMDPAgent(n_states, len(options), alpha, gamma, epsilon)


def evaluate(
    grid: GridMap,
    task: TaskSpec,
    agent: SMDPAgent,
    scheme: ExplorationScheme,
    options: Sequence[Option],
    rng: np.random.Generator,
    epsilon: float = 0.05,
    max_steps: int = 500,
) -> EpisodeResult:
    """One frozen-policy episode: no learning, scheme state left untouched."""
    frozen = SMDPAgent(agent.n_states, agent.n_options, agent.alpha, agent.gamma, epsilon, agent.rows)
    probe = ExplorationScheme(scheme.kind, scheme.e, scheme.cluster_sizes, scheme.last_option)
    return run_episode(grid, task, frozen, probe, options, rng, max_steps=max_steps, learn=False)


@dataclass
class CurvePoint:
    step: int
    discounted_return: float
    undiscounted_return: float
    eval_steps: int


def learning_curve(
    grid: GridMap,
    task: TaskSpec,
    options: Sequence[Option],
    scheme: ExplorationScheme,
    budget: int,
    eval_points: Sequence[int],
    rng: np.random.Generator,
    eval_rng: np.random.Generator,
    alpha: float = 0.1,
    epsilon: float = 0.1,
    eval_epsilon: float = 0.05,
    eval_max_steps: int = 500,
    counts: np.ndarray | None = None,
) -> list[CurvePoint]:
    """Train a fresh agent on ``task`` for ``budget`` primitive steps, evaluating
    the frozen agent whenever the step count first reaches each eval point."""
    agent = make_agent(grid.n_states, options, alpha, task.gamma, epsilon)
    scheme.reset()
    points = sorted(eval_points)
    out: list[CurvePoint] = []
    nxt_eval = 0

    def eval_due(step: int) -> None:
        nonlocal nxt_eval
        while nxt_eval < len(points) and points[nxt_eval] <= step:
            res = evaluate(grid, task, agent, scheme, options, eval_rng, eval_epsilon, eval_max_steps)
            out.append(CurvePoint(points[nxt_eval], res.discounted_return, res.undiscounted_return, res.steps))
            nxt_eval += 1

    used = 0
    eval_due(0)
    while used < budget:
        base = used
        res = run_episode(grid, task, agent, scheme, options, rng, max_steps=budget - used,
                          counts=counts, on_progress=lambda k: eval_due(base + k))
        used += max(res.steps, 1)
    eval_due(budget)
    return out


def explore_counts(
    grid: GridMap,
    options: Sequence[Option],
    ratio: float,
    budget: int,
    rng: np.random.Generator,
    start: int | None = None,
    episode_length: int | None = None,
) -> np.ndarray:
    """Visitation counts of a purely random SMDP explorer.

    Every decision picks an option with probability 1/(1+ratio) (uniform among
    options), else a uniform primitive. Option-internal steps are counted.
    Episodes restart after ``episode_length`` steps (default: never).
    """
    counts = np.zeros(grid.n_states, dtype=np.int64)
    p_opt = 1.0 / (1.0 + ratio) if options else 0.0
    nxt = grid.next_state
    used = 0
    while used < budget:
        s = int(rng.integers(grid.n_states)) if start is None else start
        counts[s] += 1
        t = 0
        limit = budget - used if episode_length is None else min(episode_length, budget - used)
        while t < limit:
            if p_opt and rng.random() < p_opt:
                opt = options[int(rng.integers(len(options)))]
                run = execute_option(grid, opt, s, max_steps=limit - t)
                path = run.visited or [int(nxt[s, opt.policy[s]])]
            else:
                path = [int(nxt[s, int(rng.integers(N_ACTIONS))])]
            for v in path:
                counts[v] += 1
            t += len(path)
            s = path[-1]
        used += t
    return counts
