"""Experiment configuration, task generation, and the run/compare pipeline.

Config files are flat ``key = value`` text; ``#`` starts a comment and unknown
keys are rejected. Every random choice derives from the run seed through a
named substream, so a (config, seed) pair always replays exactly.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import eigen
from .env_grid import GridMap, TaskSpec, corner_states, load_map
from .heatmap import render_heatmap
from .incremental import IncrementalConfig, run_incremental
from .options import Option, build_sr_options, default_option_budget, save_options
from .smdp import AE, NU, UNIFORM, ExplorationScheme, learning_curve
from .sr import SRMatrix, default_sr_budget, learn_sr, oracle_sr, save_sr
from .subgoals import SubGoal, discover_subgoals, save_subgoals

log = logging.getLogger(__name__)

METHODS = ("q", "sr", "sr-nu", "sr-ae", "eigen", "eigen-nu", "incremental")
PROTOCOLS = ("random-500", "fixed-corner")

# Option counts and e per map from the grid experiments.
PAPER_DEFAULTS = {"grid1": (4, 15.0), "grid2": (5, 15.0), "grid3": (10, 50.0), "grid4": (10, 50.0)}


class ConfigError(ValueError):
    pass


def _opt_int(v: str) -> int | None:
    return None if v.lower() in ("none", "") else int(float(v))


def _list_of(kind):
    def parse(v: str):
        return [kind(x.strip()) for x in v.split(",") if x.strip()]
    return parse


@dataclass
class ExperimentConfig:
    map: str = "grid1"
    method: list[str] = field(default_factory=lambda: ["q"])
    k: int | None = None
    e: float | None = None
    seeds: list[int] = field(default_factory=lambda: [0])
    steps: int = 50_000
    eval_points: int = 101
    protocol: str = "random-500"
    n_tasks: int = 500
    gamma: float = 0.99
    alpha: float = 0.1
    epsilon: float = 0.1
    eval_epsilon: float = 0.05
    eval_max_steps: int = 500
    horizon: int | None = None
    sr_source: str = "learned"
    sr_budget: int | None = None
    sr_alpha: float = 0.1
    option_budget: int | None = None
    option_alpha: float = 0.1
    option_epsilon: float = 0.1
    option_gamma: float = 0.99
    laplacian: str = "combinatorial"
    inc_iters: int = 4
    inc_k_intermediate: int | None = None
    inc_explore_budget: int = 120_000
    inc_option_budget: int = 25_000
    inc_ratio: float = 20.0
    pct_min: float = 5.0
    pct_max: float = 40.0
    name: str = ""
    output_dir: str = "runs"

    _PARSERS = {
        "map": str, "method": _list_of(str), "k": _opt_int, "e": lambda v: None if v.lower() == "none" else float(v),
        "seeds": _list_of(int), "steps": lambda v: int(float(v)), "eval_points": int, "protocol": str,
        "n_tasks": int, "gamma": float, "alpha": float, "epsilon": float, "eval_epsilon": float,
        "eval_max_steps": int, "horizon": _opt_int, "sr_source": str, "sr_budget": _opt_int,
        "sr_alpha": float, "option_budget": _opt_int, "option_alpha": float, "option_epsilon": float,
        "option_gamma": float, "laplacian": str, "inc_iters": int, "inc_k_intermediate": _opt_int,
        "inc_explore_budget": lambda v: int(float(v)), "inc_option_budget": lambda v: int(float(v)),
        "inc_ratio": float, "pct_min": float, "pct_max": float, "name": str, "output_dir": str,
    }

    def validate(self) -> None:
        bad = [m for m in self.method if m not in METHODS]
        if bad or not self.method:
            raise ConfigError(f"unknown method(s) {bad}; choose from {METHODS}")
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {PROTOCOLS}")
        if self.sr_source not in ("learned", "oracle"):
            raise ConfigError("sr_source must be 'learned' or 'oracle'")
        if self.laplacian not in ("combinatorial", "normalized"):
            raise ConfigError("laplacian must be 'combinatorial' or 'normalized'")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.steps < 1 or self.eval_points < 2 or self.n_tasks < 1:
            raise ConfigError("steps, n_tasks must be positive and eval_points >= 2")
        if not 0 < self.gamma < 1:
            raise ConfigError("gamma must be in (0, 1)")
        for name in ("epsilon", "eval_epsilon", "option_epsilon"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must be in [0, 1]")
        if self.k is not None and self.k < 1:
            raise ConfigError("k must be positive")
        if self.e is not None and self.e <= 0:
            raise ConfigError("e must be positive")
        if "incremental" in self.method and self.horizon is None:
            raise ConfigError("method 'incremental' needs a finite horizon")
        if not 0 <= self.pct_min < self.pct_max <= 100:
            raise ConfigError("need 0 <= pct_min < pct_max <= 100")

    @property
    def run_name(self) -> str:
        return self.name or Path(self.map).stem

    def resolved_k(self, grid: GridMap) -> int:
        if self.k is not None:
            return self.k
        return PAPER_DEFAULTS.get(grid.name, (4, 15.0))[0]

    def resolved_e(self, grid: GridMap) -> float:
        if self.e is not None:
            return self.e
        return PAPER_DEFAULTS.get(grid.name, (4, 15.0))[1]

    def eval_steps(self) -> list[int]:
        return sorted({int(round(x)) for x in np.linspace(0, self.steps, self.eval_points)})

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name} = {'none' if v is None else v}")
        return "\n".join(lines) + "\n"


def parse_config(text: str) -> ExperimentConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (x.strip() for x in line.split("=", 1))
        if key not in ExperimentConfig._PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = ExperimentConfig._PARSERS[key](val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {val!r}") from exc
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def substream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Independent generator for a named part of a run (``sr``, ``tasks``, ...)."""
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(name.encode()), *extra]))


def generate_tasks(grid: GridMap, n: int, rng: np.random.Generator, gamma: float = 0.99,
                   horizon: int | None = None) -> list[TaskSpec]:
    """``n`` (start, goal) pairs drawn uniformly over ordered pairs of distinct free cells."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if grid.n_states < 2:
        raise ValueError("need at least 2 free cells to make a task")
    starts = rng.integers(grid.n_states, size=n)
    goals = rng.integers(grid.n_states - 1, size=n)
    goals = goals + (goals >= starts)
    return [TaskSpec(goal=int(g), start=int(s), gamma=gamma, horizon=horizon) for s, g in zip(starts, goals)]


def corner_task(grid: GridMap, gamma: float = 0.99, horizon: int | None = 100) -> TaskSpec:
    start, goal = corner_states(grid)
    return TaskSpec(goal=goal, start=start, gamma=gamma, horizon=horizon)


@dataclass
class OptionSet:
    options: list[Option]
    scheme: ExplorationScheme
    subgoals: list[SubGoal] = field(default_factory=list)
    sr: SRMatrix | None = None
    pretrain_steps: int = 0


def build_sr(grid: GridMap, cfg: ExperimentConfig, seed: int) -> SRMatrix:
    if cfg.sr_source == "oracle":
        return oracle_sr(grid, cfg.gamma)
    budget = cfg.sr_budget or default_sr_budget(grid)
    return learn_sr(grid, budget, substream(seed, "sr"), gamma=cfg.gamma, alpha=cfg.sr_alpha)


def _option_kw(cfg: ExperimentConfig) -> dict:
    return dict(alpha=cfg.option_alpha, epsilon=cfg.option_epsilon, gamma=cfg.option_gamma)


def build_method(grid: GridMap, cfg: ExperimentConfig, method: str, seed: int,
                 sr_cache: dict | None = None) -> OptionSet:
    """Options and exploration scheme for one method and seed."""
    k, e = cfg.resolved_k(grid), cfg.resolved_e(grid)
    if method == "q":
        return OptionSet([], ExplorationScheme(UNIFORM))
    budget = cfg.option_budget or default_option_budget(grid)
    if method in ("eigen", "eigen-nu"):
        L = eigen.build_laplacian(grid, normalized=cfg.laplacian == "normalized")
        opts = eigen.train_eigen_options(grid, eigen.spectrum(L), k, substream(seed, "option"),
                                         budget=budget, **_option_kw(cfg))
        scheme = ExplorationScheme(NU, e) if method == "eigen-nu" else ExplorationScheme(UNIFORM)
        return OptionSet(opts, scheme, pretrain_steps=budget * len(opts))
    if method == "incremental":
        start, _ = corner_states(grid)
        icfg = IncrementalConfig(n_iters=cfg.inc_iters, k_final=k, k_intermediate=cfg.inc_k_intermediate,
                                 pct_min=cfg.pct_min, pct_max=cfg.pct_max,
                                 explore_budget=cfg.inc_explore_budget, option_budget=cfg.inc_option_budget,
                                 option_sampling_ratio=cfg.inc_ratio, final_option_budget=budget)
        res = run_incremental(grid, start, cfg.horizon, icfg, substream(seed, "incremental"),
                              gamma=cfg.gamma, alpha=cfg.sr_alpha)
        sizes = [g.cluster_size for g in res.subgoals]
        return OptionSet(res.options, ExplorationScheme(AE, e, sizes), res.subgoals, res.sr, res.total_steps)
    sr_cache = {} if sr_cache is None else sr_cache
    if seed not in sr_cache:
        sr = build_sr(grid, cfg, seed)
        _, goals = discover_subgoals(sr, k, substream(seed, "cluster"))
        opts = build_sr_options(grid, sr.psi, [g.state for g in goals], substream(seed, "option"),
                                budget=budget, **_option_kw(cfg))
        sr_cache[seed] = (sr, goals, opts)
    sr, goals, opts = sr_cache[seed]
    sizes = [g.cluster_size for g in goals]
    scheme = {"sr": ExplorationScheme(UNIFORM), "sr-nu": ExplorationScheme(NU, e),
              "sr-ae": ExplorationScheme(AE, e, sizes)}[method]
    sr_steps = 0 if cfg.sr_source == "oracle" else sr.update_count
    return OptionSet(opts, scheme, goals, sr, sr_steps + budget * len(opts))


def make_tasks(grid: GridMap, cfg: ExperimentConfig, seed: int) -> list[TaskSpec]:
    if cfg.protocol == "fixed-corner":
        return [corner_task(grid, cfg.gamma, cfg.horizon)]
    return generate_tasks(grid, cfg.n_tasks, substream(seed, "tasks"), cfg.gamma, cfg.horizon)


@dataclass
class RunRecord:
    seed: int
    method: str
    steps: list[int]
    mean_return: list[float]
    mean_undiscounted: list[float]
    pretrain_steps: int = 0
    wall_time: float = 0.0
    error: str | None = None

    @property
    def auc(self) -> float:
        return float(np.mean(self.mean_return))


def run_seed(grid: GridMap, cfg: ExperimentConfig, method: str, seed: int,
             sr_cache: dict | None = None) -> tuple[RunRecord, OptionSet, np.ndarray]:
    """Build options, then train a fresh agent per task and average the curves."""
    t0 = time.perf_counter()
    oset = build_method(grid, cfg, method, seed, sr_cache)
    tasks = make_tasks(grid, cfg, seed)
    points = cfg.eval_steps()
    counts = np.zeros(grid.n_states, dtype=np.int64)
    disc = np.zeros(len(points))
    undisc = np.zeros(len(points))
    for i, task in enumerate(tasks):
        curve = learning_curve(grid, task, oset.options, oset.scheme, cfg.steps, points,
                               substream(seed, "agent", i), substream(seed, "eval", i),
                               alpha=cfg.alpha, epsilon=cfg.epsilon, eval_epsilon=cfg.eval_epsilon,
                               eval_max_steps=cfg.eval_max_steps, counts=counts)
        disc += [p.discounted_return for p in curve]
        undisc += [p.undiscounted_return for p in curve]
    rec = RunRecord(seed, method, points, (disc / len(tasks)).tolist(), (undisc / len(tasks)).tolist(),
                    oset.pretrain_steps, time.perf_counter() - t0)
    return rec, oset, counts


def _fmt(x: float) -> str:
    return repr(float(x))


def write_curve(path: Path, records: Sequence[RunRecord]) -> None:
    """Learning curve averaged over seeds: step, mean_return, stderr_over_seeds, ..."""
    ok = [r for r in records if r.error is None]
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["step", "mean_return", "stderr_over_seeds", "mean_undiscounted_return", "n_seeds"])
        if not ok:
            return
        R = np.array([r.mean_return for r in ok])
        U = np.array([r.mean_undiscounted for r in ok])
        se = R.std(axis=0, ddof=1) / np.sqrt(len(ok)) if len(ok) > 1 else np.zeros(R.shape[1])
        for j, step in enumerate(ok[0].steps):
            w.writerow([step, _fmt(R[:, j].mean()), _fmt(se[j]), _fmt(U[:, j].mean()), len(ok)])


def write_records(path: Path, records: Sequence[RunRecord]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["method", "seed", "step", "mean_return", "mean_undiscounted_return", "pretrain_steps", "error"])
        for r in records:
            if r.error is not None:
                w.writerow([r.method, r.seed, "", "", "", r.pretrain_steps, r.error])
                continue
            for step, a, b in zip(r.steps, r.mean_return, r.mean_undiscounted):
                w.writerow([r.method, r.seed, step, _fmt(a), _fmt(b), r.pretrain_steps, ""])


def run_experiment(cfg: ExperimentConfig, out_root: str | Path | None = None) -> tuple[list[RunRecord], Path]:
    """Run every (method, seed) pair and write curves, records and artifacts.

    A failure inside one seed is recorded on that seed's RunRecord and the rest
    of the run continues.
    """
    cfg.validate()
    grid = load_map(cfg.map)
    out = Path(out_root if out_root is not None else cfg.output_dir) / cfg.run_name
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())
    records: list[RunRecord] = []
    sr_cache: dict = {}
    for method in cfg.method:
        method_records = []
        for seed in cfg.seeds:
            try:
                rec, oset, counts = run_seed(grid, cfg, method, seed, sr_cache)
            except Exception as exc:  # one bad seed must not sink the run
                log.exception("method %s seed %d failed", method, seed)
                rec = RunRecord(seed, method, [], [], [], error=f"{type(exc).__name__}: {exc}")
                method_records.append(rec)
                continue
            method_records.append(rec)
            tag = f"{method}_seed{seed}"
            if oset.sr is not None:
                save_sr(oset.sr, out / f"sr_{tag}.csv")
            if oset.subgoals:
                save_subgoals(oset.subgoals, out / f"subgoals_{tag}.txt")
            if oset.options:
                save_options(oset.options, out / f"options_{tag}.npz")
            np.savetxt(out / f"counts_{tag}.txt", counts, fmt="%d")
            render_heatmap(counts, grid, out / f"heatmap_{tag}.pgm")
            log.info("%s seed %d: AUC %.4f (%.1fs)", method, seed, rec.auc, rec.wall_time)
        write_curve(out / f"curve_{method}.csv", method_records)
        records.extend(method_records)
    write_records(out / "records.csv", records)
    timing = {f"{r.method}/{r.seed}": {"wall_time": r.wall_time, "error": r.error} for r in records}
    (out / "timing.json").write_text(json.dumps(timing, indent=2, sort_keys=True))
    return records, out


def read_curve(path: str | Path) -> dict[str, np.ndarray]:
    with open(path) as f:
        rows = list(csv.DictReader(f))
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]} if rows else {}


def auc_by_seed(records_path: str | Path) -> dict[str, dict[int, float]]:
    """Mean evaluation return over eval points, per method and seed."""
    out: dict[str, dict[int, list[float]]] = {}
    with open(records_path) as f:
        for r in csv.DictReader(f):
            if r["error"]:
                continue
            out.setdefault(r["method"], {}).setdefault(int(r["seed"]), []).append(float(r["mean_return"]))
    return {m: {s: float(np.mean(v)) for s, v in d.items()} for m, d in out.items()}


def compare(record_dir: str | Path) -> list[tuple[str, float, float, int]]:
    """(method, mean AUC, stderr over seeds, n_seeds) for a finished run directory."""
    aucs = auc_by_seed(Path(record_dir) / "records.csv")
    rows = []
    for method, by_seed in aucs.items():
        v = np.array([by_seed[s] for s in sorted(by_seed)])
        se = float(v.std(ddof=1) / np.sqrt(len(v))) if len(v) > 1 else 0.0
        rows.append((method, float(v.mean()), se, len(v)))
    return sorted(rows, key=lambda r: -r[1])
