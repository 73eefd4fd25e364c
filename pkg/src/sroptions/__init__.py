"""Successor options on tabular grid worlds."""
from .env_grid import Action, GridMap, TaskSpec, Transition, load_map, parse_map, step, transition_matrix
from .sr import SRMatrix, l1_norms, learn_sr, oracle_sr, sr_oracle, td_update

__all__ = [
    "Action", "GridMap", "TaskSpec", "Transition", "load_map", "parse_map", "step", "transition_matrix",
    "SRMatrix", "l1_norms", "learn_sr", "oracle_sr", "sr_oracle", "td_update",
]
