from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sroptions.env_grid import (
    Action,
    MapError,
    N_ACTIONS,
    TaskSpec,
    all_pairs_distances,
    bfs_distances,
    bundled_maps,
    corner_states,
    is_connected,
    load_map,
    parse_map,
    step,
    transition_matrix,
)


@st.composite
def random_maps(draw, max_side=7):
    h = draw(st.integers(1, max_side))
    w = draw(st.integers(1, max_side))
    cells = draw(st.lists(st.booleans(), min_size=h * w, max_size=h * w))
    if all(cells):
        cells[draw(st.integers(0, h * w - 1))] = False
    text = "\n".join("".join("#" if cells[r * w + c] else "." for c in range(w)) for r in range(h))
    return parse_map(text)


def test_bundled_maps_present_and_connected():
    names = bundled_maps()
    for expected in ("grid1", "grid2", "grid3", "grid4", "open5x5", "tworooms"):
        assert expected in names
    for name in names:
        assert is_connected(load_map(name)), name


def test_row_major_indexing():
    g = parse_map(".#.\n...\n")
    assert g.n_states == 5
    assert g.cells == ((0, 0), (0, 2), (1, 0), (1, 1), (1, 2))
    assert g.state_of(1, 1) == 3
    assert g.cell_of(1) == (0, 2)
    with pytest.raises(MapError):
        g.state_of(0, 1)
    with pytest.raises(IndexError):
        g.cell_of(5)


def test_start_and_goal_markers_are_free():
    g = parse_map("S.G\n")
    assert g.n_states == 3


@pytest.mark.parametrize("text", ["", "\n\n", "..\n.\n", "..x\n"])
def test_bad_maps_rejected(text):
    with pytest.raises(MapError):
        parse_map(text)


def test_all_walls_rejected():
    with pytest.raises(MapError):
        parse_map("##\n##\n")


def test_load_map_from_path(tmp_path):
    p = tmp_path / "tiny.txt"
    p.write_text("...\n.#.\n")
    g = load_map(p)
    assert g.name == "tiny" and g.n_states == 5


def test_load_missing_map():
    with pytest.raises(FileNotFoundError):
        load_map("no_such_map_here")


def test_step_clamps_at_walls_and_edges():
    g = parse_map("..\n#.\n")
    s00, s01, s11 = g.state_of(0, 0), g.state_of(0, 1), g.state_of(1, 1)
    assert step(g, s00, Action.LEFT) == s00
    assert step(g, s00, Action.UP) == s00
    assert step(g, s00, Action.DOWN) == s00  # wall below
    assert step(g, s00, Action.RIGHT) == s01
    assert step(g, s01, Action.DOWN) == s11
    assert step(g, s11, Action.NOOP) == s11
    with pytest.raises(IndexError):
        step(g, 3, Action.NOOP)
    with pytest.raises(ValueError):
        step(g, 0, 7)


def test_two_cell_transition_matrix(two_cell):
    # each cell: 4 of 5 actions stay put, one moves across
    P = transition_matrix(two_cell)
    np.testing.assert_allclose(P, [[0.8, 0.2], [0.2, 0.8]])


def test_transition_matrix_custom_policy():
    g = parse_map("...\n")
    pi = np.zeros((3, N_ACTIONS))
    pi[:, Action.RIGHT] = 1.0
    P = transition_matrix(g, pi)
    np.testing.assert_array_equal(P, [[0, 1, 0], [0, 0, 1], [0, 0, 1]])
    with pytest.raises(ValueError):
        transition_matrix(g, pi * 0.5)


@settings(max_examples=60, deadline=None)
@given(random_maps())
def test_transition_rows_are_distributions(g):
    P = transition_matrix(g)
    assert P.shape == (g.n_states, g.n_states)
    assert (P >= 0).all()
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
    # NOOP always contributes at least 1/5 self-loop
    assert (np.diag(P) >= 0.2 - 1e-12).all()


@settings(max_examples=60, deadline=None)
@given(random_maps())
def test_moves_are_unit_steps_and_symmetric(g):
    for s in range(g.n_states):
        r, c = g.cell_of(s)
        for a in range(N_ACTIONS):
            s1 = step(g, s, a)
            r1, c1 = g.cell_of(s1)
            assert abs(r1 - r) + abs(c1 - c) <= 1
            if s1 != s:
                back = {Action.LEFT: Action.RIGHT, Action.RIGHT: Action.LEFT,
                        Action.UP: Action.DOWN, Action.DOWN: Action.UP}[Action(a)]
                assert step(g, s1, back) == s


@settings(max_examples=40, deadline=None)
@given(random_maps())
def test_bfs_matches_floyd_warshall(g):
    n = g.n_states
    D = np.full((n, n), np.inf)
    np.fill_diagonal(D, 0)
    for s in range(n):
        for a in range(N_ACTIONS):
            s1 = step(g, s, a)
            if s1 != s:
                D[s, s1] = 1
    for k in range(n):
        D = np.minimum(D, D[:, [k]] + D[[k], :])
    expected = np.where(np.isinf(D), -1, D).astype(int)
    np.testing.assert_array_equal(all_pairs_distances(g), expected)
    assert is_connected(g) == bool((expected >= 0).all())


def test_bfs_distances_chain():
    g = parse_map("....\n")
    np.testing.assert_array_equal(bfs_distances(g, 0), [0, 1, 2, 3])


def test_task_spec():
    t = TaskSpec(goal=2)
    assert t.reward(2) == 10.0 and t.reward(1) == 0.0
    with pytest.raises(ValueError):
        TaskSpec(goal=0, gamma=1.0)
    with pytest.raises(ValueError):
        TaskSpec(goal=0, horizon=0)
    g = parse_map("...\n")
    with pytest.raises(IndexError):
        TaskSpec(goal=5).validate(g)
    rng = np.random.default_rng(0)
    draws = {TaskSpec(goal=0).sample_start(g, rng) for _ in range(100)}
    assert draws == {0, 1, 2}
    assert TaskSpec(goal=0, start=1).sample_start(g, rng) == 1


def test_corner_states():
    g = parse_map("...\n.#.\n...\n")
    bl, tr = corner_states(g)
    assert g.cell_of(bl) == (2, 0)
    assert g.cell_of(tr) == (0, 2)


def test_grid_is_immutable(grid1):
    with pytest.raises(ValueError):
        grid1.next_state[0, 0] = 3
    with pytest.raises(Exception):
        grid1.width = 3


def test_to_text_roundtrip(grid1):
    assert parse_map(grid1.to_text()).cells == grid1.cells
