import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from react_xrl.env import (
    GOAL,
    HOLE,
    RUNNING,
    TIMEOUT,
    GridSpec,
    InvalidStateError,
    ReachSpec,
    StepOutcome,
    env_from_dict,
    grid_step,
    load_env,
    max_state_distance,
    position_space_size,
    reach_step,
    rho,
)

UP, RIGHT, DOWN, LEFT = range(4)


def test_wall_bump_keeps_position_and_costs_one():
    g = GridSpec()
    out = grid_step(g, (1, 1), UP)
    assert out == StepOutcome((1, 1), -1.0, False, RUNNING)
    assert grid_step(g, (1, 1), LEFT).next_state == (1, 1)


def test_goal_step_is_additive():
    g = GridSpec()
    out = grid_step(g, (1, 8), RIGHT)
    assert out.reward == 49.0 and out.terminal and out.terminal_kind == GOAL


def test_hole_step_is_additive():
    g = GridSpec(holes={(2, 2)})
    out = g.step((2, 1), RIGHT)
    assert (out.reward, out.terminal_kind) == (-51.0, HOLE)


def test_timeout_at_max_steps():
    g = GridSpec(max_steps=3)
    assert not g.step((5, 5), UP, 1).terminal
    out = g.step((5, 5), UP, 2)
    assert out.terminal and out.terminal_kind == TIMEOUT


def test_step_outcome_kind_consistency():
    with pytest.raises(ValueError):
        StepOutcome((1, 1), 0.0, True, RUNNING)
    with pytest.raises(ValueError):
        StepOutcome((1, 1), 0.0, False, GOAL)


@pytest.mark.parametrize("start", [(0, 0), (0, 5), (10, 10)])
def test_wall_starts_rejected(start):
    with pytest.raises(InvalidStateError):
        GridSpec().validate_start(start)


def test_hole_and_goal_starts_rejected():
    g = GridSpec(holes={(4, 4)})
    with pytest.raises(InvalidStateError):
        g.validate_start((4, 4))
    with pytest.raises(InvalidStateError):
        g.validate_start(g.goal)


def test_acting_from_a_hole_is_rejected():
    with pytest.raises(InvalidStateError):
        GridSpec(holes={(4, 4)}).step((4, 4), UP)


def test_spec_validation():
    with pytest.raises(ValueError):
        GridSpec(goal=(0, 0))
    with pytest.raises(ValueError):
        GridSpec(holes={(9, 1)})
    with pytest.raises(ValueError):
        GridSpec(max_steps=0)
    with pytest.raises(ValueError):
        ReachSpec(tolerance=0)
    with pytest.raises(ValueError):
        ReachSpec(horizon=0)
    with pytest.raises(ValueError):
        ReachSpec(target=(1.0, 0.0, 0.0))


def test_position_space_sizes():
    assert position_space_size(GridSpec()) == 81
    holes = {(2, 2), (3, 5), (4, 4), (6, 7), (8, 3)}
    g = GridSpec(holes=holes)
    assert position_space_size(g) == 81 - 5 == len(g.traversable_cells())
    assert position_space_size(ReachSpec()) == 1000


def test_max_state_distance():
    assert max_state_distance(GridSpec()) == pytest.approx(8 * math.sqrt(2), abs=1e-12)
    assert max_state_distance(GridSpec(width=3, height=3, goal=(1, 1), training_start=(1, 1))) == 0
    assert max_state_distance(ReachSpec()) == pytest.approx(0.5 * math.sqrt(3), abs=1e-12)


def test_rho_is_identity_on_positions():
    assert rho((3, 4)) == (3, 4)
    assert rho((0.1, 0.2, 0.0)) == (0.1, 0.2, 0.0)


def test_reach_rewards():
    r = ReachSpec()
    assert reach_step(r, (0, 0, 0), 0).reward == 0.0
    out = reach_step(r, (0.06, 0.0, 0.0), 5)  # +z keeps it outside
    assert out.reward == -1.0 and not out.terminal
    assert reach_step(r, (0.06, 0.0, 0.0), 2).reward == 0.0  # -x lands at 0.01


def test_reach_all_outside_runs_to_timeout():
    r = ReachSpec()
    pos, total = (0.25, 0.25, 0.25), 0.0
    for t in range(r.horizon):
        out = r.step(pos, 0, t)
        total += out.reward
        pos = out.next_state
    assert total == -50.0 and out.terminal_kind == TIMEOUT


def test_bfs_reaches_goal_from_everywhere_without_holes():
    g = GridSpec()
    assert set(g.distances_to_goal()) == set(g.traversable_cells())


def test_legalize_picks_nearest_then_row_major():
    g = GridSpec(holes={(5, 5)})
    # (4,5), (5,4), (5,6), (6,5) all sit at distance 1; (4,5) comes first row-major
    assert g.legalize((5, 5)) == (4, 5)
    assert g.legalize(g.goal) == (1, 8)
    brute = min(g.legal_starts(), key=lambda c: ((c[0] - 5) ** 2 + (c[1] - 5) ** 2, c))
    assert g.legalize((5, 5)) == brute


def test_presets_and_loading(tmp_path):
    assert load_env("flatgrid11") == GridSpec()
    holey = load_env("holeygrid11")
    assert len(holey.holes) == 8
    assert env_from_dict(holey.to_dict()) == holey
    path = tmp_path / "env.json"
    path.write_text(json.dumps(ReachSpec(horizon=20).to_dict()))
    assert load_env(path) == ReachSpec(horizon=20)
    with pytest.raises(FileNotFoundError):
        load_env("no-such-preset")
    with pytest.raises(ValueError):
        env_from_dict({"kind": "maze"})


@given(st.integers(1, 9), st.integers(1, 9), st.integers(0, 3), st.integers(0, 99))
def test_grid_step_deterministic(r, c, a, t):
    g = GridSpec()
    if (r, c) == g.goal:
        return
    assert g.step((r, c), a, t) == g.step((r, c), a, t)


@given(
    st.tuples(*[st.floats(-0.25, 0.25, allow_nan=False)] * 3),
    st.lists(st.integers(0, 6), min_size=1, max_size=60),
)
def test_reach_positions_stay_in_bounds(start, actions):
    r = ReachSpec()
    pos = start
    for t, a in enumerate(actions[: r.horizon]):
        pos = r.step(pos, a, t).next_state
        assert r.in_bounds(pos)
