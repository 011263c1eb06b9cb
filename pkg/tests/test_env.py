import math

import numpy as np
import pytest

from aras.env import (Action, EnvConfig, Outcome, Phase, check_termination,
                      distance_norm, finalize, reset, step)
from aras.errors import ConfigError, UsageError


def fresh(seed=7, **kw):
    cfg = EnvConfig(**kw)
    return cfg, reset(cfg, np.random.default_rng(seed))


def test_reset_deterministic():
    _, a = fresh(seed=7)
    _, b = fresh(seed=7)
    assert a == b
    assert repr(a).encode() == repr(b).encode()


def test_reset_layout_shape():
    cfg, s = fresh()
    cells = [o.cell for o in s.objects] + [b.cell for b in s.bins]
    assert len(cells) == 6
    assert len(set(cells)) == 6
    assert s.gripper.cell == (0, cfg.grid_size // 2)
    assert not s.gripper.closed and s.gripper.held is None
    assert s.phase is Phase.PICK_UP and s.step_count == 0
    # objects sit in the far band, bins in a separate nearer band
    assert all(o.cell[0] >= 3 * cfg.grid_size // 4 for o in s.objects)
    assert all(cfg.grid_size // 4 <= b.cell[0] < cfg.grid_size // 2 for b in s.bins)


def test_reset_overfull_grid_errors():
    with pytest.raises(ConfigError):
        reset(EnvConfig(grid_size=8, n_objects=40), np.random.default_rng(0))


def test_hold_is_identity_except_counter():
    _, s = fresh()
    r = step(s, Action.HOLD)
    assert r.state.gripper.cell == s.gripper.cell
    assert r.state.step_count == s.step_count + 1
    assert not r.moved


def test_boundary_clamp():
    _, s = fresh()
    cur = s
    for _ in range(s.grid_size + 2):
        cur = step(cur, Action.LEFT).state
    assert cur.gripper.cell[1] == 0
    r = step(cur, Action.LEFT)
    assert r.state.gripper.cell[1] == 0
    assert not r.moved
    assert r.state.step_count == cur.step_count + 1


def goto(state, cell):
    """Drive the gripper to a cell with raw moves (test helper)."""
    while state.gripper.cell != cell:
        r, c = state.gripper.cell
        if r != cell[0]:
            a = Action.FORWARD if cell[0] > r else Action.BACKWARD
        else:
            a = Action.RIGHT if cell[1] > c else Action.LEFT
        state = step(state, a).state
        assert state.terminal is None
    return state


def test_grasp_at_object_cell():
    _, s = fresh()
    target = s.objects[0]
    s = goto(s, target.cell)
    r = step(s, Action.GRASP)
    assert r.grasped == target.id
    assert r.state.phase is Phase.DROP_OFF
    assert r.state.gripper.closed and r.state.gripper.held == target.id
    assert r.state.terminal is None


def test_grasp_empty_cell_fails():
    _, s = fresh()
    r = step(s, Action.GRASP)
    assert r.state.terminal is Outcome.FAILURE
    assert check_termination(r.state, 0) is Outcome.FAILURE


def test_wrong_object_grasp_is_intent_failure():
    _, s = fresh()
    s = goto(s, s.objects[1].cell)
    r = step(s, Action.GRASP)
    assert r.state.terminal is None  # mechanically fine
    assert check_termination(r.state, intended_goal=0) is Outcome.FAILURE
    assert check_termination(r.state, intended_goal=1) is None


def carry_to_bin(seed=7):
    _, s = fresh(seed)
    s = goto(s, s.objects[0].cell)
    s = step(s, Action.GRASP).state
    s = goto(s, s.bins[2].cell)
    return s


def test_release_into_intended_bin_succeeds():
    s = carry_to_bin()
    r = step(s, Action.RELEASE)
    assert r.released == 2
    assert check_termination(r.state, intended_goal=2) is Outcome.SUCCESS
    done = finalize(r.state, Outcome.SUCCESS)
    assert done.terminal is Outcome.SUCCESS


def test_release_into_wrong_bin_fails():
    s = carry_to_bin()
    r = step(s, Action.RELEASE)
    assert check_termination(r.state, intended_goal=0) is Outcome.FAILURE


def test_release_off_bin_fails():
    _, s = fresh()
    s = goto(s, s.objects[0].cell)
    s = step(s, Action.GRASP).state
    r = step(s, Action.RELEASE)
    assert r.state.terminal is Outcome.FAILURE
    assert r.failed_reason == "release-off-bin"


def test_held_object_tracks_gripper():
    _, s = fresh()
    s = goto(s, s.objects[0].cell)
    s = step(s, Action.GRASP).state
    s = step(s, Action.LEFT).state
    assert s.objects[s.gripper.held].cell == s.gripper.cell


def test_step_budget_exhaustion_fails():
    cfg, s = fresh(max_steps=5)
    for _ in range(4):
        s = step(s, Action.HOLD).state
        assert s.terminal is None
    s = step(s, Action.HOLD).state
    assert s.terminal is Outcome.FAILURE
    assert check_termination(s, 0) is Outcome.FAILURE


def test_step_on_terminal_raises():
    cfg, s = fresh(max_steps=1)
    s = step(s, Action.HOLD).state
    with pytest.raises(UsageError):
        step(s, Action.HOLD)


def test_successor_always_in_bounds():
    cfg, s = fresh(grid_size=8)
    rng = np.random.default_rng(1)
    cur = s
    for _ in range(500):
        if cur.terminal is not None or cur.deposited_bin is not None:
            cur = reset(cfg, rng)
        a = Action(int(rng.integers(7)))
        cur = step(cur, a).state
        r, c = cur.gripper.cell
        assert 0 <= r < 8 and 0 <= c < 8


def test_phase_never_returns_to_pickup():
    cfg, s = fresh()
    rng = np.random.default_rng(2)
    for _ in range(200):
        cur = reset(cfg, rng)
        seen_dropoff = False
        while cur.terminal is None and cur.deposited_bin is None:
            a = Action(int(rng.integers(7)))
            cur = step(cur, a).state
            if cur.phase is Phase.DROP_OFF:
                seen_dropoff = True
            if seen_dropoff:
                assert cur.phase is Phase.DROP_OFF


def test_step_is_pure():
    _, s = fresh()
    a = step(s, Action.FORWARD)
    b = step(s, Action.FORWARD)
    assert a == b


def test_distance_norm_zero_and_corners():
    assert distance_norm((3, 3), (3, 3), 16) == 0.0
    assert distance_norm((0, 0), (15, 15), 16) == pytest.approx(1.0)


def test_distance_norm_hand_value():
    # (0,0) to (3,4): hypot = 5; diagonal of a 16-grid = 15*sqrt(2)
    assert distance_norm((0, 0), (3, 4), 16) == pytest.approx(5 / (15 * math.sqrt(2)))


def test_distance_norm_properties_exhaustive_8x8():
    cells = [(r, c) for r in range(8) for c in range(8)]
    for p in cells:
        for g in cells:
            d = distance_norm(p, g, 8)
            assert 0.0 <= d <= 1.0 + 1e-12
            assert d == distance_norm(g, p, 8)
            assert (d == 0.0) == (p == g)
