"""Comparison controllers: expected-cost greedy (HO-style) and raw-image DQN support.

The HO-style controller picks, each tick, the movement action minimizing the
posterior-weighted distance to the candidate goals, grasping or releasing
only when it sits on a candidate cell that carries at least half the
posterior mass. The raw-DQN baseline reuses the full learning stack but
observes an unsegmented three-channel grid (gripper, every object, every
bin) with no goal conditioning.
"""
from __future__ import annotations

import numpy as np

from .env import Action, Cell, EpisodeState, MOVES, Phase, distance_norm
from .inference import GoalBelief, candidate_goals

RAW_CHANNELS = 3

# Movement candidates for the expected-cost sweep, in action-index order.
_MOVE_SET = (Action.LEFT, Action.RIGHT, Action.FORWARD, Action.BACKWARD, Action.HOLD)


def raw_encode(state: EpisodeState) -> np.ndarray:
    """(3, G, G) uint8 frame: gripper / alive objects / bins, no goal channel."""
    g = state.grid_size
    frame = np.zeros((RAW_CHANNELS, g, g), dtype=np.uint8)
    r, c = state.gripper.cell
    frame[0, r, c] = 1
    for o in state.objects:
        if o.alive:
            frame[1, o.cell[0], o.cell[1]] = 1
    for b in state.bins:
        frame[2, b.cell[0], b.cell[1]] = 1
    return frame


def _next_cell(state: EpisodeState, action: Action) -> Cell:
    if action not in MOVES:
        return state.gripper.cell
    dr, dc = MOVES[action]
    g = state.grid_size
    r = min(max(state.gripper.cell[0] + dr, 0), g - 1)
    c = min(max(state.gripper.cell[1] + dc, 0), g - 1)
    return (r, c)


def ho_action(belief: GoalBelief, state: EpisodeState) -> Action:
    """One-step expected-distance minimizer over the current posterior.

    Grasp/release fire only on a candidate cell whose goal holds posterior
    mass >= 0.5. Cost ties prefer HOLD, then the lowest action index.
    """
    goals = candidate_goals(state)
    here = state.gripper.cell
    for gid, cell in goals:
        if cell == here and belief.posterior.get(gid, 0.0) >= 0.5:
            return Action.GRASP if state.phase is Phase.PICK_UP else Action.RELEASE
    costs: dict[Action, float] = {}
    for action in _MOVE_SET:
        nxt = _next_cell(state, action)
        costs[action] = sum(
            belief.posterior.get(gid, 0.0) * distance_norm(nxt, cell, state.grid_size)
            for gid, cell in goals
        )
    best = min(costs.values())
    tied = [a for a in _MOVE_SET if costs[a] <= best + 1e-12]
    if Action.HOLD in tied:
        return Action.HOLD
    return Action(min(int(a) for a in tied))
