"""Sliding-window Bayesian inference over phase-relevant goals.

Each tick contributes a Gaussian likelihood on the residual between the
observed user input and the input each candidate goal would have elicited
(the same sign rule the synthetic user follows). The posterior over the
window is recomputed from scratch every tick, so evidence older than the
window has no influence and a mid-task intent switch washes out within one
window length. A confidence threshold gates the MAP goal: below it the
belief reports a null goal and downstream behavior stays conservative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .env import Cell, EpisodeState, Phase
from .errors import ConfigError

NULL_GOAL: int | None = None


@dataclass(frozen=True, slots=True)
class InferenceConfig:
    tau: int = 4          # window length in ticks
    kappa: float = 0.8    # MAP confidence threshold
    sigma: float = 0.5    # stddev of the input-residual likelihood

    def validate(self) -> "InferenceConfig":
        if self.tau < 1:
            raise ConfigError("tau must be >= 1")
        if not (0 < self.kappa <= 1):
            raise ConfigError("kappa must lie in (0, 1]")
        if self.sigma <= 0:
            raise ConfigError("sigma must be positive")
        return self


@dataclass(frozen=True, slots=True)
class Snapshot:
    """The slice of state the likelihood needs: where the gripper was."""
    gripper_cell: Cell
    phase: Phase


@dataclass(slots=True)
class ObservationWindow:
    """Ring buffer of the last `tau` (snapshot, input) pairs, oldest first."""
    tau: int
    entries: list[tuple[Snapshot, int]] = field(default_factory=list)

    def push(self, snap: Snapshot, user_input: int) -> None:
        self.entries.append((snap, int(user_input)))
        if len(self.entries) > self.tau:
            del self.entries[0]

    def clear(self) -> None:
        self.entries.clear()

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True, slots=True)
class GoalBelief:
    posterior: dict[int, float]
    map_goal: int | None
    confidence: float

    def cell_of(self, state: EpisodeState) -> Cell | None:
        if self.map_goal is None:
            return None
        if state.phase is Phase.PICK_UP:
            return state.objects[self.map_goal].cell
        return state.bins[self.map_goal].cell


def candidate_goals(state: EpisodeState) -> list[tuple[int, Cell]]:
    """Alive objects during pick-up, bins during drop-off."""
    if state.phase is Phase.PICK_UP:
        return [(o.id, o.cell) for o in state.objects if o.alive]
    return [(b.id, b.cell) for b in state.bins]


def expected_input(gripper_cell: Cell, goal_cell: Cell) -> int:
    dc = goal_cell[1] - gripper_cell[1]
    return 0 if dc == 0 else (1 if dc > 0 else -1)


def likelihood(snap: Snapshot, user_input: int, goal_cell: Cell, config: InferenceConfig) -> float:
    """Gaussian density of the input residual for one observation; always > 0."""
    r = user_input - expected_input(snap.gripper_cell, goal_cell)
    s = config.sigma
    return math.exp(-0.5 * (r / s) ** 2) / (s * math.sqrt(2.0 * math.pi))


def _log_likelihood(snap: Snapshot, user_input: int, goal_cell: Cell, config: InferenceConfig) -> float:
    r = user_input - expected_input(snap.gripper_cell, goal_cell)
    s = config.sigma
    return -0.5 * (r / s) ** 2 - math.log(s * math.sqrt(2.0 * math.pi))


def window_log_likelihood(window: ObservationWindow, goal_cell: Cell, config: InferenceConfig) -> float:
    """Log of the product over window entries (empty window -> log 1 = 0)."""
    return sum(_log_likelihood(s, u, goal_cell, config) for s, u in window.entries)


def update_belief(
    window: ObservationWindow,
    config: InferenceConfig,
    goals: list[tuple[int, Cell]],
    prior: dict[int, float] | None = None,
) -> GoalBelief:
    """Posterior over candidate goals from the current window, MAP gated by kappa.

    Computed in log space and normalized with a max shift, so long windows
    and large residuals cannot underflow. Ties in the argmax resolve to the
    lowest goal id.
    """
    if not goals:
        raise ConfigError("update_belief needs a non-empty candidate set")
    ids = [g for g, _ in goals]
    logs = np.empty(len(goals), dtype=np.float64)
    for i, (gid, cell) in enumerate(goals):
        p = 1.0 / len(goals) if prior is None else prior[gid]
        logs[i] = math.log(p) + window_log_likelihood(window, cell, config)
    logs -= logs.max()
    w = np.exp(logs)
    total = float(w.sum())
    if not np.isfinite(total) or total <= 0.0:
        raise FloatingPointError("degenerate posterior: no probability mass")
    probs = w / total
    best = int(np.argmax(probs))  # first max -> lowest goal id on ties
    confidence = float(probs[best])
    map_goal = ids[best] if confidence >= config.kappa else NULL_GOAL
    return GoalBelief(
        posterior={gid: float(p) for gid, p in zip(ids, probs)},
        map_goal=map_goal,
        confidence=confidence,
    )
