"""Scripted intents and noisy synthetic user inputs for training and batch eval.

A script fixes which object/bin the simulated user wants in each phase and,
for the dynamic scenarios, when that want flips to a different target. The
input synthesizer turns the momentary want into a left/neutral/right signal
with configurable corruption.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .env import EnvConfig, EpisodeState, Phase, UserInput
from .errors import ConfigError


class ScenarioKind(Enum):
    FIXED = "fixed"
    SWITCH_PICKUP = "pick"
    SWITCH_DROPOFF = "drop"
    SWITCH_BOTH = "both"


# Intent switches land 3-5 s into a phase.
SWITCH_WINDOW_SECONDS = (3.0, 5.0)


def switch_tick_range(tick_seconds: float) -> tuple[int, int]:
    lo = math.ceil(SWITCH_WINDOW_SECONDS[0] / tick_seconds)
    hi = math.floor(SWITCH_WINDOW_SECONDS[1] / tick_seconds)
    return lo, hi


@dataclass(frozen=True, slots=True)
class PhasePlan:
    goal: int
    switch_tick: int | None = None  # ticks after the phase starts
    switch_goal: int | None = None

    def goal_at(self, ticks_into_phase: int) -> int:
        if self.switch_tick is not None and ticks_into_phase >= self.switch_tick:
            return self.switch_goal  # type: ignore[return-value]
        return self.goal


@dataclass(frozen=True, slots=True)
class IntentScript:
    kind: ScenarioKind
    pickup: PhasePlan
    dropoff: PhasePlan

    def current_goal(self, phase: Phase, ticks_into_phase: int) -> int:
        plan = self.pickup if phase is Phase.PICK_UP else self.dropoff
        return plan.goal_at(ticks_into_phase)


@dataclass(frozen=True, slots=True)
class UserProfile:
    error_rate: float = 0.05    # wrong-direction signal per tick
    neutral_rate: float = 0.10  # idles when movement is wanted

    def validate(self) -> "UserProfile":
        if not (0 <= self.error_rate < 1 and 0 <= self.neutral_rate < 1):
            raise ConfigError("noise rates must lie in [0, 1)")
        if self.error_rate + self.neutral_rate > 1:
            raise ConfigError("error_rate + neutral_rate must not exceed 1")
        return self


ZERO_NOISE = UserProfile(error_rate=0.0, neutral_rate=0.0)


def _plan(n_goals: int, switch: bool, lo: int, hi: int, rng: np.random.Generator) -> PhasePlan:
    goal = int(rng.integers(n_goals))
    if not switch:
        return PhasePlan(goal)
    if n_goals < 2:
        raise ConfigError("switch scenarios need at least two candidate goals")
    others = [g for g in range(n_goals) if g != goal]
    return PhasePlan(
        goal,
        switch_tick=int(rng.integers(lo, hi + 1)),
        switch_goal=int(rng.choice(np.asarray(others))),
    )


def sample_scenario(
    kind: ScenarioKind,
    layout: EpisodeState,
    config: EnvConfig,
    rng: np.random.Generator,
) -> IntentScript:
    """Draw goals (uniform) and switch ticks (uniform in the 3-5 s band)."""
    lo, hi = switch_tick_range(config.tick_seconds)
    n_obj = len(layout.alive_objects())
    n_bin = len(layout.bins)
    pick_switch = kind in (ScenarioKind.SWITCH_PICKUP, ScenarioKind.SWITCH_BOTH)
    drop_switch = kind in (ScenarioKind.SWITCH_DROPOFF, ScenarioKind.SWITCH_BOTH)
    return IntentScript(
        kind=kind,
        pickup=_plan(n_obj, pick_switch, lo, hi, rng),
        dropoff=_plan(n_bin, drop_switch, lo, hi, rng),
    )


def goal_cell(state: EpisodeState, phase: Phase, goal_id: int) -> tuple[int, int]:
    if phase is Phase.PICK_UP:
        return state.objects[goal_id].cell
    return state.bins[goal_id].cell


def nominal_input(state: EpisodeState, target_cell: tuple[int, int]) -> UserInput:
    """Sign of the horizontal offset from gripper to target; neutral when aligned."""
    dc = target_cell[1] - state.gripper.cell[1]
    if dc == 0:
        return UserInput.NEUTRAL
    return UserInput.RIGHT if dc > 0 else UserInput.LEFT


def user_input(
    state: EpisodeState,
    target_cell: tuple[int, int],
    profile: UserProfile,
    rng: np.random.Generator,
) -> UserInput:
    """Noisy momentary signal for the current true goal.

    With probability ``error_rate`` the signal flips to one of the two wrong
    values (uniformly); with probability ``neutral_rate`` a wanted movement
    degrades to neutral.
    """
    nominal = nominal_input(state, target_cell)
    u = rng.random()
    if u < profile.error_rate:
        wrong = [v for v in (UserInput.LEFT, UserInput.NEUTRAL, UserInput.RIGHT) if v != nominal]
        return wrong[int(rng.integers(2))]
    if u < profile.error_rate + profile.neutral_rate:
        return UserInput.NEUTRAL
    return nominal
