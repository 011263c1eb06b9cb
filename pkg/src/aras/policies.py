"""Policy adapters the episode engine can drive interchangeably.

Each adapter declares which per-tick products it needs (belief, latent
stack, raw stack) so the engine only computes what a controller actually
consumes, and whether it emits actions directly in place of a 1-D user
signal (the manual-style controllers).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .baselines import ho_action
from .env import Action, Cell, EpisodeState, Phase, UserInput
from .inference import GoalBelief
from .latent import LatentStack
from .policy import select_action
from .qnet import QNetwork


@dataclass(slots=True)
class TickContext:
    state: EpisodeState
    tick: int
    user_input: int | None
    belief: GoalBelief | None
    stack: LatentStack | None
    raw_stack: LatentStack | None
    true_goal_cell: Cell


class Policy(Protocol):
    name: str
    needs_belief: bool
    needs_latent: bool
    needs_raw: bool
    provides_input: bool
    reward_goal: str  # "belief" or "true"

    def act(self, ctx: TickContext, rng: np.random.Generator) -> Action: ...


def greedy_toward(state: EpisodeState, target: Cell) -> Action:
    """Move along the axis with the larger offset; grasp/release when on target."""
    r, c = state.gripper.cell
    dr, dc = target[0] - r, target[1] - c
    if dr == 0 and dc == 0:
        return Action.GRASP if state.phase is Phase.PICK_UP else Action.RELEASE
    if abs(dr) >= abs(dc):
        return Action.FORWARD if dr > 0 else Action.BACKWARD
    return Action.RIGHT if dc > 0 else Action.LEFT


def input_for_action(action: Action) -> int:
    """The 1-D signal a direct controller's keypress corresponds to.

    Lateral keys carry their sign, hold is neutral, and any other commanded
    action counts as one unit of input for the effort metrics.
    """
    if action is Action.LEFT:
        return -1
    if action is Action.HOLD:
        return 0
    return 1


class ArasPolicy:
    """Masked epsilon-greedy over the learned Q-network (epsilon=0 in deployment)."""

    name = "aras"
    needs_belief = True
    needs_latent = True
    needs_raw = False
    provides_input = False
    reward_goal = "belief"

    def __init__(self, net: QNetwork, epsilon: float = 0.0, safety_mask: bool = True):
        self.net = net
        self.epsilon = epsilon
        self.safety_mask = safety_mask

    def act(self, ctx: TickContext, rng: np.random.Generator) -> Action:
        return select_action(
            self.net,
            ctx.stack.frames_array(self.net.dtype),
            ctx.stack.inputs_array(),
            self.epsilon,
            ctx.belief.map_goal is None,
            self.safety_mask,
            rng,
        )


class RawDqnPolicy:
    """Epsilon-greedy DQN over the unsegmented observation; never masked."""

    name = "dqn"
    needs_belief = False
    needs_latent = False
    needs_raw = True
    provides_input = False
    reward_goal = "true"

    def __init__(self, net: QNetwork, epsilon: float = 0.0):
        self.net = net
        self.epsilon = epsilon

    def act(self, ctx: TickContext, rng: np.random.Generator) -> Action:
        return select_action(
            self.net,
            ctx.raw_stack.frames_array(self.net.dtype),
            ctx.raw_stack.inputs_array(),
            self.epsilon,
            map_goal_is_null=False,
            safety_mask=False,
            rng=rng,
        )


class HoPolicy:
    name = "ho"
    needs_belief = True
    needs_latent = False
    needs_raw = False
    provides_input = False
    reward_goal = "belief"

    def act(self, ctx: TickContext, rng: np.random.Generator) -> Action:
        return ho_action(ctx.belief, ctx.state)


class OraclePolicy:
    """Perfect direct controller that always knows the momentary true goal."""

    name = "oracle"
    needs_belief = False
    needs_latent = False
    needs_raw = False
    provides_input = True
    reward_goal = "true"

    def act(self, ctx: TickContext, rng: np.random.Generator) -> Action:
        return greedy_toward(ctx.state, ctx.true_goal_cell)


class ManualPolicy:
    """Noisy direct controller emulating a human driving every action."""

    name = "manual"
    needs_belief = False
    needs_latent = False
    needs_raw = False
    provides_input = True
    reward_goal = "true"

    def __init__(self, wiggle: float = 0.1):
        self.wiggle = wiggle

    def act(self, ctx: TickContext, rng: np.random.Generator) -> Action:
        if self.wiggle > 0 and rng.random() < self.wiggle:
            return Action(int(rng.integers(4)))  # a stray directional keypress
        return greedy_toward(ctx.state, ctx.true_goal_cell)


class DemonstrationPolicy:
    """Oracle actions riding on synthetic user inputs, used to seed replay.

    Unlike :class:`OraclePolicy` the user signal still comes from the
    synthetic input source, so the recorded windows, beliefs, and latent
    stacks look exactly like the learner's own experience; only the action
    choice is privileged.
    """

    name = "demo"
    provides_input = False

    def __init__(self, observation: str = "latent"):
        self.needs_belief = observation == "latent"
        self.needs_latent = observation == "latent"
        self.needs_raw = observation == "raw"
        self.reward_goal = "belief" if observation == "latent" else "true"

    def act(self, ctx: TickContext, rng: np.random.Generator) -> Action:
        return greedy_toward(ctx.state, ctx.true_goal_cell)
