"""Reward shaping, action selection, experience replay, and TD updates.

The per-step reward blends three terms: progress toward the inferred goal,
agreement between the chosen action and the user's momentary signal, and a
dominant terminal bonus/penalty for completing or failing the task. Action
selection is epsilon-greedy with an optional safety mask that confines the
policy to user-commandable actions whenever the goal belief is null.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import (AMPLIFIED_ACTIONS, Action, Cell, N_ACTIONS, Outcome,
                  UserInput, distance_norm)
from .errors import ConfigError, NumericalFault
from .nn import Adam
from .qnet import QNetwork

# Actions the user can command directly; the safety mask restricts the
# policy to these while the belief is null.
SAFE_ACTIONS = (Action.LEFT, Action.RIGHT, Action.HOLD)

# Which action "equals" each input value for the alignment reward.
INPUT_TO_ACTION = {-1: Action.LEFT, 0: Action.HOLD, 1: Action.RIGHT}


@dataclass(frozen=True, slots=True)
class RewardWeights:
    """Weights for the three reward components.

    The completion weight must dominate not just any single step but the
    whole shaped-reward stream an episode can collect by loitering next to
    a goal (up to ~(alpha+beta)/(1-gamma) discounted), otherwise hovering
    outvalues finishing the task.
    """

    alpha_gp: float = 1.0   # goal-progress weight
    beta_ia: float = 0.5    # input-alignment weight
    delta_tc: float = 50.0  # task-completion weight

    def validate(self) -> "RewardWeights":
        if min(self.alpha_gp, self.beta_ia, self.delta_tc) < 0:
            raise ConfigError("reward weights must be non-negative")
        if not self.delta_tc > self.alpha_gp + self.beta_ia:
            raise ConfigError(
                "delta_tc must exceed alpha_gp + beta_ia so the terminal "
                "signal dominates any single step"
            )
        return self


@dataclass(frozen=True, slots=True)
class RewardTerms:
    gp: float
    ia: float
    tc: float

    def total(self, w: RewardWeights) -> float:
        return w.alpha_gp * self.gp + w.beta_ia * self.ia + w.delta_tc * self.tc


def reward_terms(
    goal_cell: Cell | None,
    next_gripper: Cell,
    grid_size: int,
    action: Action,
    user_input: int,
    outcome: Outcome | None,
) -> RewardTerms:
    """Unweighted reward components for one transition.

    ``goal_cell`` is the cell of the goal the acting belief committed to
    (None when null): progress is measured to it from the post-action
    gripper cell. Alignment pays out when the action literally matches the
    user's signal. The completion term is +1/-1 on terminal outcomes.
    """
    gp = 0.0 if goal_cell is None else 1.0 - distance_norm(next_gripper, goal_cell, grid_size)
    ia = 1.0 if INPUT_TO_ACTION.get(int(user_input)) == action else 0.0
    tc = 0.0
    if outcome is Outcome.SUCCESS:
        tc = 1.0
    elif outcome is Outcome.FAILURE:
        tc = -1.0
    return RewardTerms(gp=gp, ia=ia, tc=tc)


def compute_reward(
    goal_cell: Cell | None,
    next_gripper: Cell,
    grid_size: int,
    action: Action,
    user_input: int,
    outcome: Outcome | None,
    weights: RewardWeights,
) -> float:
    return reward_terms(goal_cell, next_gripper, grid_size, action, user_input, outcome).total(weights)


@dataclass(frozen=True, slots=True)
class TrainConfig:
    learning_rate: float = 0.001
    gamma: float = 0.95
    batch_size: int = 64
    replay_capacity: int = 50_000
    # Environment ticks between target-network syncs. Value propagation
    # along the pick-carry-place chain advances roughly one bootstrap hop
    # per sync, so desk-scale budgets need tick-frequent syncs.
    target_update_every: int = 1000
    epsilon_start: float = 0.9
    epsilon_final: float = 0.1
    epsilon_decay_steps: int = 20_000     # env ticks over which epsilon anneals
    episodes: int = 5000
    learn_every: int = 4                  # env ticks between gradient steps
    learn_start: int = 1000               # replay size before learning begins
    # Scripted-controller episodes whose transitions seed the replay buffer
    # before learning starts; epsilon-greedy exploration alone essentially
    # never strings together grasp-carry-release on a desk-scale budget.
    demo_episodes: int = 400
    # Re-roll one demonstration episode into the ring every N training
    # episodes so FIFO eviction cannot starve the buffer of successful
    # chains (0 disables).
    demo_refresh_every: int = 10
    # Demonstrations live in their own ring and take a fixed share of every
    # batch; each ring is sampled uniformly on its own.
    demo_batch_fraction: float = 0.25
    demo_capacity: int = 20_000
    # Large-margin supervision on demonstration rows: without it, actions
    # the demos never take keep unconstrained Q-values that the bootstrap
    # max inflates until the greedy policy picks garbage.
    demo_margin: float = 0.8
    demo_margin_weight: float = 1.0
    # Optional fraction of episodes trained grasp-to-terminate (the pick-up
    # curriculum); off by default since demonstration seeding covers
    # discovery without splitting the task semantics.
    curriculum_frac: float = 0.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    safety_mask: bool = True
    huber: bool = False
    stack_size: int = 4
    best_window: int = 100                # rolling-success window for best checkpoint

    def validate(self) -> "TrainConfig":
        if not (0 < self.gamma < 1):
            raise ConfigError("gamma must lie in (0, 1)")
        if not (0 <= self.epsilon_final <= self.epsilon_start <= 1):
            raise ConfigError("epsilon bounds must satisfy 0 <= final <= start <= 1")
        if min(self.batch_size, self.replay_capacity, self.target_update_every,
               self.learn_every, self.episodes + 1, self.stack_size) < 1:
            raise ConfigError("capacities and cadences must be positive")
        if not (0.0 <= self.curriculum_frac < 1.0):
            raise ConfigError("curriculum_frac must lie in [0, 1)")
        if self.demo_episodes < 0:
            raise ConfigError("demo_episodes must be non-negative")
        return self


def epsilon_at(step: int, cfg: TrainConfig) -> float:
    """Piecewise-linear anneal from start to final over epsilon_decay_steps."""
    if cfg.epsilon_decay_steps <= 0 or step >= cfg.epsilon_decay_steps:
        return cfg.epsilon_final
    frac = step / cfg.epsilon_decay_steps
    return cfg.epsilon_start + frac * (cfg.epsilon_final - cfg.epsilon_start)


def permitted_actions(map_goal_is_null: bool, safety_mask: bool) -> tuple[Action, ...]:
    if safety_mask and map_goal_is_null:
        return SAFE_ACTIONS
    return tuple(Action)


def select_action(
    net: QNetwork,
    frames: np.ndarray,
    inputs: np.ndarray,
    epsilon: float,
    map_goal_is_null: bool,
    safety_mask: bool,
    rng: np.random.Generator,
) -> Action:
    """Epsilon-greedy over the permitted set; greedy ties go to the lowest index."""
    allowed = permitted_actions(map_goal_is_null, safety_mask)
    if epsilon > 0 and rng.random() < epsilon:
        return allowed[int(rng.integers(len(allowed)))]
    q = net.forward(frames[None], inputs[None], train=False)[0]
    idx = [int(a) for a in allowed]
    return Action(idx[int(np.argmax(q[idx]))])


class ReplayBuffer:
    """Fixed-capacity ring of transitions with uniform sampling.

    Frames are stored as uint8 (they are one-hot grids), everything else in
    compact scalar arrays. FIFO eviction once full.
    """

    def __init__(self, capacity: int, stack_size: int, channels: int, grid: int,
                 rng: np.random.Generator):
        self.capacity = capacity
        shape = (capacity, stack_size, channels, grid, grid)
        self.frames = np.zeros(shape, dtype=np.uint8)
        self.next_frames = np.zeros(shape, dtype=np.uint8)
        self.inputs = np.zeros((capacity, stack_size), dtype=np.int8)
        self.next_inputs = np.zeros((capacity, stack_size), dtype=np.int8)
        self.actions = np.zeros(capacity, dtype=np.uint8)
        self.rewards = np.zeros(capacity, dtype=np.float32)
        self.terminal = np.zeros(capacity, dtype=bool)
        self.size = 0
        self._head = 0
        self._rng = rng

    def push(self, frames, inputs, action, reward, next_frames, next_inputs, terminal) -> None:
        i = self._head
        self.frames[i] = frames
        self.inputs[i] = inputs
        self.actions[i] = int(action)
        self.rewards[i] = reward
        self.next_frames[i] = next_frames
        self.next_inputs[i] = next_inputs
        self.terminal[i] = terminal
        self._head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch: int) -> dict[str, np.ndarray]:
        idx = self._rng.integers(0, self.size, size=batch)
        return {
            "frames": self.frames[idx],
            "inputs": self.inputs[idx].astype(np.int64),
            "actions": self.actions[idx].astype(np.int64),
            "rewards": self.rewards[idx],
            "next_frames": self.next_frames[idx],
            "next_inputs": self.next_inputs[idx].astype(np.int64),
            "terminal": self.terminal[idx],
        }

    def __len__(self) -> int:
        return self.size


def merge_batches(a: dict[str, np.ndarray], b: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.concatenate([a[k], b[k]]) for k in a}


def td_targets(batch: dict[str, np.ndarray], target_net: QNetwork, gamma: float,
               safety_mask: bool = False) -> np.ndarray:
    """r + gamma * max_a' Q_target(z', a') with the bootstrap cut at terminals.

    With the safety mask on, successor states whose goal channel is empty
    (a null belief) can only ever execute the user-commandable actions, so
    the bootstrap max is restricted to them; bootstrapping through actions
    the mask forbids would inflate those states' values.
    """
    q_next = target_net.forward(
        batch["next_frames"].astype(target_net.dtype), batch["next_inputs"], train=False
    )
    if safety_mask:
        null_next = batch["next_frames"][:, -1, 1].sum(axis=(1, 2)) == 0
        safe = [int(a) for a in SAFE_ACTIONS]
        allowed = np.zeros(q_next.shape[1], dtype=bool)
        allowed[safe] = True
        q_masked = np.where(allowed, q_next, -np.inf)
        boot = np.where(null_next, q_masked.max(axis=1), q_next.max(axis=1))
    else:
        boot = q_next.max(axis=1)
    boot[batch["terminal"]] = 0.0
    return batch["rewards"] + gamma * boot


def grad_step(
    net: QNetwork,
    batch: dict[str, np.ndarray],
    targets: np.ndarray,
    adam: Adam,
    huber: bool = False,
    demo_rows: int = 0,
    margin: float = 0.8,
    margin_weight: float = 1.0,
) -> float:
    """One optimization step on the TD loss; returns the scalar loss.

    The last ``demo_rows`` rows of the batch are demonstration transitions;
    they additionally incur the large-margin classification loss
    ``max_a [Q(z,a) + margin*1(a != a_demo)] - Q(z,a_demo)``, which pins
    actions the demonstrations never take below the demonstrated one.
    """
    frames = batch["frames"].astype(net.dtype)
    q = net.forward(frames, batch["inputs"], train=True)
    b = q.shape[0]
    rows = np.arange(b)
    taken = q[rows, batch["actions"]]
    err = taken - targets.astype(q.dtype)
    if huber:
        abserr = np.abs(err)
        quad = np.minimum(abserr, 1.0)
        loss = float(np.mean(0.5 * quad**2 + (abserr - quad)))
        derr = np.clip(err, -1.0, 1.0) / b
    else:
        loss = float(np.mean(err**2))
        derr = 2.0 * err / b
    dq = np.zeros_like(q)
    dq[rows, batch["actions"]] = derr
    if demo_rows > 0 and margin_weight > 0:
        drows = rows[b - demo_rows:]
        dacts = batch["actions"][b - demo_rows:]
        margins = np.full((demo_rows, q.shape[1]), margin, dtype=q.dtype)
        margins[np.arange(demo_rows), dacts] = 0.0
        violated = q[drows] + margins
        best = violated.argmax(axis=1)
        hinge = violated[np.arange(demo_rows), best] - q[drows, dacts]
        active = best != dacts
        loss += margin_weight * float(hinge[active].sum()) / demo_rows
        scale = margin_weight / demo_rows
        act_idx = np.flatnonzero(active)
        dq[drows[act_idx], best[act_idx]] += scale
        dq[drows[act_idx], dacts[act_idx]] -= scale
    if not np.isfinite(loss):
        raise NumericalFault(f"non-finite TD loss: {loss}")
    net.zero_grad()
    net.backward(dq)
    adam.step()
    return loss
