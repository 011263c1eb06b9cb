"""Deterministic discrete-grid pick-and-place environment.

The workspace is a square grid viewed top-down. The gripper starts open at
the front-center cell, graspable objects sit in a far band of rows, bins in
a nearer band, and an episode walks through two phases: PickUp (drive to an
object and grasp it) then DropOff (carry it to a bin and release). All
transitions are pure functions of (state, action); randomness only enters
through the seeded layout in :func:`reset`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum

import numpy as np

from .errors import ConfigError, UsageError

Cell = tuple[int, int]  # (row, col); row 0 is the front edge where the gripper homes


class Action(IntEnum):
    LEFT = 0
    RIGHT = 1
    FORWARD = 2
    BACKWARD = 3
    HOLD = 4
    GRASP = 5
    RELEASE = 6


N_ACTIONS = len(Action)

# Actions the user cannot issue directly in assisted mode; the policy must
# supply them autonomously.
AMPLIFIED_ACTIONS = frozenset(
    (Action.FORWARD, Action.BACKWARD, Action.GRASP, Action.RELEASE)
)

# (drow, dcol) for the four movement actions; FORWARD points away from the
# operator (increasing row).
MOVES: dict[Action, tuple[int, int]] = {
    Action.LEFT: (0, -1),
    Action.RIGHT: (0, 1),
    Action.FORWARD: (1, 0),
    Action.BACKWARD: (-1, 0),
}


class UserInput(IntEnum):
    LEFT = -1
    NEUTRAL = 0
    RIGHT = 1


class Phase(Enum):
    PICK_UP = "pickup"
    DROP_OFF = "dropoff"


class Outcome(Enum):
    SUCCESS = "success"
    FAILURE = "failure"


@dataclass(frozen=True, slots=True)
class EnvConfig:
    grid_size: int = 16
    n_objects: int = 3
    n_bins: int = 3
    max_steps: int = 80
    tick_seconds: float = 0.4
    input_subsample: int = 8  # modeled 0.05 s input samples per action tick
    seed: int = 0

    def validate(self) -> "EnvConfig":
        if self.grid_size < 8:
            raise ConfigError(f"grid_size must be >= 8, got {self.grid_size}")
        if self.max_steps <= 0:
            raise ConfigError("max_steps must be positive")
        if self.n_objects < 1 or self.n_bins < 1:
            raise ConfigError("need at least one object and one bin")
        if self.tick_seconds <= 0 or self.input_subsample < 1:
            raise ConfigError("tick_seconds and input_subsample must be positive")
        return self


@dataclass(frozen=True, slots=True)
class GridObject:
    id: int
    cell: Cell
    alive: bool = True


@dataclass(frozen=True, slots=True)
class BinSite:
    id: int
    cell: Cell


@dataclass(frozen=True, slots=True)
class Gripper:
    cell: Cell
    closed: bool = False
    held: int | None = None  # object id while carrying


@dataclass(frozen=True, slots=True)
class EpisodeState:
    grid_size: int
    max_steps: int
    objects: tuple[GridObject, ...]
    bins: tuple[BinSite, ...]
    gripper: Gripper
    phase: Phase = Phase.PICK_UP
    step_count: int = 0
    terminal: Outcome | None = None
    # Event bookkeeping for termination/intent checks: the mechanical result
    # of the most recent action.
    last_event: str | None = field(default=None)  # None | "grasped" | "released"
    deposited_bin: int | None = None

    def object_by_id(self, oid: int) -> GridObject:
        return self.objects[oid]

    def bin_by_id(self, bid: int) -> BinSite:
        return self.bins[bid]

    def alive_objects(self) -> tuple[GridObject, ...]:
        return tuple(o for o in self.objects if o.alive)


@dataclass(frozen=True, slots=True)
class StepResult:
    state: EpisodeState
    moved: bool
    grasped: int | None = None   # object id grasped this step
    released: int | None = None  # bin id deposited into, if any
    failed_reason: str | None = None


def object_rows(grid_size: int) -> range:
    """Far band of rows where objects may be placed."""
    return range(3 * grid_size // 4, grid_size - 1)


def bin_rows(grid_size: int) -> range:
    """Intermediate band of rows for bins, separate from the object band."""
    return range(grid_size // 4, grid_size // 2)


def start_cell(grid_size: int) -> Cell:
    return (0, grid_size // 2)


def _place_band(rows: range, n: int, grid_size: int, rng: np.random.Generator) -> list[Cell]:
    # Columns are kept distinct so targets stay distinguishable under a
    # left/right-only input channel.
    if n > grid_size:
        raise ConfigError(
            f"cannot place {n} items in {grid_size} distinct columns"
        )
    cols = rng.choice(grid_size, size=n, replace=False)
    rws = rng.choice(np.asarray(list(rows)), size=n, replace=True)
    return [(int(r), int(c)) for r, c in zip(rws, cols)]


def reset(config: EnvConfig, rng: np.random.Generator) -> EpisodeState:
    """Create a fresh episode layout. Identical rng state gives an identical layout."""
    config.validate()
    n_cells_obj = len(object_rows(config.grid_size)) * config.grid_size
    if config.n_objects > min(n_cells_obj, config.grid_size):
        raise ConfigError(
            f"{config.n_objects} objects do not fit the {config.grid_size}x"
            f"{config.grid_size} placement band"
        )
    if config.n_bins > config.grid_size:
        raise ConfigError(f"{config.n_bins} bins do not fit the grid")
    obj_cells = _place_band(object_rows(config.grid_size), config.n_objects, config.grid_size, rng)
    bin_cells = _place_band(bin_rows(config.grid_size), config.n_bins, config.grid_size, rng)
    return EpisodeState(
        grid_size=config.grid_size,
        max_steps=config.max_steps,
        objects=tuple(GridObject(i, c) for i, c in enumerate(obj_cells)),
        bins=tuple(BinSite(i, c) for i, c in enumerate(bin_cells)),
        gripper=Gripper(cell=start_cell(config.grid_size)),
    )


def study_layout(config: EnvConfig) -> EpisodeState:
    """Fixed left/middle/right arrangement used for live-teleop comparisons."""
    config.validate()
    g = config.grid_size
    if config.n_objects != 3 or config.n_bins != 3:
        raise ConfigError("the study layout is defined for 3 objects and 3 bins")
    cols = (g // 5, g // 2, g - 1 - g // 5)
    obj_row = object_rows(g)[len(object_rows(g)) // 2]
    bin_row = bin_rows(g)[len(bin_rows(g)) // 2]
    return EpisodeState(
        grid_size=g,
        max_steps=config.max_steps,
        objects=tuple(GridObject(i, (obj_row, c)) for i, c in enumerate(cols)),
        bins=tuple(BinSite(i, (bin_row, c)) for i, c in enumerate(cols)),
        gripper=Gripper(cell=start_cell(g)),
    )


def _clamp(v: int, lo: int, hi: int) -> int:
    return max(lo, min(hi, v))


def step(state: EpisodeState, action: Action) -> StepResult:
    """Apply one action. Pure: same (state, action) always yields the same result.

    Directional actions translate the gripper one cell (clamped at the
    boundary); GRASP/RELEASE are legal only on an object cell / bin cell and
    end the episode as a failure anywhere else. Release over a bin deposits
    the object; whether that counts as success is intent-dependent and
    decided by :func:`check_termination`.
    """
    if state.terminal is not None:
        raise UsageError("step() called on a terminal state")
    if state.deposited_bin is not None:
        raise UsageError("episode is awaiting its deposit verdict; cannot step")
    action = Action(action)
    g = state.grid_size
    grip = state.gripper
    steps = state.step_count + 1
    moved = False
    grasped: int | None = None
    released: int | None = None
    failed: str | None = None
    new_objects = state.objects
    new_grip = grip
    new_phase = state.phase
    terminal: Outcome | None = None
    event: str | None = None
    deposited: int | None = None

    if action in MOVES:
        dr, dc = MOVES[action]
        nr = _clamp(grip.cell[0] + dr, 0, g - 1)
        nc = _clamp(grip.cell[1] + dc, 0, g - 1)
        moved = (nr, nc) != grip.cell
        new_grip = replace(grip, cell=(nr, nc))
        if grip.held is not None and moved:
            held = state.objects[grip.held]
            new_objects = tuple(
                replace(o, cell=(nr, nc)) if o.id == held.id else o for o in state.objects
            )
    elif action is Action.HOLD:
        pass
    elif action is Action.GRASP:
        event = "grasped"
        target = next(
            (o for o in state.objects if o.alive and o.cell == grip.cell and o.id != grip.held),
            None,
        )
        if grip.held is not None or target is None:
            terminal = Outcome.FAILURE
            failed = "grasp-empty" if grip.held is None else "grasp-while-holding"
        else:
            grasped = target.id
            new_grip = replace(grip, closed=True, held=target.id)
            new_phase = Phase.DROP_OFF
    elif action is Action.RELEASE:
        event = "released"
        if grip.held is None:
            terminal = Outcome.FAILURE
            failed = "release-empty"
        else:
            bin_here = next((b for b in state.bins if b.cell == grip.cell), None)
            if bin_here is None:
                terminal = Outcome.FAILURE
                failed = "release-off-bin"
            else:
                released = bin_here.id
                deposited = bin_here.id
                new_objects = tuple(
                    replace(o, alive=False) if o.id == grip.held else o
                    for o in state.objects
                )
                new_grip = replace(grip, closed=False, held=None)
    else:  # pragma: no cover - Action() above rejects unknown values
        raise UsageError(f"unknown action {action!r}")

    if terminal is None and released is None and steps >= state.max_steps:
        terminal = Outcome.FAILURE
        failed = failed or "step-budget"

    new_state = replace(
        state,
        objects=new_objects,
        gripper=new_grip,
        phase=new_phase,
        step_count=steps,
        terminal=terminal,
        last_event=event,
        deposited_bin=deposited,
    )
    return StepResult(new_state, moved=moved, grasped=grasped, released=released,
                      failed_reason=failed)


def check_termination(state: EpisodeState, intended_goal: int | None) -> Outcome | None:
    """Judge the episode against the momentary true intent.

    Called after every step. ``intended_goal`` is the object id that was
    intended while the acting phase was PickUp and the bin id while DropOff.
    A grasp of anything but the intended object fails the task, as does a
    release into the wrong bin; a release into the intended bin succeeds.
    """
    if state.terminal is Outcome.FAILURE:
        return Outcome.FAILURE
    if state.last_event == "grasped" and state.gripper.held is not None:
        return None if state.gripper.held == intended_goal else Outcome.FAILURE
    if state.last_event == "released" and state.deposited_bin is not None:
        return Outcome.SUCCESS if state.deposited_bin == intended_goal else Outcome.FAILURE
    if state.step_count >= state.max_steps:
        return Outcome.FAILURE
    return None


def finalize(state: EpisodeState, verdict: Outcome | None) -> EpisodeState:
    """Stamp the intent-level verdict onto the state."""
    if verdict is None or state.terminal is not None:
        return state
    return replace(state, terminal=verdict)


def distance_norm(p: Cell, g: Cell, grid_size: int) -> float:
    """Euclidean cell distance scaled by the grid diagonal; always in [0, 1]."""
    diag = (grid_size - 1) * math.sqrt(2.0)
    return math.dist(p, g) / diag
