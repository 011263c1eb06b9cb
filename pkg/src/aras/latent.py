"""Goal-conditioned latent frames and the temporal stack fed to the policy.

A frame is a two-channel one-hot grid: channel 0 marks the gripper cell,
channel 1 marks the inferred goal's cell (and stays empty under a null
goal, so an uncertain belief leaks no goal information). The stack keeps
the last k frames together with the last k user inputs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import EpisodeState
from .inference import GoalBelief

DEFAULT_STACK_SIZE = 4
FRAME_CHANNELS = 2


def encode(belief: GoalBelief, state: EpisodeState) -> np.ndarray:
    """Build the (2, G, G) uint8 frame for the current state and belief."""
    g = state.grid_size
    frame = np.zeros((FRAME_CHANNELS, g, g), dtype=np.uint8)
    r, c = state.gripper.cell
    frame[0, r, c] = 1
    goal = belief.cell_of(state)
    if goal is not None:
        frame[1, goal[0], goal[1]] = 1
    return frame


@dataclass(frozen=True, slots=True)
class LatentStack:
    """Last k frames plus the aligned user inputs, newest last."""
    size: int
    frames: tuple[np.ndarray, ...] = ()
    inputs: tuple[int, ...] = ()

    def push(self, frame: np.ndarray, user_input: int) -> "LatentStack":
        if not self.frames:
            # warm-up: a fresh stack pads by repeating the first entry
            return LatentStack(self.size, (frame,) * self.size,
                               (int(user_input),) * self.size)
        frames = (self.frames + (frame,))[-self.size:]
        inputs = (self.inputs + (int(user_input),))[-self.size:]
        return LatentStack(self.size, frames, inputs)

    @property
    def full(self) -> bool:
        return len(self.frames) == self.size

    def frames_array(self, dtype=np.float32) -> np.ndarray:
        """(k, C, G, G) array view for the network."""
        return np.stack(self.frames).astype(dtype, copy=False)

    def inputs_array(self) -> np.ndarray:
        return np.asarray(self.inputs, dtype=np.int64)


def push(stack: LatentStack, frame: np.ndarray, user_input: int) -> LatentStack:
    return stack.push(frame, user_input)
