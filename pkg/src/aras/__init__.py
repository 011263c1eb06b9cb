"""Shared-autonomy pick-and-place toolkit.

A deterministic grid simulator, sliding-window Bayesian goal inference, a
from-scratch deep Q-network that amplifies 1-D user signals into 7-action
control, comparison baselines, an evaluation harness, and a real-time
teleoperation service.
"""

__version__ = "0.1.0"

from .env import (Action, EnvConfig, EpisodeState, Outcome, Phase, UserInput,
                  check_termination, distance_norm, reset, step)
from .inference import GoalBelief, InferenceConfig, candidate_goals, update_belief
from .policy import RewardWeights, TrainConfig
from .users import IntentScript, ScenarioKind, UserProfile, sample_scenario

__all__ = [
    "Action", "EnvConfig", "EpisodeState", "Outcome", "Phase", "UserInput",
    "check_termination", "distance_norm", "reset", "step",
    "GoalBelief", "InferenceConfig", "candidate_goals", "update_belief",
    "RewardWeights", "TrainConfig",
    "IntentScript", "ScenarioKind", "UserProfile", "sample_scenario",
    "__version__",
]
