"""Deterministic training loop: rollouts, replay, TD updates, curve logging.

One master seed fixes everything - network init, layouts, scripts, user
noise, exploration, and replay sampling - so two runs with the same seed
produce byte-identical curves and checkpoints.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .env import EnvConfig, reset
from .errors import NumericalFault
from .harness import SCHEMA_VERSION, drive_episode, episode_rngs, make_synthetic_input
from .inference import InferenceConfig
from .latent import FRAME_CHANNELS
from .baselines import RAW_CHANNELS
from .policies import ArasPolicy, DemonstrationPolicy, RawDqnPolicy
from .policy import (ReplayBuffer, RewardWeights, TrainConfig, epsilon_at,
                     grad_step, merge_batches, td_targets)
from .qnet import NetSpec, QNetwork, make_adam, save_checkpoint
from .users import ScenarioKind, UserProfile, sample_scenario

# Seed-stream ids that cannot collide with per-episode indices.
_NET_STREAM = 1 << 20
_REPLAY_STREAM = (1 << 20) + 1
_DEMO_STREAM = 1 << 21

SCENARIO_CHOICES = {k.value: k for k in ScenarioKind}
MIXED = "mixed"  # draw a scenario kind uniformly each episode


@dataclass(slots=True)
class TrainResult:
    net: QNetwork
    best_net: QNetwork
    curve: list[dict] = field(default_factory=list)
    grad_steps: int = 0
    env_ticks: int = 0
    wall_seconds: float = 0.0
    best_rolling_success: float = 0.0


def _episode_kind(scenario: str, rng: np.random.Generator) -> ScenarioKind:
    if scenario == MIXED:
        kinds = list(ScenarioKind)
        return kinds[int(rng.integers(len(kinds)))]
    return SCENARIO_CHOICES[scenario]


def write_curve(path: str, records: list[dict], meta: dict) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps({"schema_version": SCHEMA_VERSION,
                             "kind": "learning_curve", **meta},
                            sort_keys=True, separators=(",", ":")) + "\n")
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


def read_curve(path: str) -> tuple[dict, list[dict]]:
    with open(path) as fh:
        lines = [json.loads(l) for l in fh if l.strip()]
    return lines[0], lines[1:]


def _roll_out_into_replay(policy, replay: ReplayBuffer, env_cfg, inf_cfg, weights,
                          scenario: str, profile, entropy, stack_size: int,
                          observation: str) -> int:
    """Run one episode with `policy` and store its transitions; returns ticks."""
    layout_rng, script_rng, user_rng, policy_rng = episode_rngs(entropy)
    state = reset(env_cfg, layout_rng)
    kind = _episode_kind(scenario, script_rng)
    script = sample_scenario(kind, state, env_cfg, script_rng)
    input_fn = make_synthetic_input(script, profile, user_rng)
    pending = None
    ticks = 0
    for ts in drive_episode(policy, state, script, inf_cfg, weights, input_fn,
                            policy_rng, stack_size):
        ticks += 1
        stack = ts.stack if observation == "latent" else ts.raw_stack
        frames = stack.frames_array(np.uint8)
        inputs = stack.inputs_array()
        if pending is not None:
            replay.push(*pending, frames, inputs, False)
        if ts.terminal is not None:
            replay.push(frames, inputs, int(ts.action), ts.reward, frames, inputs, True)
            pending = None
        else:
            pending = (frames, inputs, int(ts.action), ts.reward)
    return ticks


def train(
    env_cfg: EnvConfig,
    inf_cfg: InferenceConfig,
    weights: RewardWeights,
    cfg: TrainConfig,
    scenario: str = MIXED,
    profile: UserProfile = UserProfile(),
    seed: int = 0,
    observation: str = "latent",
    ckpt_path: str | None = None,
    curve_path: str | None = None,
    log_every: int = 0,
) -> TrainResult:
    """Full training run; returns the final and best-rolling-success networks.

    Reward weights are taken as given (ablation runs legitimately zero a
    term); callers building weights from user input should validate them.
    """
    cfg.validate()
    channels = FRAME_CHANNELS if observation == "latent" else RAW_CHANNELS
    spec = NetSpec(grid_size=env_cfg.grid_size, stack_size=cfg.stack_size,
                   in_channels=channels)
    net = QNetwork(spec, np.random.default_rng([seed, _NET_STREAM]))
    target = net.copy()
    adam = make_adam(net, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    replay = ReplayBuffer(cfg.replay_capacity, cfg.stack_size, channels,
                          env_cfg.grid_size, np.random.default_rng([seed, _REPLAY_STREAM]))
    demo_replay = ReplayBuffer(cfg.demo_capacity, cfg.stack_size, channels,
                               env_cfg.grid_size,
                               np.random.default_rng([seed, _REPLAY_STREAM + 1]))
    if observation == "latent":
        policy = ArasPolicy(net, epsilon=cfg.epsilon_start, safety_mask=cfg.safety_mask)
    else:
        policy = RawDqnPolicy(net, epsilon=cfg.epsilon_start)

    result = TrainResult(net=net, best_net=net.copy())
    successes: list[bool] = []
    full_task_successes: list[bool] = []
    curriculum_eps = int(cfg.episodes * cfg.curriculum_frac)
    t0 = time.perf_counter()
    demo_policy = DemonstrationPolicy(observation)
    demo_eps = cfg.demo_episodes if cfg.episodes > 0 else 0
    for d in range(demo_eps):
        _roll_out_into_replay(demo_policy, demo_replay, env_cfg, inf_cfg, weights,
                              scenario, profile, [seed, _DEMO_STREAM + d],
                              cfg.stack_size, observation)
    if log_every and demo_eps:
        print(f"  seeded demonstration ring with {demo_eps} episodes "
              f"({len(demo_replay)} transitions)", flush=True)
    next_sync = cfg.target_update_every
    for ep in range(cfg.episodes):
        if (cfg.demo_refresh_every and demo_eps
                and ep % cfg.demo_refresh_every == 0):
            _roll_out_into_replay(demo_policy, demo_replay, env_cfg, inf_cfg,
                                  weights, scenario, profile,
                                  [seed, _DEMO_STREAM + demo_eps + ep],
                                  cfg.stack_size, observation)
        layout_rng, script_rng, user_rng, policy_rng = episode_rngs([seed, ep])
        state = reset(env_cfg, layout_rng)
        kind = _episode_kind(scenario, script_rng)
        script = sample_scenario(kind, state, env_cfg, script_rng)
        input_fn = make_synthetic_input(script, profile, user_rng)
        pickup_only = ep < curriculum_eps
        gen = drive_episode(policy, state, script, inf_cfg, weights, input_fn,
                            policy_rng, cfg.stack_size, pickup_only=pickup_only)
        ep_reward = 0.0
        ep_steps = 0
        success = False
        pending: tuple[np.ndarray, np.ndarray, int, float] | None = None
        while True:
            policy.epsilon = epsilon_at(result.env_ticks, cfg)
            try:
                ts = next(gen)
            except StopIteration:
                break
            result.env_ticks += 1
            ep_steps += 1
            ep_reward += ts.reward
            stack = ts.stack if observation == "latent" else ts.raw_stack
            frames = stack.frames_array(np.uint8)
            inputs = stack.inputs_array()
            if pending is not None:
                replay.push(*pending, frames, inputs, False)
            terminal = ts.terminal is not None
            if terminal:
                replay.push(frames, inputs, int(ts.action), ts.reward,
                            frames, inputs, True)
                pending = None
                success = ts.terminal.value == "success"
            else:
                pending = (frames, inputs, int(ts.action), ts.reward)
            if (result.env_ticks % cfg.learn_every == 0
                    and len(replay) >= max(cfg.batch_size, cfg.learn_start)):
                k_demo = min(int(round(cfg.batch_size * cfg.demo_batch_fraction)),
                             len(demo_replay))
                batch = replay.sample(cfg.batch_size - k_demo)
                if k_demo:
                    batch = merge_batches(batch, demo_replay.sample(k_demo))
                targets = td_targets(batch, target, cfg.gamma,
                                     safety_mask=cfg.safety_mask and observation == "latent")
                try:
                    grad_step(net, batch, targets, adam, cfg.huber,
                              demo_rows=k_demo, margin=cfg.demo_margin,
                              margin_weight=cfg.demo_margin_weight)
                except NumericalFault:
                    if ckpt_path:
                        save_checkpoint(f"{ckpt_path}.fault", net,
                                        {"fault_episode": ep})
                        np.savez(f"{ckpt_path}.fault-batch.npz", **batch,
                                 targets=targets)
                    raise
                result.grad_steps += 1
            if result.env_ticks >= next_sync:
                target.sync_from(net)
                next_sync += cfg.target_update_every
        result.curve.append({"episode": ep, "steps": ep_steps,
                             "reward": ep_reward, "success": success})
        successes.append(success)
        if not pickup_only:
            # only full-task episodes compete for the best checkpoint
            full_task_successes.append(success)
            window = full_task_successes[-cfg.best_window:]
            rolling = sum(window) / len(window)
            if (len(full_task_successes) >= cfg.best_window
                    and rolling >= result.best_rolling_success):
                result.best_rolling_success = rolling
                result.best_net.sync_from(net)
        if log_every and (ep + 1) % log_every == 0:
            rate = sum(successes[-log_every:]) / log_every
            print(f"  episode {ep + 1}/{cfg.episodes}  success[{log_every}]={rate:.2f} "
                  f"eps={policy.epsilon:.2f} ticks={result.env_ticks} "
                  f"grads={result.grad_steps} {time.perf_counter() - t0:.0f}s",
                  flush=True)
    if not any(successes):
        result.best_net.sync_from(net)  # nothing ever succeeded; best = final
    result.wall_seconds = time.perf_counter() - t0

    meta = {
        "policy": policy.name,
        "scenario": scenario,
        "seed": seed,
        "episodes": cfg.episodes,
        "observation": observation,
        "env": {"grid_size": env_cfg.grid_size, "max_steps": env_cfg.max_steps,
                "tick_seconds": env_cfg.tick_seconds,
                "input_subsample": env_cfg.input_subsample},
        "inference": {"tau": inf_cfg.tau, "kappa": inf_cfg.kappa, "sigma": inf_cfg.sigma},
        "weights": {"alpha_gp": weights.alpha_gp, "beta_ia": weights.beta_ia,
                    "delta_tc": weights.delta_tc},
        "profile": {"error_rate": profile.error_rate, "neutral_rate": profile.neutral_rate},
        "train": {"learning_rate": cfg.learning_rate, "gamma": cfg.gamma,
                  "batch_size": cfg.batch_size, "replay_capacity": cfg.replay_capacity,
                  "target_update_every": cfg.target_update_every,
                  "epsilon_decay_steps": cfg.epsilon_decay_steps,
                  "learn_every": cfg.learn_every, "safety_mask": cfg.safety_mask,
                  "huber": cfg.huber, "curriculum_episodes": curriculum_eps},
        "best_rolling_success": result.best_rolling_success,
    }
    if ckpt_path:
        save_checkpoint(ckpt_path, net, meta)
        save_checkpoint(f"{ckpt_path}.best", result.best_net,
                        {**meta, "checkpoint": "best"})
    if curve_path:
        write_curve(curve_path, result.curve, meta)
    return result


ABLATION_DROPS = ("none", "gp", "ia", "tc")


def ablation_weights(base: RewardWeights, drop: str) -> RewardWeights:
    if drop == "none":
        return base
    if drop == "gp":
        return replace(base, alpha_gp=0.0)
    if drop == "ia":
        return replace(base, beta_ia=0.0)
    if drop == "tc":
        return replace(base, delta_tc=0.0)
    raise ValueError(f"unknown reward term {drop!r}")


def run_ablation(
    env_cfg: EnvConfig,
    inf_cfg: InferenceConfig,
    base_weights: RewardWeights,
    cfg: TrainConfig,
    scenario: str = MIXED,
    profile: UserProfile = UserProfile(),
    seed: int = 0,
    drops: tuple[str, ...] = ABLATION_DROPS,
    out_prefix: str | None = None,
    log_every: int = 0,
) -> dict[str, list[dict]]:
    """Matched training runs with one reward term zeroed at a time."""
    curves: dict[str, list[dict]] = {}
    for drop in drops:
        w = ablation_weights(base_weights, drop)
        if drop != "tc":
            w.validate()  # the tc drop deliberately breaks terminal dominance
        ckpt = f"{out_prefix}.{drop}.ckpt" if out_prefix else None
        curve = f"{out_prefix}.{drop}.curve.jsonl" if out_prefix else None
        res = train(env_cfg, inf_cfg, w, cfg, scenario=scenario, profile=profile,
                    seed=seed, ckpt_path=ckpt, curve_path=curve, log_every=log_every)
        curves[drop] = res.curve
    return curves


def rolling_mean(values: list[float], window: int) -> list[float]:
    out = []
    acc = 0.0
    for i, v in enumerate(values):
        acc += v
        if i >= window:
            acc -= values[i - window]
        out.append(acc / min(i + 1, window))
    return out
