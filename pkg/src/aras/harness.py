"""Closed-loop episode engine, canonical per-tick logs, and metric aggregation.

Every way of running an episode (batch eval, training rollouts, the live
teleop service) drives the same generator, so a fixed seed plus a fixed
input sequence reproduces the exact same log anywhere. Logs are the single
source of truth: every reported metric is recomputable from a log alone.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .baselines import raw_encode
from .env import (AMPLIFIED_ACTIONS, Action, EnvConfig, EpisodeState, Outcome,
                  Phase, check_termination, distance_norm, finalize, reset,
                  step, study_layout)
from .errors import UsageError
from .inference import (GoalBelief, InferenceConfig, ObservationWindow,
                        Snapshot, candidate_goals, update_belief)
from .latent import LatentStack, encode
from .policies import Policy, TickContext, input_for_action
from .policy import RewardTerms, RewardWeights, reward_terms
from .users import (IntentScript, ScenarioKind, UserProfile, goal_cell,
                    sample_scenario, user_input)

SCHEMA_VERSION = 1
CELLS_TO_CM = 3.0  # narrative scale for spread figures; comparisons stay in cells

InputFn = Callable[[EpisodeState, tuple[int, int], int], int]


def episode_rngs(seed) -> tuple[np.random.Generator, ...]:
    """Independent streams for layout, script, user noise, and policy draws."""
    base = seed if isinstance(seed, (list, tuple)) else [seed]
    return tuple(np.random.default_rng([*base, k]) for k in range(4))


@dataclass(slots=True)
class TickStep:
    """One engine tick: the loggable record plus the tensors a trainer needs."""
    tick: int
    record: dict
    action: Action
    user_input: int
    reward: float
    terms: RewardTerms
    terminal: Outcome | None
    belief: GoalBelief | None
    stack: LatentStack | None
    raw_stack: LatentStack | None
    state_after: EpisodeState


@dataclass(slots=True)
class EpisodeLog:
    header: dict
    ticks: list[dict] = field(default_factory=list)
    outcome: dict = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return self.outcome.get("terminal") == "success"

    def to_json_lines(self) -> list[str]:
        dump = lambda d: json.dumps(d, sort_keys=True, separators=(",", ":"))
        return [dump({"kind": "header", **self.header})] + \
               [dump({"kind": "tick", **t}) for t in self.ticks] + \
               [dump({"kind": "outcome", **self.outcome})]


def write_logs(logs: list[EpisodeLog], path: str) -> None:
    with open(path, "w") as fh:
        for log in logs:
            for line in log.to_json_lines():
                fh.write(line + "\n")


def read_logs(path: str) -> list[EpisodeLog]:
    logs: list[EpisodeLog] = []
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            kind = rec.pop("kind")
            if kind == "header":
                logs.append(EpisodeLog(header=rec))
            elif kind == "tick":
                logs[-1].ticks.append(rec)
            elif kind == "outcome":
                logs[-1].outcome = rec
    return logs


def scenario_descriptor(script: IntentScript) -> dict:
    plan = lambda p: {"goal": p.goal, "switch_tick": p.switch_tick, "switch_goal": p.switch_goal}
    return {"scenario": script.kind.value,
            "pickup": plan(script.pickup), "dropoff": plan(script.dropoff)}


def layout_descriptor(state: EpisodeState) -> dict:
    return {
        "grid_size": state.grid_size,
        "objects": [[o.id, o.cell[0], o.cell[1]] for o in state.objects],
        "bins": [[b.id, b.cell[0], b.cell[1]] for b in state.bins],
        "start": list(state.gripper.cell),
    }


def _belief_summary(belief: GoalBelief | None) -> dict | None:
    if belief is None:
        return None
    return {
        "map": belief.map_goal,
        "confidence": belief.confidence,
        "posterior": [[gid, p] for gid, p in sorted(belief.posterior.items())],
    }


def drive_episode(
    policy: Policy,
    state: EpisodeState,
    script: IntentScript,
    inf_cfg: InferenceConfig,
    weights: RewardWeights,
    input_fn: InputFn | None,
    policy_rng: np.random.Generator,
    stack_size: int = 4,
    pickup_only: bool = False,
) -> Iterator[TickStep]:
    """Run one episode tick by tick until terminal.

    ``input_fn`` supplies the user's 1-D signal each tick; policies that
    command actions directly (manual/oracle style) ignore it and the signal
    is derived from the commanded key instead. With ``pickup_only`` a
    correct grasp completes the episode (the early training curriculum);
    evaluation always runs the full task.
    """
    window = ObservationWindow(inf_cfg.tau)
    stack = LatentStack(stack_size) if policy.needs_latent else None
    raw_stack = LatentStack(stack_size) if policy.needs_raw else None
    tick = 0
    phase_start = 0
    prev_phase = state.phase
    while True:
        if state.phase is not prev_phase:
            window.clear()
            phase_start = tick
            prev_phase = state.phase
        true_goal = script.current_goal(state.phase, tick - phase_start)
        true_cell = goal_cell(state, state.phase, true_goal)
        belief: GoalBelief | None = None
        u: int | None = None
        if not policy.provides_input:
            if input_fn is None:
                raise UsageError(f"policy {policy.name!r} requires an input source")
            u = int(input_fn(state, true_cell, tick))
            if policy.needs_belief:
                window.push(Snapshot(state.gripper.cell, state.phase), u)
                belief = update_belief(window, inf_cfg, candidate_goals(state))
            if policy.needs_latent:
                stack = stack.push(encode(belief, state), u)
            if policy.needs_raw:
                raw_stack = raw_stack.push(raw_encode(state), u)
        ctx = TickContext(state=state, tick=tick, user_input=u, belief=belief,
                          stack=stack, raw_stack=raw_stack, true_goal_cell=true_cell)
        action = policy.act(ctx, policy_rng)
        if policy.provides_input:
            u = input_for_action(action)
        result = step(state, action)
        verdict = check_termination(result.state, true_goal)
        if pickup_only and verdict is None and result.grasped is not None:
            verdict = Outcome.SUCCESS  # curriculum: a correct grasp completes
        after = finalize(result.state, verdict)
        if policy.reward_goal == "belief":
            reward_cell = belief.cell_of(state) if belief is not None else None
        else:
            reward_cell = true_cell
        terms = reward_terms(reward_cell, after.gripper.cell, state.grid_size,
                             action, u, after.terminal)
        total = terms.total(weights)
        error_flag = result.moved and (
            distance_norm(after.gripper.cell, true_cell, state.grid_size)
            > distance_norm(state.gripper.cell, true_cell, state.grid_size)
        )
        record = {
            "tick": tick,
            "phase": state.phase.value,
            "gripper": list(after.gripper.cell),
            "moved": result.moved,
            "event": after.last_event,
            "input": u,
            "belief": _belief_summary(belief),
            "action": action.name.lower(),
            "true_goal": true_goal,
            "reward": {"gp": terms.gp, "ia": terms.ia, "tc": terms.tc, "total": total},
            "flags": {
                "amplified": action in AMPLIFIED_ACTIONS,
                "error": bool(error_flag),
            },
        }
        yield TickStep(tick=tick, record=record, action=action, user_input=u,
                       reward=total, terms=terms, terminal=after.terminal,
                       belief=belief, stack=stack, raw_stack=raw_stack,
                       state_after=after)
        if after.terminal is not None:
            return
        state = after
        tick += 1


def make_synthetic_input(script: IntentScript, profile: UserProfile,
                         user_rng: np.random.Generator) -> InputFn:
    def fn(state: EpisodeState, true_cell: tuple[int, int], tick: int) -> int:
        return int(user_input(state, true_cell, profile, user_rng))
    return fn


def run_episode(
    policy: Policy,
    env_cfg: EnvConfig,
    inf_cfg: InferenceConfig,
    weights: RewardWeights,
    kind: ScenarioKind,
    profile: UserProfile,
    seed,
    stack_size: int = 4,
    layout: str = "random",
    script: IntentScript | None = None,
) -> EpisodeLog:
    """One seeded closed-loop episode -> its canonical log."""
    layout_rng, script_rng, user_rng, policy_rng = episode_rngs(seed)
    state = study_layout(env_cfg) if layout == "study" else reset(env_cfg, layout_rng)
    if script is None:
        script = sample_scenario(kind, state, env_cfg, script_rng)
    input_fn = make_synthetic_input(script, profile, user_rng)
    header = {
        "schema_version": SCHEMA_VERSION,
        "seed": seed if isinstance(seed, int) else list(seed),
        "policy": policy.name,
        "layout_kind": layout,
        **scenario_descriptor(script),
        "layout": layout_descriptor(state),
        "env": {
            "grid_size": env_cfg.grid_size,
            "max_steps": env_cfg.max_steps,
            "tick_seconds": env_cfg.tick_seconds,
            "input_subsample": env_cfg.input_subsample,
        },
        "inference": {"tau": inf_cfg.tau, "kappa": inf_cfg.kappa, "sigma": inf_cfg.sigma},
        "weights": {"alpha_gp": weights.alpha_gp, "beta_ia": weights.beta_ia,
                    "delta_tc": weights.delta_tc},
        "profile": {"error_rate": profile.error_rate, "neutral_rate": profile.neutral_rate},
        "stack_size": stack_size,
    }
    log = EpisodeLog(header=header)
    last: TickStep | None = None
    for ts in drive_episode(policy, state, script, inf_cfg, weights, input_fn,
                            policy_rng, stack_size):
        log.ticks.append(ts.record)
        last = ts
    assert last is not None and last.terminal is not None
    log.outcome = {
        "terminal": last.terminal.value,
        "ticks": len(log.ticks),
        "deposited_bin": last.state_after.deposited_bin,
    }
    return log


def evaluate(
    policy: Policy,
    env_cfg: EnvConfig,
    inf_cfg: InferenceConfig,
    weights: RewardWeights,
    kind: ScenarioKind,
    profile: UserProfile,
    episodes: int,
    seed: int,
    stack_size: int = 4,
    layout: str = "random",
) -> list[EpisodeLog]:
    """Independent seeded episodes; episode i derives its streams from (seed, i)."""
    return [
        run_episode(policy, env_cfg, inf_cfg, weights, kind, profile,
                    seed=[seed, i], stack_size=stack_size, layout=layout)
        for i in range(episodes)
    ]


# ---------------------------------------------------------------------------
# Metrics


@dataclass(frozen=True, slots=True)
class MetricsReport:
    n_episodes: int
    n_success: int
    success_rate: float                    # percent
    success_ci95: tuple[float, float]
    completion_time_s: float | None       # mean over successes only
    completion_time_stderr: float | None
    total_inputs: float
    total_inputs_stderr: float
    error_actions_s: float
    error_actions_stderr: float
    amplified_actions_s: float
    amplified_actions_stderr: float
    cumulative_reward: float
    cumulative_reward_stderr: float
    trajectory_spread_cells: float
    trajectory_spread_cm: float
    tick_seconds: float
    input_subsample: int

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["success_ci95"] = list(self.success_ci95)
        return d


def episode_stats(log: EpisodeLog) -> dict:
    """Per-episode raw tallies every aggregate metric is built from."""
    tick_s = log.header["env"]["tick_seconds"]
    sub = log.header["env"]["input_subsample"]
    ticks = log.ticks
    return {
        "success": log.success,
        "ticks": len(ticks),
        "completion_s": len(ticks) * tick_s,
        "inputs": sum(abs(t["input"]) for t in ticks) * sub,
        "error_s": sum(1 for t in ticks if t["flags"]["error"]) * tick_s,
        "amplified_s": sum(1 for t in ticks if t["flags"]["amplified"]) * tick_s,
        "reward": sum(t["reward"]["total"] for t in ticks),
    }


def wilson_ci(successes: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n == 0:
        return (0.0, 0.0)
    p = successes / n
    denom = 1 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = (z / denom) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return (max(0.0, center - half), min(1.0, center + half))


def _mean_stderr(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return (float("nan"), float("nan"))
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return (float(arr.mean()), se)


def trajectory_spread(logs: list[EpisodeLog]) -> float:
    """RMS distance of trajectory points from their mean position, in cells.

    Episodes are grouped by their intended goal sequence so the spread
    measures variability around a common route, not the separation between
    different routes; groups are averaged weighted by point count.
    """
    groups: dict[str, list[tuple[int, int]]] = {}
    for log in logs:
        key = json.dumps([log.header["pickup"], log.header["dropoff"]], sort_keys=True)
        pts = groups.setdefault(key, [])
        pts.append(tuple(log.header["layout"]["start"]))
        pts.extend(tuple(t["gripper"]) for t in log.ticks)
    num = 0.0
    den = 0
    for pts in groups.values():
        arr = np.asarray(pts, dtype=float)
        centered = arr - arr.mean(axis=0)
        num += float((centered**2).sum())
        den += len(pts)
    return math.sqrt(num / den) if den else float("nan")


def aggregate(logs: list[EpisodeLog], cells_to_cm: float = CELLS_TO_CM) -> MetricsReport:
    """Fold episode logs into the standard report; pure function of the logs."""
    if not logs:
        raise UsageError("aggregate() needs at least one episode log")
    env = logs[0].header["env"]
    stats = [episode_stats(log) for log in logs]
    n = len(stats)
    wins = [s for s in stats if s["success"]]
    comp = _mean_stderr([s["completion_s"] for s in wins]) if wins else (None, None)
    inputs = _mean_stderr([s["inputs"] for s in stats])
    err = _mean_stderr([s["error_s"] for s in stats])
    amp = _mean_stderr([s["amplified_s"] for s in stats])
    rew = _mean_stderr([s["reward"] for s in stats])
    lo, hi = wilson_ci(len(wins), n)
    spread = trajectory_spread(logs)
    return MetricsReport(
        n_episodes=n,
        n_success=len(wins),
        success_rate=100.0 * len(wins) / n,
        success_ci95=(100.0 * lo, 100.0 * hi),
        completion_time_s=comp[0],
        completion_time_stderr=comp[1],
        total_inputs=inputs[0],
        total_inputs_stderr=inputs[1],
        error_actions_s=err[0],
        error_actions_stderr=err[1],
        amplified_actions_s=amp[0],
        amplified_actions_stderr=amp[1],
        cumulative_reward=rew[0],
        cumulative_reward_stderr=rew[1],
        trajectory_spread_cells=spread,
        trajectory_spread_cm=spread * cells_to_cm,
        tick_seconds=env["tick_seconds"],
        input_subsample=env["input_subsample"],
    )


def write_report(report: MetricsReport, logs: list[EpisodeLog], path: str) -> None:
    """Line-delimited report: one metrics record then one summary row per episode."""
    dump = lambda d: json.dumps(d, sort_keys=True, separators=(",", ":"))
    with open(path, "w") as fh:
        fh.write(dump({"schema_version": SCHEMA_VERSION, "kind": "metrics_report",
                       **report.to_dict()}) + "\n")
        for i, log in enumerate(logs):
            s = episode_stats(log)
            fh.write(dump({"kind": "episode", "episode": i,
                           "seed": log.header["seed"], **s}) + "\n")


def write_report_table(logs: list[EpisodeLog], path: str) -> None:
    """Flat CSV of per-episode stats for external plotting."""
    cols = ["episode", "success", "ticks", "completion_s", "inputs",
            "error_s", "amplified_s", "reward"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i, log in enumerate(logs):
            s = episode_stats(log)
            s["episode"] = i
            s["success"] = int(s["success"])
            fh.write(",".join(str(s[c]) for c in cols) + "\n")
