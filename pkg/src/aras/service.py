"""Real-time teleoperation service over a websocket line protocol.

One session per connection. A session owns a live episode driven by the
same tick engine as batch evaluation: at each tick the most recent client
input is sampled (absent input means neutral/hold), the mode's controller
picks an action, the environment advances, and a frame message goes out.
Sessions are fully isolated; the checkpoint is loaded once and shared
read-only.

With ``tick_ms > 0`` a timer drives ticks in real time. With ``tick_ms == 0``
the session runs in lockstep: each client ``{"type": "tick"}`` message
advances exactly one tick, which is what scripted replay clients use to
reproduce batch episodes exactly.
"""
from __future__ import annotations

import asyncio
import itertools
import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .env import Action, EnvConfig, Outcome, Phase, reset, study_layout
from .errors import CheckpointError, NumericalFault, UsageError
from .harness import (EpisodeLog, aggregate, drive_episode, episode_rngs,
                      episode_stats, layout_descriptor, scenario_descriptor)
from .inference import InferenceConfig, ObservationWindow, candidate_goals, update_belief
from .policies import ArasPolicy, HoPolicy
from .policy import RewardWeights
from .qnet import QNetwork, load_checkpoint
from .users import IntentScript, PhasePlan, ScenarioKind

MODES = ("manual", "aras", "ho")

ACTION_NAMES = {a.name.lower(): a for a in Action}


class LiveManualPolicy:
    """Applies the client's most recent action message; one-shot per tick."""

    name = "manual"
    needs_belief = False
    needs_latent = False
    needs_raw = False
    provides_input = True
    reward_goal = "true"

    def __init__(self, session: "Session"):
        self.session = session

    def act(self, ctx, rng):
        action = self.session.pending_action
        self.session.pending_action = None
        return action if action is not None else Action.HOLD


@dataclass
class ServiceState:
    env: EnvConfig
    inference: InferenceConfig
    weights: RewardWeights
    stack_size: int
    safety_mask: bool
    tick_ms: int
    net: QNetwork | None = None
    net_meta: dict | None = None
    log_dir: str | None = None


class Session:
    _ids = itertools.count(1)

    def __init__(self, service: ServiceState, mode: str, task: dict, seed: int):
        if mode not in MODES:
            raise UsageError(f"unknown mode {mode!r}")
        if mode == "aras" and service.net is None:
            raise CheckpointError("aras mode needs a checkpoint (serve --ckpt)")
        self.service = service
        self.mode = mode
        self.task = dict(task or {})
        self.seed = int(seed)
        self.sid = f"s{next(self._ids)}"
        self.episode_index = 0
        self.current_value = 0              # level-held 1-D signal
        self.pending_action: Action | None = None  # one-shot manual action
        self.done = False
        self.voided = False
        self._begin_episode()

    # -- episode lifecycle

    def _begin_episode(self) -> None:
        svc = self.service
        # episode 0 shares its stream derivation with a batch run of the same
        # seed so wire replays reproduce batch episodes exactly
        entropy = self.seed if self.episode_index == 0 else [self.seed, self.episode_index]
        layout_rng, _, _, policy_rng = episode_rngs(entropy)
        if self.task.get("layout") == "study":
            state = study_layout(svc.env)
        else:
            state = reset(svc.env, layout_rng)
        goal_object = int(self.task.get("goal_object", 0))
        goal_bin = int(self.task.get("goal_bin", 0))
        if not (0 <= goal_object < len(state.objects)):
            raise UsageError(f"goal_object {goal_object} out of range")
        if not (0 <= goal_bin < len(state.bins)):
            raise UsageError(f"goal_bin {goal_bin} out of range")
        script = IntentScript(kind=ScenarioKind.FIXED,
                              pickup=PhasePlan(goal_object),
                              dropoff=PhasePlan(goal_bin))
        if self.mode == "aras":
            policy = ArasPolicy(svc.net, epsilon=0.0, safety_mask=svc.safety_mask)
        elif self.mode == "ho":
            policy = HoPolicy()
        else:
            policy = LiveManualPolicy(self)
        self.state0 = state
        self.script = script
        self.gen = drive_episode(policy, state, script, svc.inference, svc.weights,
                                 self._sample_input, policy_rng, svc.stack_size)
        self.log = EpisodeLog(header={
            "schema_version": 1,
            "seed": self.seed,
            "episode_index": self.episode_index,
            "policy": policy.name,
            "mode": self.mode,
            "layout_kind": self.task.get("layout", "random"),
            **scenario_descriptor(script),
            "layout": layout_descriptor(state),
            "env": {"grid_size": svc.env.grid_size, "max_steps": svc.env.max_steps,
                    "tick_seconds": svc.env.tick_seconds,
                    "input_subsample": svc.env.input_subsample},
            "inference": {"tau": svc.inference.tau, "kappa": svc.inference.kappa,
                          "sigma": svc.inference.sigma},
            "weights": {"alpha_gp": svc.weights.alpha_gp,
                        "beta_ia": svc.weights.beta_ia,
                        "delta_tc": svc.weights.delta_tc},
            "stack_size": svc.stack_size,
        })
        self.done = False
        self.voided = False
        self.last_state = state
        self.ticks_done = 0

    def _sample_input(self, state, true_cell, tick) -> int:
        return int(self.current_value)

    # -- message handling

    def handle_input(self, msg: dict) -> dict:
        if self.done:
            return {"type": "ack", "accepted": False, "reason": "episode over; reset first"}
        if "action" in msg:
            if self.mode != "manual":
                return {"type": "ack", "accepted": False,
                        "reason": f"{self.mode} mode accepts value inputs only"}
            name = str(msg["action"]).lower()
            if name not in ACTION_NAMES:
                return {"type": "ack", "accepted": False, "reason": f"unknown action {name!r}"}
            self.pending_action = ACTION_NAMES[name]
            return {"type": "ack", "accepted": True}
        if "value" in msg:
            try:
                value = int(msg["value"])
            except (TypeError, ValueError):
                return {"type": "ack", "accepted": False, "reason": "value must be -1, 0, or 1"}
            if value not in (-1, 0, 1):
                return {"type": "ack", "accepted": False, "reason": "value must be -1, 0, or 1"}
            if self.mode == "manual":
                self.pending_action = {1: Action.RIGHT, -1: Action.LEFT,
                                       0: None}[value]
                return {"type": "ack", "accepted": True}
            self.current_value = value
            return {"type": "ack", "accepted": True}
        return {"type": "ack", "accepted": False, "reason": "input needs value or action"}

    # -- frames

    def initial_frame(self) -> dict:
        frame = self._frame_base(self.state0, tick=0, action=None, flags=None,
                                 terminal=None)
        if self.mode in ("aras", "ho"):
            belief = update_belief(ObservationWindow(self.service.inference.tau),
                                   self.service.inference, candidate_goals(self.state0))
            frame["belief"] = [{"goal": g, "p": p} for g, p in sorted(belief.posterior.items())]
        return frame

    def tick(self) -> dict | None:
        """Advance one tick; returns the frame message (None if idle)."""
        if self.done:
            return None
        try:
            ts = next(self.gen)
        except StopIteration:
            self.done = True
            return None
        except NumericalFault as exc:
            self.done = True
            self.voided = True
            return {"type": "fault", "reason": str(exc)}
        self.log.ticks.append(ts.record)
        self.ticks_done += 1
        self.last_state = ts.state_after
        terminal = ts.terminal.value if ts.terminal is not None else None
        frame = self._frame_base(ts.state_after, tick=self.ticks_done,
                                 action=ts.record["action"],
                                 flags=ts.record["flags"], terminal=terminal)
        if ts.belief is not None:
            frame["belief"] = [{"goal": g, "p": p}
                               for g, p in sorted(ts.belief.posterior.items())]
        if terminal is not None:
            self.done = True
            self.log.outcome = {"terminal": terminal, "ticks": self.ticks_done,
                                "deposited_bin": ts.state_after.deposited_bin}
            frame["metrics"] = aggregate([self.log]).to_dict()
        else:
            frame["metrics"] = self._running_metrics()
        return frame

    def _running_metrics(self) -> dict:
        s = episode_stats(self.log) if self.log.ticks else {
            "ticks": 0, "inputs": 0, "error_s": 0.0, "amplified_s": 0.0, "reward": 0.0}
        return {"ticks": s["ticks"], "total_inputs": s["inputs"],
                "error_actions_s": s["error_s"], "amplified_actions_s": s["amplified_s"],
                "cumulative_reward": s["reward"]}

    def _frame_base(self, state, tick: int, action, flags, terminal) -> dict:
        return {
            "type": "frame",
            "session": self.sid,
            "tick": tick,
            "grid": {
                "size": state.grid_size,
                "objects": [{"id": o.id, "cell": list(o.cell), "alive": o.alive}
                            for o in state.objects],
                "bins": [{"id": b.id, "cell": list(b.cell)} for b in state.bins],
                "held": state.gripper.held,
                "gripper_closed": state.gripper.closed,
            },
            "gripper": list(state.gripper.cell),
            "phase": state.phase.value,
            "action": action,
            "flags": flags or {"amplified": False, "error": False},
            "metrics": self._running_metrics(),
            "terminal": terminal,
        }

    def reset(self) -> dict:
        self.flush_log()
        self.episode_index += 1
        self.current_value = 0
        self.pending_action = None
        self._begin_episode()
        return self.initial_frame()

    def flush_log(self) -> None:
        svc = self.service
        if not svc.log_dir or not self.log.ticks:
            return
        if not self.log.outcome:
            self.log.outcome = {"terminal": "voided" if self.voided else "abandoned",
                                "ticks": self.ticks_done, "deposited_bin": None}
        path = Path(svc.log_dir) / f"{self.sid}-ep{self.episode_index}.jsonl"
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            for line in self.log.to_json_lines():
                fh.write(line + "\n")


async def _session_loop(ws, service: ServiceState) -> None:
    session: Session | None = None
    lock = asyncio.Lock()
    ticker: asyncio.Task | None = None

    async def send(obj: dict) -> None:
        await ws.send(json.dumps(obj, sort_keys=True))

    async def tick_once() -> None:
        if session is None:
            return
        frame = session.tick()
        if frame is not None:
            await send(frame)

    async def run_ticker() -> None:
        period = service.tick_ms / 1000.0
        try:
            while True:
                await asyncio.sleep(period)
                async with lock:
                    if session is None or session.done:
                        continue
                    await tick_once()
        except asyncio.CancelledError:
            pass

    try:
        async for raw in ws:
            try:
                msg = json.loads(raw)
            except json.JSONDecodeError:
                await send({"type": "error", "reason": "malformed json"})
                continue
            kind = msg.get("type")
            async with lock:
                if kind == "open":
                    if session is not None:
                        await send({"type": "error", "reason": "session already open"})
                        continue
                    try:
                        session = Session(service, msg.get("mode", ""),
                                          msg.get("task") or {}, msg.get("seed", 0))
                    except (UsageError, CheckpointError) as exc:
                        await send({"type": "error", "reason": str(exc)})
                        continue
                    await send({"type": "opened", "session": session.sid,
                                "mode": session.mode, "tick_ms": service.tick_ms,
                                "kappa": service.inference.kappa})
                    await send(session.initial_frame())
                    if service.tick_ms > 0 and ticker is None:
                        ticker = asyncio.create_task(run_ticker())
                elif session is None:
                    await send({"type": "error", "reason": "open a session first"})
                elif kind == "input":
                    await send(session.handle_input(msg))
                elif kind == "tick":
                    if service.tick_ms > 0:
                        await send({"type": "error",
                                    "reason": "server is ticking on a timer"})
                    elif session.done:
                        await send({"type": "error",
                                    "reason": "episode over; reset to continue"})
                    else:
                        await tick_once()
                elif kind == "reset":
                    await send(session.reset())
                elif kind == "close":
                    break
                else:
                    await send({"type": "error", "reason": f"unknown message type {kind!r}"})
    finally:
        if ticker is not None:
            ticker.cancel()
        if session is not None:
            session.flush_log()


def _build_state(cfg: dict, ckpt_path: str | None, tick_ms: int,
                 log_dir: str | None) -> ServiceState:
    net = meta = None
    if ckpt_path:
        net, meta = load_checkpoint(ckpt_path)
        if net.spec.grid_size != cfg["env"].grid_size:
            raise CheckpointError(
                f"checkpoint grid {net.spec.grid_size} != configured "
                f"{cfg['env'].grid_size}")
    return ServiceState(env=cfg["env"], inference=cfg["inference"],
                        weights=cfg["weights"], stack_size=cfg["train"].stack_size,
                        safety_mask=cfg["train"].safety_mask, tick_ms=tick_ms,
                        net=net, net_meta=meta, log_dir=log_dir)


class TeleopServer:
    """Embeddable server: runs the asyncio loop in a daemon thread."""

    def __init__(self, cfg: dict, ckpt_path: str | None = None, host: str = "127.0.0.1",
                 port: int = 0, tick_ms: int = 400, log_dir: str | None = None):
        self.state = _build_state(cfg, ckpt_path, tick_ms, log_dir)
        self.ckpt_path = ckpt_path
        self.host = host
        self.port = port
        self._loop: asyncio.AbstractEventLoop | None = None
        self._thread: threading.Thread | None = None
        self._started = threading.Event()
        self._stop: asyncio.Future | None = None

    def start(self) -> "TeleopServer":
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()
        if not self._started.wait(timeout=10):
            raise RuntimeError("teleop server failed to start")
        return self

    def _run(self) -> None:
        asyncio.run(self._main())

    async def _main(self) -> None:
        from websockets.asyncio.server import serve

        self._loop = asyncio.get_running_loop()
        self._stop = self._loop.create_future()
        async with serve(lambda ws: _session_loop(ws, self.state),
                         self.host, self.port) as server:
            self.port = server.sockets[0].getsockname()[1]
            self._started.set()
            await self._stop

    def stop(self) -> None:
        if self._loop and self._stop and not self._stop.done():
            self._loop.call_soon_threadsafe(self._stop.set_result, None)
        if self._thread:
            self._thread.join(timeout=10)

    @property
    def url(self) -> str:
        return f"ws://{self.host}:{self.port}"


def serve_forever(host: str, port: int, ckpt_path: str | None, tick_ms: int,
                  cfg: dict, log_dir: str | None = None) -> None:
    server = TeleopServer(cfg, ckpt_path, host, port, tick_ms, log_dir)
    server.start()
    print(f"teleop service listening on {server.url} "
          f"(tick: {'lockstep' if tick_ms == 0 else f'{tick_ms} ms'})")
    if server.state.net_meta:
        print(f"checkpoint loaded: {server.state.net_meta.get('param_count')} parameters")
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        print("shutting down")
        server.stop()
