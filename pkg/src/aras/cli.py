"""Command-line entry point: train, eval, ablate, gradcheck, sweep, serve."""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from .env import EnvConfig
from .errors import CheckpointError, ConfigError, UsageError
from .gradcheck import THRESHOLD, run_gradcheck
from .harness import aggregate, evaluate, write_logs, write_report, write_report_table
from .inference import InferenceConfig
from .policies import ArasPolicy, HoPolicy, ManualPolicy, OraclePolicy, RawDqnPolicy
from .policy import RewardWeights, TrainConfig
from .qnet import load_checkpoint
from .training import (ABLATION_DROPS, MIXED, SCENARIO_CHOICES, run_ablation,
                       train, write_curve)
from .users import ScenarioKind, UserProfile

_CONFIG_FIELDS = {
    "env": EnvConfig,
    "inference": InferenceConfig,
    "train": TrainConfig,
    "weights": RewardWeights,
    "profile": UserProfile,
}


def parse_config_file(path: str) -> dict[str, str]:
    """Flat `key = value` text; '#' starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key] = val
    return out


def _coerce(val: str, typ):
    if typ is bool:
        if val.lower() in ("1", "true", "yes", "on"):
            return True
        if val.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot parse boolean from {val!r}")
    return typ(val)


def build_configs(args) -> dict:
    """Defaults, overlaid with the config file, overlaid with CLI flags."""
    kv = parse_config_file(args.config) if getattr(args, "config", None) else {}
    built = {}
    known = set()
    for name, cls in _CONFIG_FIELDS.items():
        kwargs = {}
        for f in dataclasses.fields(cls):
            known.add(f.name)
            if f.name in kv:
                base = f.type if isinstance(f.type, type) else type(f.default)
                kwargs[f.name] = _coerce(kv[f.name], base)
        built[name] = dataclasses.replace(cls(), **kwargs)
    unknown = set(kv) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if getattr(args, "grid", None):
        built["env"] = dataclasses.replace(built["env"], grid_size=args.grid)
    built["env"].validate()
    built["inference"].validate()
    built["train"].validate()
    built["weights"].validate()
    built["profile"].validate()
    return built


def _load_policy(kind: str, ckpt: str | None, cfg: dict, epsilon: float = 0.0):
    if kind in ("aras", "dqn"):
        if not ckpt:
            raise UsageError(f"--policy {kind} needs --ckpt")
        net, meta = load_checkpoint(ckpt)
        if net.spec.grid_size != cfg["env"].grid_size:
            raise CheckpointError(
                f"checkpoint grid {net.spec.grid_size} != configured grid "
                f"{cfg['env'].grid_size}"
            )
        if net.spec.stack_size != cfg["train"].stack_size:
            raise CheckpointError(
                f"checkpoint stack {net.spec.stack_size} != configured stack "
                f"{cfg['train'].stack_size}"
            )
        print(f"loaded {ckpt}: {meta['param_count']} parameters")
        if kind == "aras":
            return ArasPolicy(net, epsilon, cfg["train"].safety_mask)
        return RawDqnPolicy(net, epsilon)
    if kind == "ho":
        return HoPolicy()
    if kind == "manual":
        return ManualPolicy()
    if kind == "oracle":
        return OraclePolicy()
    raise UsageError(f"unknown policy {kind!r}")


def cmd_train(args) -> int:
    cfg = build_configs(args)
    cfg["train"] = dataclasses.replace(cfg["train"], episodes=args.episodes)
    observation = "latent" if args.policy == "aras" else "raw"
    if args.policy not in ("aras", "dqn"):
        raise UsageError("only aras and dqn policies are trainable")
    t0 = time.perf_counter()
    res = train(cfg["env"], cfg["inference"], cfg["weights"], cfg["train"],
                scenario=args.scenario, profile=cfg["profile"], seed=args.seed,
                observation=observation, ckpt_path=args.ckpt_out,
                curve_path=args.report, log_every=args.log_every)
    wall = time.perf_counter() - t0
    print(f"trained {cfg['train'].episodes} episodes in {wall:.0f}s "
          f"({res.env_ticks} ticks, {res.grad_steps} gradient steps); "
          f"best rolling success {res.best_rolling_success:.2%}")
    if args.report:
        from .plots import save_learning_curves
        fig = str(Path(args.report).with_suffix(".png"))
        save_learning_curves(res.curve, fig, title=f"{args.policy} {args.scenario}")
        print(f"curve log: {args.report}\ncurve figure: {fig}")
    if args.ckpt_out:
        print(f"checkpoints: {args.ckpt_out} (final), {args.ckpt_out}.best (best)")
    return 0


def cmd_eval(args) -> int:
    cfg = build_configs(args)
    policy = _load_policy(args.policy, args.ckpt, cfg)
    kind = SCENARIO_CHOICES[args.scenario]
    logs = evaluate(policy, cfg["env"], cfg["inference"], cfg["weights"], kind,
                    cfg["profile"], episodes=args.episodes, seed=args.seed,
                    stack_size=cfg["train"].stack_size, layout=args.layout)
    report = aggregate(logs)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    if args.logs:
        write_logs(logs, args.logs)
        print(f"episode logs: {args.logs}")
    if args.report:
        write_report(report, logs, args.report)
        base = Path(args.report)
        table = str(base.with_suffix(".csv"))
        write_report_table(logs, table)
        from .plots import save_metrics_summary, save_trajectories
        mfig = str(base.with_name(base.stem + "_metrics.png"))
        tfig = str(base.with_name(base.stem + "_trajectories.png"))
        save_metrics_summary(report, mfig, label=f"{args.policy} / {args.scenario}")
        save_trajectories(logs, tfig)
        print(f"report: {args.report}\ntable: {table}\nfigures: {mfig}, {tfig}")
    return 0


def cmd_ablate(args) -> int:
    cfg = build_configs(args)
    cfg["train"] = dataclasses.replace(cfg["train"], episodes=args.episodes)
    drops = tuple(args.drops.split(",")) if args.drops else ABLATION_DROPS
    for d in drops:
        if d not in ABLATION_DROPS:
            raise UsageError(f"unknown reward term {d!r} (choose from {ABLATION_DROPS})")
    curves = run_ablation(cfg["env"], cfg["inference"], cfg["weights"], cfg["train"],
                          scenario=args.scenario, profile=cfg["profile"],
                          seed=args.seed, drops=drops, out_prefix=args.report,
                          log_every=args.log_every)
    for drop, curve in curves.items():
        tail = curve[-min(100, len(curve)):]
        reward = float(np.mean([r["reward"] for r in tail])) if tail else float("nan")
        steps = float(np.mean([r["steps"] for r in tail])) if tail else float("nan")
        print(f"{drop:5s} final rolling reward {reward:8.2f}  steps {steps:5.1f}")
    if args.report:
        from .plots import save_ablation_curves
        fig = f"{args.report}.ablation.png"
        save_ablation_curves(curves, fig)
        print(f"ablation figure: {fig}")
    return 0


def cmd_gradcheck(args) -> int:
    report = run_gradcheck(seeds=args.seeds)
    failed = False
    print(f"{'layer':14s} {'max rel err':>12s}  verdict")
    for name, err in report.items():
        ok = err < THRESHOLD
        failed |= not ok
        print(f"{name:14s} {err:12.3e}  {'PASS' if ok else 'FAIL'}")
    return 1 if failed else 0


SWEEP_GRID = {
    "learning_rate": [0.0005, 0.001, 0.005, 0.01],
    "gamma": [0.80, 0.90, 0.95, 0.99],
    "batch_size": [32, 64, 128, 256],
    "replay_capacity": [10_000, 50_000, 100_000],
    "target_update_every": [500, 1000, 2000],
    "epsilon_decay_steps": [5000, 10_000, 20_000],
    "stack_size": [4, 6, 8, 10],
}


def cmd_sweep(args) -> int:
    cfg = build_configs(args)
    rng = np.random.default_rng(args.seed)
    rows = []
    for trial in range(args.trials):
        picks = {k: v[int(rng.integers(len(v)))] for k, v in SWEEP_GRID.items()}
        tcfg = dataclasses.replace(cfg["train"], episodes=args.episodes, **picks)
        res = train(cfg["env"], cfg["inference"], cfg["weights"], tcfg,
                    scenario=args.scenario, profile=cfg["profile"],
                    seed=args.seed + trial)
        window = res.curve[-min(100, len(res.curve)):]
        success = sum(r["success"] for r in window) / max(1, len(window))
        row = {"trial": trial, "success": success, **picks}
        rows.append(row)
        print(json.dumps(row, sort_keys=True))
    if args.report:
        with open(args.report, "w") as fh:
            for row in sorted(rows, key=lambda r: -r["success"]):
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        print(f"sweep results: {args.report}")
    return 0


def cmd_serve(args) -> int:
    from .service import serve_forever
    cfg = build_configs(args)
    serve_forever(host=args.host, port=args.port, ckpt_path=args.ckpt,
                  tick_ms=args.tick_ms, cfg=cfg, log_dir=args.log_dir)
    return 0


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aras",
                                description="Shared-autonomy pick-and-place toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, episodes_default):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--episodes", type=int, default=episodes_default)
        sp.add_argument("--grid", type=int, default=None)
        sp.add_argument("--config", default=None, help="flat key=value config file")

    tr = sub.add_parser("train", help="train a policy")
    common(tr, 5000)
    tr.add_argument("--policy", choices=["aras", "dqn"], default="aras")
    tr.add_argument("--scenario", choices=[*SCENARIO_CHOICES, MIXED], default=MIXED)
    tr.add_argument("--ckpt", dest="ckpt_out", default="aras.ckpt",
                    help="checkpoint output path")
    tr.add_argument("--report", default=None, help="learning-curve jsonl output")
    tr.add_argument("--log-every", type=int, default=0)

    ev = sub.add_parser("eval", help="run seeded evaluation episodes")
    common(ev, 100)
    ev.add_argument("--policy", choices=["aras", "dqn", "ho", "manual", "oracle"],
                    required=True)
    ev.add_argument("--scenario", choices=list(SCENARIO_CHOICES), default="fixed")
    ev.add_argument("--ckpt", default=None)
    ev.add_argument("--report", default=None, help="metrics report jsonl output")
    ev.add_argument("--logs", default=None, help="full episode logs jsonl output")
    ev.add_argument("--layout", choices=["random", "study"], default="random")

    ab = sub.add_parser("ablate", help="reward-term ablation trainings")
    common(ab, 5000)
    ab.add_argument("--scenario", choices=[*SCENARIO_CHOICES, MIXED], default=MIXED)
    ab.add_argument("--drops", default=None, help="comma list from none,gp,ia,tc")
    ab.add_argument("--report", default=None, help="output prefix for curves")
    ab.add_argument("--log-every", type=int, default=0)

    gc = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    gc.add_argument("--seeds", type=int, default=20)

    sw = sub.add_parser("sweep", help="random hyperparameter search")
    common(sw, 300)
    sw.add_argument("--scenario", choices=[*SCENARIO_CHOICES, MIXED], default=MIXED)
    sw.add_argument("--trials", type=int, default=8)
    sw.add_argument("--report", default=None)

    sv = sub.add_parser("serve", help="real-time teleoperation service")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8765)
    sv.add_argument("--ckpt", default=None)
    sv.add_argument("--tick-ms", type=int, default=400, dest="tick_ms")
    sv.add_argument("--log-dir", default=None, dest="log_dir")
    sv.add_argument("--grid", type=int, default=None)
    sv.add_argument("--config", default=None)
    return p


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
    "sweep": cmd_sweep,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UsageError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
