"""Shared fixtures for the acceptance suite.

Desk-scale trainings dominate the suite's runtime, so their artifacts are
cached on disk keyed by a digest of everything that determines them. Set
ARAS_ACCEPT_CACHE=0 to force cold runs; delete .acceptance_cache to reset.
"""
import hashlib
import json
import os
from pathlib import Path

import pytest

from aras.env import EnvConfig
from aras.inference import InferenceConfig
from aras.policy import RewardWeights, TrainConfig
from aras.training import run_ablation, train
from aras.users import UserProfile

CACHE_DIR = Path(__file__).resolve().parent.parent / ".acceptance_cache"
CACHE_ON = os.environ.get("ARAS_ACCEPT_CACHE", "1") != "0"

DESK_SEED = 2024
DESK_ENV = EnvConfig()
DESK_INF = InferenceConfig()
DESK_WEIGHTS = RewardWeights()
DESK_TRAIN = TrainConfig()          # 5000 episodes, desk defaults
DESK_PROFILE = UserProfile()


def _digest(parts: dict) -> str:
    return hashlib.sha256(json.dumps(parts, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _desk_digest(policy: str, drop: str = "none") -> str:
    return _digest({
        "policy": policy,
        "drop": drop,
        "seed": DESK_SEED,
        "env": repr(DESK_ENV),
        "inf": repr(DESK_INF),
        "weights": repr(DESK_WEIGHTS),
        "train": repr(DESK_TRAIN),
        "profile": repr(DESK_PROFILE),
    })


def _train_cached(policy: str, observation: str) -> dict:
    key = _desk_digest(policy)
    root = CACHE_DIR / f"{policy}-{key}"
    ckpt = root / "net.ckpt"
    curve = root / "curve.jsonl"
    meta = root / "meta.json"
    if not (CACHE_ON and meta.exists()):
        root.mkdir(parents=True, exist_ok=True)
        res = train(DESK_ENV, DESK_INF, DESK_WEIGHTS, DESK_TRAIN, scenario="mixed",
                    profile=DESK_PROFILE, seed=DESK_SEED, observation=observation,
                    ckpt_path=str(ckpt), curve_path=str(curve), log_every=500)
        meta.write_text(json.dumps({
            "wall_seconds": res.wall_seconds,
            "env_ticks": res.env_ticks,
            "grad_steps": res.grad_steps,
            "best_rolling_success": res.best_rolling_success,
        }))
    return {"ckpt": str(ckpt), "best": str(ckpt) + ".best", "curve": str(curve),
            "meta": json.loads(meta.read_text())}


@pytest.fixture(scope="session")
def desk_aras():
    return _train_cached("aras", "latent")


@pytest.fixture(scope="session")
def desk_dqn():
    return _train_cached("dqn", "raw")


@pytest.fixture(scope="session")
def desk_ablation(desk_aras):
    # the "none" configuration is byte-identical to the desk aras training
    # (same seed, config, and scenario stream), so its curve is reused
    key = _digest({"kind": "ablation", "base": _desk_digest("aras")})
    root = CACHE_DIR / f"ablation-{key}"
    done = root / "done.json"
    if not (CACHE_ON and done.exists()):
        root.mkdir(parents=True, exist_ok=True)
        run_ablation(DESK_ENV, DESK_INF, DESK_WEIGHTS, DESK_TRAIN, scenario="mixed",
                     profile=DESK_PROFILE, seed=DESK_SEED, drops=("gp", "ia", "tc"),
                     out_prefix=str(root / "run"), log_every=1000)
        done.write_text("{}")
    curves = {drop: str(root / f"run.{drop}.curve.jsonl")
              for drop in ("gp", "ia", "tc")}
    curves["none"] = desk_aras["curve"]
    return curves
