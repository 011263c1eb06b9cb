"""Figure rendering for reports: learning curves, ablations, trajectories.

Everything draws through the Agg backend and writes straight to files next
to the delimited outputs; figures are a view of the logged data, never a
second source of truth.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .harness import EpisodeLog, MetricsReport
from .training import rolling_mean

ROLL = 100


def save_learning_curves(curve: list[dict], path: str, title: str = "") -> None:
    """Two panels: cumulative reward and steps per episode, with rolling means."""
    eps = [r["episode"] for r in curve]
    rewards = [r["reward"] for r in curve]
    steps = [r["steps"] for r in curve]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
    ax1.plot(eps, rewards, lw=0.3, alpha=0.35, color="tab:blue")
    ax1.plot(eps, rolling_mean(rewards, ROLL), lw=1.6, color="tab:blue")
    ax1.set_xlabel("episode")
    ax1.set_ylabel("cumulative reward")
    ax2.plot(eps, steps, lw=0.3, alpha=0.35, color="tab:orange")
    ax2.plot(eps, rolling_mean([float(s) for s in steps], ROLL), lw=1.6, color="tab:orange")
    ax2.set_xlabel("episode")
    ax2.set_ylabel("steps")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_ablation_curves(curves: dict[str, list[dict]], path: str) -> None:
    labels = {"none": "full reward", "gp": "no goal-progress",
              "ia": "no input-alignment", "tc": "no task-completion"}
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
    for drop, curve in curves.items():
        eps = [r["episode"] for r in curve]
        ax1.plot(eps, rolling_mean([r["reward"] for r in curve], ROLL),
                 lw=1.4, label=labels.get(drop, drop))
        ax2.plot(eps, rolling_mean([float(r["steps"]) for r in curve], ROLL), lw=1.4)
    ax1.set_xlabel("episode")
    ax1.set_ylabel(f"cumulative reward (rolling {ROLL})")
    ax1.legend(fontsize=8)
    ax2.set_xlabel("episode")
    ax2.set_ylabel(f"steps (rolling {ROLL})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_trajectories(logs: list[EpisodeLog], path: str, max_episodes: int = 60) -> None:
    """Top-down view of gripper paths; layout markers from the first log."""
    if not logs:
        return
    layout = logs[0].header["layout"]
    g = layout["grid_size"]
    fig, ax = plt.subplots(figsize=(6, 6))
    cmap = plt.get_cmap("tab10")
    for i, log in enumerate(logs[:max_episodes]):
        pts = [layout["start"]] + [t["gripper"] for t in log.ticks]
        arr = np.asarray(pts, dtype=float)
        jitter = (np.random.default_rng(i).uniform(-0.15, 0.15, size=arr.shape))
        color = cmap(log.header["pickup"]["goal"] % 10)
        ax.plot(arr[:, 1] + jitter[:, 1], arr[:, 0] + jitter[:, 0],
                lw=0.7, alpha=0.45, color=color)
    for oid, r, c in layout["objects"]:
        ax.scatter([c], [r], marker="o", s=120, facecolors="none",
                   edgecolors="black", zorder=3)
        ax.annotate(f"obj{oid}", (c, r), textcoords="offset points", xytext=(5, 5),
                    fontsize=7)
    for bid, r, c in layout["bins"]:
        ax.scatter([c], [r], marker="s", s=120, facecolors="none",
                   edgecolors="gray", zorder=3)
        ax.annotate(f"bin{bid}", (c, r), textcoords="offset points", xytext=(5, 5),
                    fontsize=7)
    sr, sc = layout["start"]
    ax.scatter([sc], [sr], marker="^", s=100, color="black", zorder=3)
    ax.set_xlim(-1, g)
    ax.set_ylim(-1, g)
    ax.set_xlabel("column")
    ax.set_ylabel("row (forward ->)")
    ax.set_title(f"gripper trajectories ({min(len(logs), max_episodes)} episodes)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_metrics_summary(report: MetricsReport, path: str, label: str = "") -> None:
    names = ["success\nrate (%)", "completion\ntime (s)", "total\ninputs",
             "error\nactions (s)", "amplified\nactions (s)", "cumulative\nreward"]
    vals = [report.success_rate,
            report.completion_time_s if report.completion_time_s is not None else 0.0,
            report.total_inputs, report.error_actions_s,
            report.amplified_actions_s, report.cumulative_reward]
    fig, ax = plt.subplots(figsize=(8, 3.5))
    bars = ax.bar(names, vals, color="tab:blue", alpha=0.8)
    for b, v in zip(bars, vals):
        ax.annotate(f"{v:.2f}", (b.get_x() + b.get_width() / 2, b.get_height()),
                    ha="center", va="bottom", fontsize=8)
    ax.set_title(label or f"{report.n_episodes} episodes")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
