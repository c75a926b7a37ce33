"""Figure rendering for run, probe, and sweep outputs.

Reads the delimited data files a run directory already contains and
writes PNG figures next to them. Kept separate from the experiment
commands so their outputs stay plain data.
"""

from __future__ import annotations

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["render_run", "render_probe", "render_sweep", "render_dir"]


def _read_jsonl(path):
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def render_run(metrics_path, out_path) -> str:
    """Loss / accuracy / learning-rate curves from a metrics JSONL file."""
    records = _read_jsonl(metrics_path)
    steps = [r["step"] for r in records]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.2))

    axes[0].plot(steps, [r["train_loss"] for r in records], label="train loss")
    if any(r["eval_loss"] is not None for r in records):
        axes[0].plot(steps, [r["eval_loss"] for r in records], label="eval loss")
    axes[0].set_xlabel("step")
    axes[0].set_ylabel("loss")
    axes[0].legend()

    if any(r["eval_acc"] is not None for r in records):
        axes[1].plot(steps, [r["eval_acc"] for r in records])
        axes[1].set_ylabel("eval accuracy")
    else:
        axes[1].plot(steps, [r["g_norm"] for r in records])
        axes[1].set_ylabel("gradient norm")
    axes[1].set_xlabel("step")

    axes[2].plot(steps, [r["lr"] for r in records])
    axes[2].set_xlabel("step")
    axes[2].set_ylabel("learning rate")

    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_probe(probe_path, out_path) -> str:
    """Normalized step-k difference series for g_s, g_h, g_v."""
    with open(probe_path, "r", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    rows = [r for r in rows if r["t"] != "mean"]
    steps = [int(r["t"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    for column, label in (
        ("d_gs_norm", "perturbed gradient"),
        ("d_gh_norm", "parallel part"),
        ("d_gv_norm", "orthogonal part"),
    ):
        ax.plot(steps, [float(r[column]) for r in rows], label=label)
    ax.set_xlabel("step")
    ax.set_ylabel("normalized difference")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_sweep(aggregate_path, out_path) -> str:
    """Summary metric against each swept parameter."""
    with open(aggregate_path, "r", encoding="utf-8") as fh:
        rows = [r for r in csv.DictReader(fh) if r.get("status") == "ok"]
    if not rows:
        raise ValueError(f"{aggregate_path}: no successful cells to plot")
    metric = "final_eval_acc" if rows[0].get("final_eval_acc") else "final_train_loss"
    skip = {"cell", "seed", "status", "method"}
    params = [
        k
        for k in rows[0]
        if k not in skip and not k.startswith(("final_", "best_", "total_", "param_"))
    ]
    fig, axes = plt.subplots(1, max(1, len(params)), figsize=(4 * max(1, len(params)), 3.5))
    if len(params) <= 1:
        axes = [axes]
    for ax, param in zip(axes, params):
        ys = [float(r[metric]) for r in rows]
        try:
            xs = [float(r[param]) for r in rows]
            ax.plot(xs, ys, "o-")
        except ValueError:  # categorical parameter (e.g. a stepper name)
            labels = [r[param] for r in rows]
            ax.plot(range(len(labels)), ys, "o-")
            ax.set_xticks(range(len(labels)), labels)
        ax.set_xlabel(param)
        ax.set_ylabel(metric)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_dir(directory) -> list[str]:
    """Render figures for every recognized data file in a directory."""
    written = []
    metrics = os.path.join(directory, "metrics.jsonl")
    if os.path.exists(metrics):
        written.append(render_run(metrics, os.path.join(directory, "curves.png")))
    probe = os.path.join(directory, "probe.csv")
    if os.path.exists(probe):
        written.append(render_probe(probe, os.path.join(directory, "stability.png")))
    aggregate = os.path.join(directory, "aggregate.csv")
    if os.path.exists(aggregate):
        written.append(render_sweep(aggregate, os.path.join(directory, "sweep.png")))
    return written
