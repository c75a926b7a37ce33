"""Seeded experiment execution: the training loop, metrics emission,
parameter sweeps, the stability probe, and the gradient-check report.

A run is fully determined by its config and seed; repeated runs produce
byte-identical metrics apart from the wall-clock fields (``wall_ms`` in
records, ``total_wall_ms`` in the summary).
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import data as datamod
from .analysis import StabilityTrace, gv_stability_series
from .config import ConfigError, ExperimentConfig, build_config
from .objectives import (
    BasinLandscape,
    MlpClassifier,
    Objective,
    QuadraticObjective,
    gradient_max_rel_error,
)
from .optimizers import (
    init_state,
    lr_at,
    look_layersam_step,
    looksam_step,
    layersam_step,
    plain_step,
    sam_k_step,
    sam_step,
)

__all__ = [
    "NumericError",
    "RunResult",
    "build_objective",
    "run_experiment",
    "write_metrics",
    "write_summary",
    "run_sweep",
    "probe_run",
    "write_probe_csv",
    "gradient_check_report",
]

METRIC_FIELDS = (
    "step",
    "epoch",
    "train_loss",
    "eval_loss",
    "eval_acc",
    "lr",
    "grad_evals",
    "g_norm",
    "g_v_norm",
    "cos_theta",
    "wall_ms",
)

WALL_CLOCK_FIELDS = ("wall_ms", "total_wall_ms")

_STEP_FNS = {
    "sam": sam_step,
    "sam_k": sam_k_step,
    "looksam": looksam_step,
    "layersam": layersam_step,
    "look_layersam": look_layersam_step,
}


class NumericError(RuntimeError):
    """Training produced a non-finite loss or parameter vector."""


@dataclass
class RunResult:
    records: list[dict]
    summary: dict
    final_w: np.ndarray
    trace: StabilityTrace | None = None


def _build_dataset(spec):
    if spec.kind == "two_moons":
        train = datamod.gen_two_moons(spec.n, spec.noise, spec.seed)
        test = (
            datamod.gen_two_moons(spec.eval_n, spec.noise, spec.eval_seed)
            if spec.eval_n
            else None
        )
    elif spec.kind == "blobs":
        train = datamod.gen_blobs(spec.n, spec.centers, spec.sd, spec.seed)
        test = (
            datamod.gen_blobs(spec.eval_n, spec.centers, spec.sd, spec.eval_seed)
            if spec.eval_n
            else None
        )
    elif spec.kind == "csv":
        train = datamod.load_csv(spec.path, spec.has_header, spec.label_column)
        test = None
    else:
        train = datamod.load_idx(spec.path, spec.labels_path)
        test = None
    if spec.normalize:
        train, stats = datamod.zscore(train)
        if test is not None:
            test, _ = datamod.zscore(test, stats)
    return train, test


def build_objective(cfg: ExperimentConfig):
    """Materialize (objective, initial parameters, train dataset, eval dataset)."""
    spec = cfg.objective
    if spec.kind == "quadratic":
        if spec.diag:
            obj: Objective = QuadraticObjective.diagonal(spec.diag)
        else:
            obj = QuadraticObjective.random_psd(spec.dim, spec.hessian_seed)
        rng = np.random.Generator(np.random.PCG64(cfg.seed))
        direction = rng.standard_normal(obj.dim)
        w0 = obj.center + spec.init_radius * direction / np.sqrt(direction @ direction)
        return obj, w0, None, None
    if spec.kind == "basin":
        obj = BasinLandscape.two_basin_default()
        rng = np.random.Generator(np.random.PCG64(cfg.seed))
        direction = rng.standard_normal(obj.dim)
        w0 = spec.init_radius * direction / np.sqrt(direction @ direction)
        return obj, w0, None, None

    if cfg.dataset is None:
        raise ConfigError("dataset.kind: required for mlp objective")
    train, test = _build_dataset(cfg.dataset)
    mlp = MlpClassifier([train.d, *spec.hidden, train.num_classes], spec.activation)
    w0 = mlp.init_params(cfg.seed)
    return mlp, w0, train, test


def _default_eval_every(cfg: ExperimentConfig, train) -> int:
    if cfg.eval_every:
        return cfg.eval_every
    if train is not None:
        return max(1, train.n // cfg.batch_size)
    return max(1, cfg.total_steps // 10)


def run_experiment(cfg: ExperimentConfig, capture_trace: bool = False) -> RunResult:
    """Execute the configured training loop and collect metrics records."""
    obj, w, train, test = build_objective(cfg)
    if cfg.method == "base":
        step_fn = None
    else:
        step_fn = _STEP_FNS[cfg.method]
    state = init_state(cfg.base, obj.dim)
    sampler = datamod.SamplerState(cfg.seed + 1) if train is not None else None
    eval_every = _default_eval_every(cfg, train)
    trace = StabilityTrace() if capture_trace else None

    records: list[dict] = []
    best_acc = None
    start = time.perf_counter()
    for t in range(cfg.total_steps):
        if train is not None:
            idx, sampler = datamod.next_batch(sampler, train, cfg.batch_size)
            batch = datamod.take(train, idx)
            epoch = sampler.epoch
        else:
            batch = None
            epoch = t

        tic = time.perf_counter()
        try:
            if step_fn is None:
                w, info = plain_step(obj, w, batch, cfg.schedule, cfg.base, state)
            else:
                w, info = step_fn(obj, w, batch, cfg.sharpness, cfg.schedule, cfg.base, state)
        except ValueError as exc:
            if "non-finite" in str(exc):
                raise NumericError(f"non-finite values at step {t}") from exc
            raise
        wall_ms = (time.perf_counter() - tic) * 1e3

        if not np.isfinite(info.loss) or not np.isfinite(w).all():
            raise NumericError(f"non-finite loss or parameters at step {t}")
        if trace is not None and info.bundle is not None:
            trace.append(t, info.bundle)

        if (t + 1) % eval_every == 0 or t == cfg.total_steps - 1:
            eval_loss = eval_acc = None
            if isinstance(obj, MlpClassifier):
                ds = test if test is not None else train
                eval_loss = obj.loss(w, (ds.features, ds.labels))
                eval_acc = obj.accuracy(w, ds.features, ds.labels)
                if best_acc is None or eval_acc > best_acc:
                    best_acc = eval_acc
            records.append(
                {
                    "step": t,
                    "epoch": epoch,
                    "train_loss": info.loss,
                    "eval_loss": eval_loss,
                    "eval_acc": eval_acc,
                    "lr": lr_at(cfg.schedule, t),
                    "grad_evals": state.grad_evals,
                    "g_norm": info.g_norm,
                    "g_v_norm": info.g_v_norm,
                    "cos_theta": info.cos_theta,
                    "wall_ms": wall_ms,
                }
            )

    total_ms = (time.perf_counter() - start) * 1e3
    summary = {
        "method": cfg.method,
        "seed": cfg.seed,
        "total_steps": cfg.total_steps,
        "total_grad_evals": state.grad_evals,
        "final_train_loss": records[-1]["train_loss"] if records else None,
        "final_eval_loss": records[-1]["eval_loss"] if records else None,
        "final_eval_acc": records[-1]["eval_acc"] if records else None,
        "best_eval_acc": best_acc,
        "param_digest": hashlib.sha256(w.tobytes()).hexdigest(),
        "total_wall_ms": total_ms,
    }
    return RunResult(records=records, summary=summary, final_w=w, trace=trace)


def write_metrics(records: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps({k: record[k] for k in METRIC_FIELDS}))
            fh.write("\n")


def write_summary(summary: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")


def run_to_dir(cfg: ExperimentConfig, out_dir) -> RunResult:
    os.makedirs(out_dir, exist_ok=True)
    result = run_experiment(cfg)
    write_metrics(result.records, os.path.join(out_dir, "metrics.jsonl"))
    write_summary(result.summary, os.path.join(out_dir, "summary.json"))
    return result


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


def _sweep_cell(args):
    kv, overrides, cell_dir = args
    try:
        cfg = build_config(kv, overrides)
        result = run_to_dir(cfg, cell_dir)
        row = {"status": "ok", **result.summary}
    except Exception as exc:  # one cell's failure must not stop the sweep
        row = {"status": f"error: {exc}"}
    return row


def run_sweep(kv: dict[str, str], grid: dict[str, list[str]], out_dir, jobs: int = 1):
    """One run per Cartesian grid cell; cell seeds are base seed + cell index.

    Returns the aggregate rows and writes them to ``aggregate.csv``.
    """
    if not grid:
        raise ConfigError("empty grid")
    base_seed = int(kv.get("seed", "0"))
    names = sorted(grid)
    cells = list(itertools.product(*(grid[name] for name in names)))
    os.makedirs(out_dir, exist_ok=True)

    tasks = []
    for index, values in enumerate(cells):
        overrides = dict(zip(names, values))
        overrides["seed"] = str(base_seed + index)
        cell_dir = os.path.join(out_dir, f"cell_{index:04d}")
        tasks.append((dict(kv), overrides, cell_dir))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_cell, tasks))
    else:
        rows = [_sweep_cell(task) for task in tasks]

    for index, (values, row) in enumerate(zip(cells, rows)):
        row_params = dict(zip(names, values))
        rows[index] = {"cell": index, **row_params, "seed": base_seed + index, **row}

    header: list[str] = []
    for row in rows:
        for key in row:
            if key not in header:
                header.append(key)
    csv_path = os.path.join(out_dir, "aggregate.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return rows


# ---------------------------------------------------------------------------
# Stability probe
# ---------------------------------------------------------------------------


def probe_run(cfg: ExperimentConfig, k: int):
    """Run a full-SAM config while recording the gradient decomposition, then
    reduce the trace to step-k difference series."""
    if cfg.method not in ("sam", "layersam"):
        raise ConfigError(
            f"optimizer.method: probe requires a full-SAM run (sam or layersam), got {cfg.method!r}"
        )
    result = run_experiment(cfg, capture_trace=True)
    trace = result.trace
    if trace is None or len(trace) == 0 or trace.all_degenerate():
        raise NumericError("zero-gradient trace")
    return gv_stability_series(trace, k), result


def write_probe_csv(series, path) -> None:
    """Columns t, d_gs, d_gh, d_gv plus normalized variants; the final row is
    a footer holding the column means."""
    columns = ("d_gs", "d_gh", "d_gv", "d_gs_norm", "d_gh_norm", "d_gv_norm")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("t",) + columns)
        for i, t in enumerate(series.steps):
            writer.writerow([int(t)] + [repr(float(getattr(series, c)[i])) for c in columns])
        writer.writerow(["mean"] + [repr(float(getattr(series, c).mean())) for c in columns])


# ---------------------------------------------------------------------------
# Gradient check
# ---------------------------------------------------------------------------


def gradient_check_report(cfg: ExperimentConfig, points: int = 10, h: float = 1e-6):
    """Analytic vs central-difference gradients at seeded points around the
    configured start; returns (max error, per-point errors)."""
    obj, w0, train, _ = build_objective(cfg)
    rng = np.random.Generator(np.random.PCG64(cfg.seed + 77))
    errors = []
    for _ in range(points):
        w = w0 + 0.1 * rng.standard_normal(obj.dim)
        if train is not None:
            idx = rng.choice(train.n, size=min(8, train.n), replace=False)
            batch = datamod.take(train, idx)
        else:
            batch = None
        errors.append(gradient_max_rel_error(obj, w, batch, h))
    return max(errors), errors
