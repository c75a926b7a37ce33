"""Experiment configuration: a flat ``key = value`` text format with ``#``
comments and dotted keys for nesting, validated into typed specs.

Example::

    objective.kind = mlp
    objective.hidden = 16,16
    dataset.kind = two_moons
    dataset.n = 2000
    optimizer.method = looksam
    optimizer.rho = 0.1
    schedule.peak_lr = 0.1
    batch_size = 512
    total_steps = 500
    seed = 7
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from .optimizers import BaseStepperConfig, ScheduleConfig, SharpnessConfig

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "parse_kv_text",
    "load_config",
    "build_config",
]

METHODS = ("base", "sam", "sam_k", "looksam", "layersam", "look_layersam")
OBJECTIVE_KINDS = ("quadratic", "basin", "mlp")
DATASET_KINDS = ("two_moons", "blobs", "csv", "idx")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def parse_kv_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value.strip()
    return out


def load_config(path) -> dict[str, str]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_kv_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


class _Fields:
    """Typed access to the flat key/value map with field-named errors."""

    def __init__(self, kv: dict[str, str]):
        self.kv = dict(kv)
        self.used: set[str] = set()

    def _get(self, key, default):
        self.used.add(key)
        return self.kv.get(key, default)

    def str(self, key, default=None, choices=None):
        value = self._get(key, default)
        if value is None:
            raise ConfigError(f"{key}: required")
        if choices and value not in choices:
            raise ConfigError(f"{key}: must be one of {', '.join(choices)}, got {value!r}")
        return value

    def int(self, key, default=None, minimum=None):
        raw = self._get(key, default)
        if raw is None:
            raise ConfigError(f"{key}: required")
        try:
            value = int(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: not an integer: {raw!r}") from None
        if minimum is not None and value < minimum:
            raise ConfigError(f"{key}: must be >= {minimum}, got {value}")
        return value

    def float(self, key, default=None, positive=False, nonnegative=False):
        raw = self._get(key, default)
        if raw is None:
            raise ConfigError(f"{key}: required")
        try:
            value = float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: not a number: {raw!r}") from None
        if positive and value <= 0:
            raise ConfigError(f"{key}: must be > 0, got {value}")
        if nonnegative and value < 0:
            raise ConfigError(f"{key}: must be >= 0, got {value}")
        return value

    def flag(self, key, default=False):
        raw = self._get(key, None)
        if raw is None:
            return default
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: not a boolean: {raw!r}")

    def int_list(self, key, default=None):
        raw = self._get(key, default)
        if raw is None:
            raise ConfigError(f"{key}: required")
        if isinstance(raw, (list, tuple)):
            return list(raw)
        try:
            return [int(part) for part in raw.split(",") if part.strip() != ""]
        except ValueError:
            raise ConfigError(f"{key}: not a comma-separated integer list: {raw!r}") from None

    def path(self, key, default=None):
        value = self.str(key, default)
        if not os.path.exists(value):
            raise ConfigError(f"{key}: file not found: {value}")
        return value

    def reject_unknown(self, prefixes: tuple[str, ...]) -> None:
        for key in self.kv:
            if key in self.used:
                continue
            if any(key.startswith(p) for p in prefixes):
                raise ConfigError(f"{key}: unknown field")


@dataclass(frozen=True)
class ObjectiveSpec:
    kind: str
    hidden: tuple[int, ...] = ()
    activation: str = "tanh"
    dim: int = 2
    hessian_seed: int = 0
    diag: tuple[float, ...] = ()
    init_radius: float = 1.0


@dataclass(frozen=True)
class DatasetSpec:
    kind: str
    n: int = 0
    noise: float = 0.0
    sd: float = 0.0
    seed: int = 0
    eval_n: int = 0
    eval_seed: int = 0
    centers: tuple[tuple[float, ...], ...] = ()
    path: str = ""
    labels_path: str = ""
    has_header: bool = False
    label_column: int = -1
    normalize: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    objective: ObjectiveSpec
    dataset: DatasetSpec | None
    method: str
    sharpness: SharpnessConfig | None
    base: BaseStepperConfig
    schedule: ScheduleConfig
    batch_size: int
    total_steps: int
    seed: int
    eval_every: int = 0  # 0 means once per epoch (or total/10 for analytic runs)


def _parse_centers(raw: str):
    centers = []
    for part in raw.split(";"):
        part = part.strip()
        if not part:
            continue
        try:
            centers.append(tuple(float(x) for x in part.split(",")))
        except ValueError:
            raise ConfigError(f"dataset.centers: not numeric: {part!r}") from None
    if len(centers) < 2:
        raise ConfigError("dataset.centers: need at least 2 centers")
    return tuple(centers)


def build_config(kv: dict[str, str], overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Validate the flat key/value map into an ExperimentConfig."""
    merged = dict(kv)
    if overrides:
        merged.update({k: str(v) for k, v in overrides.items() if v is not None})
    f = _Fields(merged)

    obj_kind = f.str("objective.kind", choices=OBJECTIVE_KINDS)
    objective = ObjectiveSpec(
        kind=obj_kind,
        hidden=tuple(f.int_list("objective.hidden", "16,16")) if obj_kind == "mlp" else (),
        activation=f.str("objective.activation", "tanh", choices=("tanh", "relu")),
        dim=f.int("objective.dim", "2", minimum=1),
        hessian_seed=f.int("objective.hessian_seed", "0"),
        diag=tuple(
            float(x) for x in f.str("objective.diag", "").split(",") if x.strip()
        ),
        init_radius=f.float("objective.init_radius", "1.0", positive=True),
    )

    dataset = None
    if obj_kind == "mlp":
        ds_kind = f.str("dataset.kind", choices=DATASET_KINDS)
        dataset = DatasetSpec(
            kind=ds_kind,
            n=f.int("dataset.n", "1000", minimum=2),
            noise=f.float("dataset.noise", "0.2", nonnegative=True),
            sd=f.float("dataset.sd", "0.5", nonnegative=True),
            seed=f.int("dataset.seed", "0"),
            eval_n=f.int("dataset.eval_n", "0", minimum=0),
            eval_seed=f.int("dataset.eval_seed", "0"),
            centers=_parse_centers(f.str("dataset.centers", "-1,0;1,0"))
            if ds_kind == "blobs"
            else (),
            path=f.path("dataset.path") if ds_kind in ("csv", "idx") else "",
            labels_path=f.path("dataset.labels_path") if ds_kind == "idx" else "",
            has_header=f.flag("dataset.has_header"),
            label_column=f.int("dataset.label_column", "-1"),
            normalize=f.flag("dataset.normalize"),
        )

    method = f.str("optimizer.method", "base", choices=METHODS)
    layerwise = method in ("layersam", "look_layersam")
    rho = f.float("optimizer.rho", "1.0" if layerwise else "0.1", positive=True)
    alpha = f.float("optimizer.alpha", "0.7", nonnegative=True)
    k = f.int("optimizer.k", "5", minimum=1)
    sharpness = None
    if method != "base":
        sharpness = SharpnessConfig(
            rho=rho,
            alpha=alpha,
            k=k,
            mode="layerwise" if layerwise else "global",
        )

    clip_raw = f.str("optimizer.clip_norm", "off")
    if clip_raw == "off":
        clip_norm = None
    else:
        clip_norm = f.float("optimizer.clip_norm", positive=True)
    base = BaseStepperConfig(
        kind=f.str("optimizer.base", "sgd", choices=("sgd", "adamw", "lamb")),
        momentum=f.float("optimizer.momentum", "0.9", nonnegative=True),
        beta1=f.float("optimizer.beta1", "0.9", nonnegative=True),
        beta2=f.float("optimizer.beta2", "0.999", nonnegative=True),
        eps=f.float("optimizer.eps", "1e-8", positive=True),
        weight_decay=f.float("optimizer.weight_decay", "0.0", nonnegative=True),
        clip_norm=clip_norm,
    )

    total_steps = f.int("total_steps", minimum=1)
    try:
        schedule = ScheduleConfig(
            peak_lr=f.float("schedule.peak_lr", positive=True),
            total_steps=total_steps,
            warmup_steps=f.int("schedule.warmup_steps", "0", minimum=0),
            decay=f.str("schedule.decay", "constant", choices=("cosine", "linear", "constant")),
        )
    except ValueError as exc:
        raise ConfigError(f"schedule.warmup_steps: {exc}") from exc

    cfg = ExperimentConfig(
        objective=objective,
        dataset=dataset,
        method=method,
        sharpness=sharpness,
        base=base,
        schedule=schedule,
        batch_size=f.int("batch_size", "32", minimum=1),
        total_steps=total_steps,
        seed=f.int("seed", "0"),
        eval_every=f.int("eval_every", "0", minimum=0),
    )
    f.reject_unknown(("objective.", "dataset.", "optimizer.", "schedule."))
    return cfg
