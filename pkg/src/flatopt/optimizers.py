"""Update rules: base steppers, learning-rate schedules, and the
sharpness-aware family (SAM, SAM-k, LookSAM, LayerSAM, Look-LayerSAM).

Every SAM-style step ascends to the perturbed point w + eps and descends
with the gradient taken there. LookSAM pays for that second gradient only
every k-th step: on full steps it splits the perturbed gradient into the
component parallel to the plain gradient and the orthogonal remainder,
caches the orthogonal part, and on the k-1 steps in between rebuilds an
approximate direction as g + alpha * (|g| / |g_v|) * g_v. The layer-wise
variants scale the perturbation per layer by the trust ratio |w_i| / |g_i|.

Step indexing starts at t = 0 and the full computation fires when
t % k == 0, so the cache always exists before the first reuse. Gradient
evaluations are counted exactly: one per call into the objective, giving
2T for SAM, T + ceil(T/k) for LookSAM-k and SAM-k, and T for a plain
base stepper over T steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .objectives import Objective
from .vectors import LayerPartition, norm2

__all__ = [
    "SharpnessConfig",
    "ScheduleConfig",
    "BaseStepperConfig",
    "GradientBundle",
    "OptimizerState",
    "StepInfo",
    "init_state",
    "lr_at",
    "compute_perturbation",
    "compute_layerwise_perturbation",
    "trust_ratio_diag",
    "general_perturbation_pq",
    "decompose_gradient",
    "reuse_gradient",
    "sam_gradient",
    "clip_global_norm",
    "sgd_momentum_step",
    "adamw_step",
    "lamb_step",
    "plain_step",
    "sam_step",
    "sam_k_step",
    "looksam_step",
    "layersam_step",
    "look_layersam_step",
]

TRUST_RATIO_MIN = 1e-3
TRUST_RATIO_MAX = 10.0


@dataclass(frozen=True)
class SharpnessConfig:
    """Perturbation radius rho, reuse weight alpha, reuse frequency k, and
    perturbation mode (global or layerwise). p and q are the dual norm
    exponents of the perturbation ball; only p = q = 2 is used by the
    step functions."""

    rho: float
    alpha: float = 0.7
    k: int = 5
    mode: str = "global"
    p: float = 2.0
    q: float = 2.0

    def __post_init__(self) -> None:
        if self.rho <= 0:
            raise ValueError("rho must be > 0")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.mode not in ("global", "layerwise"):
            raise ValueError(f"unknown mode: {self.mode!r}")
        _check_pq(self.p, self.q)


def _check_pq(p: float, q: float) -> None:
    if p <= 1 or q <= 1 or abs(1.0 / p + 1.0 / q - 1.0) > 1e-12:
        raise ValueError(f"invalid norm exponents p={p}, q={q}: need 1/p + 1/q = 1")


@dataclass(frozen=True)
class ScheduleConfig:
    """Linear warmup to peak_lr followed by cosine, linear, or constant decay."""

    peak_lr: float
    total_steps: int
    warmup_steps: int = 0
    decay: str = "cosine"

    def __post_init__(self) -> None:
        if self.peak_lr <= 0:
            raise ValueError("peak_lr must be > 0")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if not 0 <= self.warmup_steps <= self.total_steps:
            raise ValueError("warmup_steps must lie in [0, total_steps]")
        if self.decay not in ("cosine", "linear", "constant"):
            raise ValueError(f"unknown decay: {self.decay!r}")


def lr_at(sched: ScheduleConfig, t: int) -> float:
    """Learning rate at step t: linear ramp 0 -> peak over the warmup, then decay."""
    if not 0 <= t <= sched.total_steps:
        raise ValueError(f"step {t} outside [0, {sched.total_steps}]")
    if t < sched.warmup_steps:
        return sched.peak_lr * t / sched.warmup_steps
    if sched.decay == "constant":
        return sched.peak_lr
    span = sched.total_steps - sched.warmup_steps
    if span == 0:
        return sched.peak_lr
    tau = (t - sched.warmup_steps) / span
    if sched.decay == "cosine":
        return sched.peak_lr * 0.5 * (1.0 + math.cos(math.pi * tau))
    return sched.peak_lr * (1.0 - tau)


@dataclass(frozen=True)
class BaseStepperConfig:
    """Hyperparameters of the base update rule fed with the chosen direction."""

    kind: str = "sgd"
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    clip_norm: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("sgd", "adamw", "lamb"):
            raise ValueError(f"unknown base stepper: {self.kind!r}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be > 0")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be > 0 when set")


@dataclass
class GradientBundle:
    """One step's gradient decomposition.

    g is the plain minibatch gradient, g_s the gradient at the perturbed
    point, g_h the component of g_s parallel to g, and g_v = g_s - g_h the
    orthogonal remainder that biases updates toward flat regions.
    ``degenerate`` marks the zero-gradient fallback where no perturbation
    was possible.
    """

    g: np.ndarray
    g_s: np.ndarray
    g_h: np.ndarray
    g_v: np.ndarray
    cos_theta: float
    degenerate: bool = False


@dataclass
class OptimizerState:
    """Mutable per-trial state: base-stepper buffers, the cached orthogonal
    component, the step counter, and the exact gradient-evaluation count."""

    dim: int
    momentum_buf: np.ndarray | None = None
    exp_avg: np.ndarray | None = None
    exp_avg_sq: np.ndarray | None = None
    adam_t: int = 0
    cached_g_v: np.ndarray | None = None
    t: int = 0
    grad_evals: int = 0


def init_state(base: BaseStepperConfig, dim: int) -> OptimizerState:
    state = OptimizerState(dim=dim)
    if base.kind == "sgd":
        state.momentum_buf = np.zeros(dim)
    else:
        state.exp_avg = np.zeros(dim)
        state.exp_avg_sq = np.zeros(dim)
    return state


@dataclass
class StepInfo:
    """Per-step diagnostics for metrics and probes."""

    loss: float
    g_norm: float
    full: bool
    g_v_norm: float | None = None
    cos_theta: float | None = None
    bundle: GradientBundle | None = None


# ---------------------------------------------------------------------------
# Perturbations and the gradient decomposition
# ---------------------------------------------------------------------------


def compute_perturbation(g: np.ndarray, rho: float) -> np.ndarray:
    """One-step ascent direction rho * g / |g|; its norm is exactly rho."""
    gn = norm2(g)
    if gn == 0.0:
        raise ValueError("zero-gradient perturbation")
    return (rho / gn) * g


def compute_layerwise_perturbation(
    g: np.ndarray, w: np.ndarray, part: LayerPartition, rho: float
) -> np.ndarray:
    """Global unit gradient restricted to each layer and scaled by the layer's
    trust ratio |w_i| / |g_i|; a layer with zero gradient gets a zero slice."""
    gn = norm2(g)
    if gn == 0.0:
        raise ValueError("zero-gradient perturbation")
    part.check_length(len(g))
    out = np.zeros_like(g)
    for sl in part.slices():
        layer_gn = norm2(g[sl])
        if layer_gn == 0.0:
            continue
        ratio = norm2(w[sl]) / layer_gn
        out[sl] = (rho * ratio / gn) * g[sl]
    return out


def trust_ratio_diag(w: np.ndarray, g: np.ndarray, part: LayerPartition) -> np.ndarray:
    """Per-parameter diagonal carrying each layer's trust ratio |w_i| / |g_i|
    (zero where the layer gradient vanishes)."""
    part.check_length(len(g))
    out = np.zeros_like(g)
    for sl in part.slices():
        layer_gn = norm2(g[sl])
        if layer_gn > 0.0:
            out[sl] = norm2(w[sl]) / layer_gn
    return out


def general_perturbation_pq(
    g: np.ndarray, scale_diag: np.ndarray, rho: float, p: float = 2.0, q: float = 2.0
) -> np.ndarray:
    """Scaled ascent direction for a general dual-norm pair:

        rho * sign(g) * scale_diag * |g|^(q-1) / (sum |g|^q)^(1/p)

    With p = q = 2 and a trust-ratio diagonal this reduces to the
    layer-wise perturbation; with an identity diagonal it reduces to the
    global one.
    """
    _check_pq(p, q)
    gn = norm2(g)
    if gn == 0.0:
        raise ValueError("zero-gradient perturbation")
    if len(scale_diag) != len(g):
        raise ValueError("scale_diag length mismatch")
    abs_g = np.abs(g)
    denom = float(np.sum(abs_g**q)) ** (1.0 / p)
    return rho * np.sign(g) * scale_diag * abs_g ** (q - 1.0) / denom


def decompose_gradient(g: np.ndarray, g_s: np.ndarray) -> GradientBundle:
    """Split g_s into the component parallel to g and the orthogonal rest.

    cos_theta is the angle cosine between g and g_s; a zero g_s yields
    zero components with cos_theta defined as 1.
    """
    gn = norm2(g)
    if gn == 0.0:
        raise ValueError("cannot decompose against a zero gradient")
    gsn = norm2(g_s)
    if gsn == 0.0:
        zero = np.zeros_like(g)
        return GradientBundle(g, g_s, zero, zero.copy(), 1.0)
    inner = float(np.dot(g, g_s))
    cos_theta = min(1.0, max(-1.0, inner / (gn * gsn)))
    g_h = (inner / (gn * gn)) * g
    g_v = g_s - g_h
    return GradientBundle(g, g_s, g_h, g_v, cos_theta)


def reuse_gradient(g: np.ndarray, cached_g_v: np.ndarray, alpha: float) -> np.ndarray:
    """Approximate perturbed gradient g + alpha * (|g| / |g_v|) * g_v.

    The ratio keeps the reused orthogonal component at a fixed fraction
    alpha of the plain gradient's norm; a zero cache returns g unchanged.
    """
    gvn = norm2(cached_g_v)
    if gvn == 0.0:
        return g.copy()
    return g + (alpha * norm2(g) / gvn) * cached_g_v


def _degenerate_bundle(g: np.ndarray) -> GradientBundle:
    zero = np.zeros_like(g)
    return GradientBundle(g, g.copy(), zero, zero.copy(), 1.0, degenerate=True)


def _sam_eval(
    obj: Objective, w: np.ndarray, batch, cfg: SharpnessConfig, state: OptimizerState
) -> tuple[float, GradientBundle]:
    """Two-evaluation SAM gradient; falls back to g_s = g on a zero gradient
    (one evaluation, flagged degenerate)."""
    loss, g = obj.loss_and_grad(w, batch)
    state.grad_evals += 1
    if norm2(g) == 0.0:
        return loss, _degenerate_bundle(g)
    if cfg.mode == "layerwise":
        eps_vec = compute_layerwise_perturbation(g, w, obj.partition, cfg.rho)
    else:
        eps_vec = compute_perturbation(g, cfg.rho)
    _, g_s = obj.loss_and_grad(w + eps_vec, batch)
    state.grad_evals += 1
    return loss, decompose_gradient(g, g_s)


def sam_gradient(
    obj: Objective, w: np.ndarray, batch, cfg: SharpnessConfig, state: OptimizerState
) -> GradientBundle:
    """Full sharpness-aware gradient bundle at w (counts its evaluations)."""
    _, bundle = _sam_eval(obj, w, batch, cfg, state)
    return bundle


# ---------------------------------------------------------------------------
# Base steppers
# ---------------------------------------------------------------------------


def clip_global_norm(g: np.ndarray, max_norm: float) -> np.ndarray:
    """Rescale g onto the max_norm ball when it exceeds it, else return it as is."""
    if max_norm <= 0:
        raise ValueError("max_norm must be > 0")
    gn = norm2(g)
    if gn <= max_norm:
        return g
    return (max_norm / gn) * g


def sgd_momentum_step(
    w: np.ndarray,
    direction: np.ndarray,
    state: OptimizerState,
    lr: float,
    momentum: float = 0.9,
    weight_decay: float = 0.0,
) -> np.ndarray:
    if len(direction) != state.dim or len(w) != state.dim:
        raise ValueError("dimension mismatch")
    d = direction + weight_decay * w if weight_decay else direction
    state.momentum_buf = momentum * state.momentum_buf + d
    return w - lr * state.momentum_buf


def _adam_update(direction, state, beta1, beta2, eps):
    state.adam_t += 1
    state.exp_avg = beta1 * state.exp_avg + (1.0 - beta1) * direction
    state.exp_avg_sq = beta2 * state.exp_avg_sq + (1.0 - beta2) * direction**2
    m_hat = state.exp_avg / (1.0 - beta1**state.adam_t)
    v_hat = state.exp_avg_sq / (1.0 - beta2**state.adam_t)
    return m_hat / (np.sqrt(v_hat) + eps)


def adamw_step(
    w: np.ndarray,
    direction: np.ndarray,
    state: OptimizerState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> np.ndarray:
    """Bias-corrected adaptive moments with decoupled weight decay."""
    if len(direction) != state.dim or len(w) != state.dim:
        raise ValueError("dimension mismatch")
    update = _adam_update(direction, state, beta1, beta2, eps)
    return w - lr * update - lr * weight_decay * w


def lamb_step(
    w: np.ndarray,
    direction: np.ndarray,
    part: LayerPartition,
    state: OptimizerState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> np.ndarray:
    """Adaptive-moment update rescaled per layer by the trust ratio
    |w_i| / |update_i|, clamped to [1e-3, 10] and set to 1 when either
    norm is zero. Weight decay joins the update before trust scaling."""
    if len(direction) != state.dim or len(w) != state.dim:
        raise ValueError("dimension mismatch")
    update = _adam_update(direction, state, beta1, beta2, eps)
    if weight_decay:
        update = update + weight_decay * w
    out = w.copy()
    for sl in part.slices():
        wn = norm2(w[sl])
        un = norm2(update[sl])
        if wn == 0.0 or un == 0.0:
            ratio = 1.0
        else:
            ratio = min(max(wn / un, TRUST_RATIO_MIN), TRUST_RATIO_MAX)
        out[sl] = w[sl] - lr * ratio * update[sl]
    return out


def _apply_base_step(w, direction, obj, base, state, lr):
    if base.clip_norm is not None:
        direction = clip_global_norm(direction, base.clip_norm)
    if base.kind == "sgd":
        return sgd_momentum_step(w, direction, state, lr, base.momentum, base.weight_decay)
    if base.kind == "adamw":
        return adamw_step(
            w, direction, state, lr, base.beta1, base.beta2, base.eps, base.weight_decay
        )
    return lamb_step(
        w, direction, obj.partition, state, lr,
        base.beta1, base.beta2, base.eps, base.weight_decay,
    )


# ---------------------------------------------------------------------------
# Step functions
# ---------------------------------------------------------------------------


def plain_step(
    obj: Objective,
    w: np.ndarray,
    batch,
    sched: ScheduleConfig,
    base: BaseStepperConfig,
    state: OptimizerState,
) -> tuple[np.ndarray, StepInfo]:
    """One base-stepper update with the plain minibatch gradient (one evaluation)."""
    loss, g = obj.loss_and_grad(w, batch)
    state.grad_evals += 1
    lr = lr_at(sched, state.t)
    w_new = _apply_base_step(w, g, obj, base, state, lr)
    state.t += 1
    return w_new, StepInfo(loss=loss, g_norm=norm2(g), full=False)


def _full_sam_body(obj, w, batch, cfg, sched, base, state):
    loss, bundle = _sam_eval(obj, w, batch, cfg, state)
    state.cached_g_v = bundle.g_v.copy()
    lr = lr_at(sched, state.t)
    w_new = _apply_base_step(w, bundle.g_s, obj, base, state, lr)
    state.t += 1
    info = StepInfo(
        loss=loss,
        g_norm=norm2(bundle.g),
        full=True,
        g_v_norm=norm2(bundle.g_v),
        cos_theta=bundle.cos_theta,
        bundle=bundle,
    )
    return w_new, info


def sam_step(
    obj: Objective,
    w: np.ndarray,
    batch,
    cfg: SharpnessConfig,
    sched: ScheduleConfig,
    base: BaseStepperConfig,
    state: OptimizerState,
) -> tuple[np.ndarray, StepInfo]:
    """Full sharpness-aware update every step (two evaluations per step)."""
    return _full_sam_body(obj, w, batch, cfg, sched, base, state)


def looksam_step(
    obj: Objective,
    w: np.ndarray,
    batch,
    cfg: SharpnessConfig,
    sched: ScheduleConfig,
    base: BaseStepperConfig,
    state: OptimizerState,
) -> tuple[np.ndarray, StepInfo]:
    """Full SAM update when t % k == 0, otherwise one plain evaluation plus
    the cached orthogonal component scaled by alpha * |g| / |g_v|."""
    if state.t % cfg.k == 0:
        return _full_sam_body(obj, w, batch, cfg, sched, base, state)
    loss, g = obj.loss_and_grad(w, batch)
    state.grad_evals += 1
    if state.cached_g_v is None:
        raise RuntimeError("reuse step before any full SAM step")
    direction = reuse_gradient(g, state.cached_g_v, cfg.alpha)
    lr = lr_at(sched, state.t)
    w_new = _apply_base_step(w, direction, obj, base, state, lr)
    state.t += 1
    info = StepInfo(
        loss=loss,
        g_norm=norm2(g),
        full=False,
        g_v_norm=norm2(state.cached_g_v),
    )
    return w_new, info


def sam_k_step(
    obj: Objective,
    w: np.ndarray,
    batch,
    cfg: SharpnessConfig,
    sched: ScheduleConfig,
    base: BaseStepperConfig,
    state: OptimizerState,
) -> tuple[np.ndarray, StepInfo]:
    """Full SAM update when t % k == 0 and a plain update in between; the
    in-between steps use g alone, with no reuse correction."""
    if state.t % cfg.k == 0:
        return _full_sam_body(obj, w, batch, cfg, sched, base, state)
    return plain_step(obj, w, batch, sched, base, state)


def layersam_step(
    obj: Objective,
    w: np.ndarray,
    batch,
    cfg: SharpnessConfig,
    sched: ScheduleConfig,
    base: BaseStepperConfig,
    state: OptimizerState,
) -> tuple[np.ndarray, StepInfo]:
    """Full SAM update every step with the layer-wise perturbation."""
    return _full_sam_body(obj, w, batch, _layerwise(cfg), sched, base, state)


def look_layersam_step(
    obj: Objective,
    w: np.ndarray,
    batch,
    cfg: SharpnessConfig,
    sched: ScheduleConfig,
    base: BaseStepperConfig,
    state: OptimizerState,
) -> tuple[np.ndarray, StepInfo]:
    """LookSAM control flow with the layer-wise perturbation on full steps."""
    return looksam_step(obj, w, batch, _layerwise(cfg), sched, base, state)


def _layerwise(cfg: SharpnessConfig) -> SharpnessConfig:
    return cfg if cfg.mode == "layerwise" else replace(cfg, mode="layerwise")
