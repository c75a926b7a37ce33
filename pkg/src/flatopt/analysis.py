"""Measurement and theory checking: gradient-stability probes, curvature
oracles for the orthogonal SAM component, a one-ascent-step sharpness
estimate, and a PAC-Bayes generalization bound evaluator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .objectives import Objective
from .optimizers import GradientBundle, compute_perturbation
from .vectors import norm2

__all__ = [
    "StabilityTrace",
    "StabilitySeries",
    "BoundInputs",
    "gv_stability_series",
    "gv_taylor_estimate",
    "gv_drift_bound",
    "sharpness_estimate",
    "pac_bayes_bound",
    "pac_bayes_terms",
    "projection_multiplier",
    "reuse_error_std",
]


class StabilityTrace:
    """Per-step records of the gradient decomposition along a full-SAM run."""

    def __init__(self) -> None:
        self.steps: list[int] = []
        self.bundles: list[GradientBundle] = []

    def __len__(self) -> int:
        return len(self.steps)

    def append(self, t: int, bundle: GradientBundle) -> None:
        if self.steps and t <= self.steps[-1]:
            raise ValueError("trace steps must be strictly increasing")
        self.steps.append(t)
        self.bundles.append(bundle)

    def all_degenerate(self) -> bool:
        return all(b.degenerate for b in self.bundles)


@dataclass
class StabilitySeries:
    """Step-k differences of g_s, g_h, g_v along a trace, raw and normalized
    by the running mean norm of the corresponding quantity."""

    steps: np.ndarray
    d_gs: np.ndarray
    d_gh: np.ndarray
    d_gv: np.ndarray
    d_gs_norm: np.ndarray
    d_gh_norm: np.ndarray
    d_gv_norm: np.ndarray


def gv_stability_series(trace: StabilityTrace, k: int) -> StabilitySeries:
    """For each t with t + k in the trace, the norms |x_t - x_{t+k}| for
    x in (g_s, g_h, g_v). The normalized variant divides by the cumulative
    mean of |x| over all records up to t + k, so quantities of different
    scale can be compared."""
    if k < 1:
        raise ValueError("k must be >= 1")
    n = len(trace)
    if n <= k:
        raise ValueError(f"trace too short: {n} records for k={k}")

    raw = {}
    normed = {}
    for name in ("g_s", "g_h", "g_v"):
        xs = [getattr(b, name) for b in trace.bundles]
        norms = np.array([norm2(x) for x in xs])
        cum_mean = np.cumsum(norms) / np.arange(1, n + 1)
        diffs = np.array([norm2(xs[t + k] - xs[t]) for t in range(n - k)])
        denom = cum_mean[k:]
        raw[name] = diffs
        normed[name] = np.where(denom > 0.0, diffs / np.where(denom > 0, denom, 1.0), 0.0)

    return StabilitySeries(
        steps=np.array(trace.steps[: n - k]),
        d_gs=raw["g_s"],
        d_gh=raw["g_h"],
        d_gv=raw["g_v"],
        d_gs_norm=normed["g_s"],
        d_gh_norm=normed["g_h"],
        d_gv_norm=normed["g_v"],
    )


def _hessian_apply(hessian, v: np.ndarray) -> np.ndarray:
    if hasattr(hessian, "hessian_vector"):
        return hessian.hessian_vector(v)
    h = np.asarray(hessian, dtype=np.float64)
    return h @ v


def gv_taylor_estimate(hessian, g: np.ndarray, rho: float) -> np.ndarray:
    """Second-order prediction of the orthogonal SAM component: 0.5 rho H ghat.

    ``hessian`` is a dense matrix or any object exposing ``hessian_vector``.
    """
    gn = norm2(g)
    if gn == 0.0:
        raise ValueError("zero gradient")
    return 0.5 * rho * _hessian_apply(hessian, g / gn)


def gv_drift_bound(hessian_t, g_t: np.ndarray, hessian_tk, g_tk: np.ndarray, rho: float) -> float:
    """Predicted change of the orthogonal component between two steps:
    |0.5 rho (H_t ghat_t - H_tk ghat_tk)|."""
    gn_t, gn_tk = norm2(g_t), norm2(g_tk)
    if gn_t == 0.0 or gn_tk == 0.0:
        raise ValueError("zero gradient")
    a = _hessian_apply(hessian_t, g_t / gn_t)
    b = _hessian_apply(hessian_tk, g_tk / gn_tk)
    return float(0.5 * rho * norm2(a - b))


def sharpness_estimate(obj: Objective, w: np.ndarray, batch=None, rho: float = 0.1) -> float:
    """One-ascent-step sharpness L(w + rho ghat) - L(w).

    Can be negative on nonconvex objectives when the ascent step
    overshoots; returned as computed. Zero gradient yields 0.
    """
    loss, g = obj.loss_and_grad(w, batch)
    if norm2(g) == 0.0:
        return 0.0
    eps_vec = compute_perturbation(g, rho)
    return obj.loss(w + eps_vec, batch) - loss


def projection_multiplier(hessian, g: np.ndarray, rho: float) -> float:
    """Coefficient c = rho * ghat^T H ghat, which makes rho H ghat - c ghat
    orthogonal to g. This is the parallel part removed when projecting the
    curvature term onto the orthogonal complement of the gradient."""
    gn = norm2(g)
    if gn == 0.0:
        raise ValueError("zero gradient")
    ghat = g / gn
    return float(rho * np.dot(ghat, _hessian_apply(hessian, ghat)))


@dataclass(frozen=True)
class BoundInputs:
    """Inputs of the generalization bound: dataset size n, confidence delta,
    parameter dimension, squared weight norm, perturbation radius rho, and
    the reuse-error radius rho0. The effective radius satisfies
    rho'^2 = rho^2 + rho0^2."""

    n: int
    delta: float
    dim: int
    w_norm2_sq: float
    rho: float
    rho0: float = 0.0

    def __post_init__(self) -> None:
        if self.n <= 1:
            raise ValueError("n must be > 1")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.w_norm2_sq < 0:
            raise ValueError("w_norm2_sq must be >= 0")
        if self.rho <= 0:
            raise ValueError("rho must be > 0")
        if self.rho0 < 0:
            raise ValueError("rho0 must be >= 0")

    @property
    def rho_prime_sq(self) -> float:
        return self.rho**2 + self.rho0**2


def pac_bayes_terms(b: BoundInputs) -> dict[str, float]:
    """The three additive terms under the square root, natural log throughout."""
    ratio = b.w_norm2_sq / b.rho_prime_sq
    inflation = (1.0 + math.sqrt(math.log(b.n) / b.dim)) ** 2
    return {
        "complexity": b.dim * math.log1p(ratio * inflation),
        "confidence": 4.0 * math.log(b.n / b.delta),
        "residual": 8.0 * math.log(6.0 * b.n + 3.0 * b.dim),
    }


def pac_bayes_bound(b: BoundInputs) -> float:
    """High-probability complexity term bounding the generalization gap of
    perturbed training with reuse error:

        sqrt((dim * ln(1 + (|w|^2 / rho'^2)(1 + sqrt(ln n / dim))^2)
              + 4 ln(n / delta) + 8 ln(6n + 3 dim)) / (n - 1))
    """
    terms = pac_bayes_terms(b)
    return math.sqrt(sum(terms.values()) / (b.n - 1))


def reuse_error_std(errors) -> float:
    """Heuristic spread of reuse error: the empirical standard deviation of
    all entries of the supplied (approximate minus true) gradient
    differences. Only a rough proxy for the unobservable per-coordinate
    noise scale; treat the result as indicative, not calibrated."""
    arrays = [np.asarray(e, dtype=np.float64).ravel() for e in errors]
    if not arrays or sum(a.size for a in arrays) == 0:
        raise ValueError("no error samples")
    return float(np.concatenate(arrays).std())
