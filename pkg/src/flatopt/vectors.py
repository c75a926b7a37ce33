"""Dense float64 vector algebra with layer-partition awareness.

Parameter and gradient vectors are plain 1-D ``numpy.float64`` arrays,
validated at construction time via :func:`as_vector`. A
:class:`LayerPartition` records contiguous index ranges, one per layer,
so per-layer norms can be taken on the flat vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "as_vector",
    "LayerPartition",
    "norm2",
    "layer_norms",
    "dot",
    "axpy",
    "scale",
]


def as_vector(values, name: str = "vector") -> np.ndarray:
    """Copy ``values`` into a validated 1-D float64 array.

    Rejects empty input and non-finite entries.
    """
    v = np.array(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {v.shape}")
    if v.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.isfinite(v).all():
        raise ValueError(f"non-finite {name}")
    return v


@dataclass(frozen=True)
class LayerPartition:
    """Contiguous, disjoint index ranges covering ``[0, length)``, one per layer."""

    bounds: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        if not self.bounds:
            raise ValueError("partition must have at least one layer")
        prev_end = 0
        for i, (lo, hi) in enumerate(self.bounds):
            if lo != prev_end:
                raise ValueError(f"layer {i} starts at {lo}, expected {prev_end}")
            if hi <= lo:
                raise ValueError(f"layer {i} range [{lo}, {hi}) is empty")
            prev_end = hi

    @classmethod
    def from_sizes(cls, sizes) -> "LayerPartition":
        """Build a partition from per-layer lengths."""
        bounds = []
        lo = 0
        for s in sizes:
            bounds.append((lo, lo + int(s)))
            lo += int(s)
        return cls(tuple(bounds))

    @classmethod
    def single(cls, length: int) -> "LayerPartition":
        return cls(((0, int(length)),))

    @property
    def length(self) -> int:
        return self.bounds[-1][1]

    @property
    def num_layers(self) -> int:
        return len(self.bounds)

    def slices(self):
        return tuple(slice(lo, hi) for lo, hi in self.bounds)

    def check_length(self, n: int) -> None:
        if self.length != n:
            raise ValueError(
                f"partition covers {self.length} entries, vector has {n}"
            )


def norm2(v: np.ndarray) -> float:
    """Euclidean norm; zero iff all entries are zero."""
    if not np.isfinite(v).all():
        raise ValueError("non-finite vector")
    return float(np.sqrt(np.dot(v, v)))


def layer_norms(v: np.ndarray, part: LayerPartition) -> list[float]:
    """Euclidean norm of each layer slice, in partition order."""
    part.check_length(len(v))
    return [norm2(v[sl]) for sl in part.slices()]


def _check_same_length(a: np.ndarray, b: np.ndarray) -> None:
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")


def dot(a: np.ndarray, b: np.ndarray) -> float:
    _check_same_length(a, b)
    return float(np.dot(a, b))


def axpy(alpha: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Return ``y + alpha * x``."""
    _check_same_length(x, y)
    return y + alpha * x


def scale(alpha: float, x: np.ndarray) -> np.ndarray:
    return alpha * x
