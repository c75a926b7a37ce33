"""Dataset ingestion, synthetic generators, and seeded minibatch sampling.

All randomness runs through ``numpy.random.Generator(PCG64(seed))``; PCG64
is a documented, portable 64-bit generator so a fixed seed reproduces the
same dataset and the same batch sequence everywhere. Feature normalization
is opt-in via :func:`zscore`, never applied implicitly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Dataset",
    "SamplerState",
    "load_csv",
    "save_csv",
    "load_idx",
    "gen_two_moons",
    "gen_blobs",
    "zscore",
    "next_batch",
    "take",
]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (n, d) of float64 plus integer labels in [0, num_classes)."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        f, y = self.features, self.labels
        if f.ndim != 2 or f.shape[0] < 1 or f.shape[1] < 1:
            raise ValueError(f"features must be a non-empty 2-D matrix, got {f.shape}")
        if not np.isfinite(f).all():
            raise ValueError("non-finite feature values")
        if y.ndim != 1 or len(y) != f.shape[0]:
            raise ValueError("labels must be one integer per row")
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        if y.min() < 0 or y.max() >= self.num_classes:
            raise ValueError("label out of range")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


def _make_dataset(features, labels, num_classes=None) -> Dataset:
    f = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if num_classes is None:
        num_classes = int(y.max()) + 1 if len(y) else 0
        num_classes = max(num_classes, 2)
    return Dataset(f, y, int(num_classes))


def load_csv(path, has_header: bool = False, label_column: int = -1) -> Dataset:
    """Parse a comma-separated numeric file with one integer label column."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n").rstrip("\r") for ln in fh if ln.strip() != ""]
    if has_header:
        lines = lines[1:]
    if not lines:
        raise ValueError(f"{path}: no data rows")

    width = len(lines[0].split(","))
    if not -width <= label_column < width:
        raise ValueError(f"label column {label_column} out of range for {width} columns")
    label_idx = label_column % width

    features, labels = [], []
    for i, line in enumerate(lines):
        cells = line.split(",")
        if len(cells) != width:
            raise ValueError(
                f"row {i}: expected {width} columns, got {len(cells)}"
            )
        row = []
        for j, cell in enumerate(cells):
            try:
                value = float(cell)
            except ValueError:
                raise ValueError(f"row {i}, column {j}: not numeric: {cell!r}") from None
            if not np.isfinite(value):
                raise ValueError(f"row {i}, column {j}: non-finite value")
            if j == label_idx:
                if value != int(value):
                    raise ValueError(f"row {i}, column {j}: label must be an integer")
                if value < 0:
                    raise ValueError(f"row {i}, column {j}: label out of range")
                labels.append(int(value))
            else:
                row.append(value)
        features.append(row)
    return _make_dataset(features, labels)


def save_csv(ds: Dataset, path) -> None:
    """Write features then the label as the last column; floats use repr so a
    reload is bit-identical."""
    with open(path, "w", encoding="utf-8") as fh:
        for row, label in zip(ds.features, ds.labels):
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write(f",{int(label)}\n")


def _read_idx_header(raw: bytes, path, expected_magic: int, n_dims: int):
    header_len = 4 + 4 * n_dims
    if len(raw) < header_len:
        raise ValueError(f"{path}: truncated header")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic != expected_magic:
        raise ValueError(
            f"{path}: wrong magic 0x{magic:08x}, expected 0x{expected_magic:08x}"
        )
    dims = struct.unpack(f">{n_dims}I", raw[4:header_len])
    return dims, raw[header_len:]


def load_idx(images_path, labels_path) -> Dataset:
    """Read big-endian IDX image/label files; pixels scale to [0, 1] via /255."""
    with open(images_path, "rb") as fh:
        raw = fh.read()
    (count, rows, cols), payload = _read_idx_header(raw, images_path, IDX_IMAGES_MAGIC, 3)
    expected = count * rows * cols
    if len(payload) < expected:
        raise ValueError(f"{images_path}: truncated payload")
    pixels = np.frombuffer(payload[:expected], dtype=np.uint8)
    features = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0

    with open(labels_path, "rb") as fh:
        raw = fh.read()
    (label_count,), payload = _read_idx_header(raw, labels_path, IDX_LABELS_MAGIC, 1)
    if len(payload) < label_count:
        raise ValueError(f"{labels_path}: truncated payload")
    if label_count != count:
        raise ValueError(
            f"count mismatch: {count} images vs {label_count} labels"
        )
    labels = np.frombuffer(payload[:label_count], dtype=np.uint8).astype(np.int64)
    return _make_dataset(features, labels)


def gen_two_moons(n: int, noise_sd: float, seed: int) -> Dataset:
    """Two interleaving half-circles of radius 1 with Gaussian noise.

    Class 0 is the upper half unit circle, class 1 the lower moon shifted
    to interleave; classes are balanced, so n must be even.
    """
    if n < 2 or n % 2 != 0:
        raise ValueError("n must be even and >= 2")
    if noise_sd < 0:
        raise ValueError("noise_sd must be >= 0")
    m = n // 2
    t = np.linspace(0.0, np.pi, m)
    upper = np.column_stack([np.cos(t), np.sin(t)])
    lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    features = np.vstack([upper, lower])
    rng = np.random.Generator(np.random.PCG64(seed))
    features = features + rng.normal(0.0, noise_sd, size=features.shape)
    labels = np.concatenate([np.zeros(m, dtype=np.int64), np.ones(m, dtype=np.int64)])
    return _make_dataset(features, labels, 2)


def gen_blobs(n: int, centers, sd: float, seed: int) -> Dataset:
    """Isotropic Gaussian blobs, one class per center, assigned round-robin."""
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    if n < len(centers):
        raise ValueError("n must be >= number of centers")
    if len(centers) < 2:
        raise ValueError("need at least 2 centers")
    if sd < 0:
        raise ValueError("sd must be >= 0")
    labels = np.arange(n, dtype=np.int64) % len(centers)
    rng = np.random.Generator(np.random.PCG64(seed))
    features = centers[labels] + rng.normal(0.0, sd, size=(n, centers.shape[1]))
    return _make_dataset(features, labels, len(centers))


def zscore(ds: Dataset, stats=None):
    """Per-column standardization; returns (dataset, (mean, sd)) so the same
    training statistics can be applied to held-out data."""
    if stats is None:
        mean = ds.features.mean(axis=0)
        sd = ds.features.std(axis=0)
        sd = np.where(sd == 0.0, 1.0, sd)
    else:
        mean, sd = stats
    out = _make_dataset((ds.features - mean) / sd, ds.labels, ds.num_classes)
    return out, (mean, sd)


@dataclass
class SamplerState:
    """Epoch-shuffled without-replacement sampler; one owner per trial."""

    seed: int
    epoch: int = -1
    cursor: int = 0
    order: np.ndarray | None = None
    _rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._rng = np.random.Generator(np.random.PCG64(self.seed))


def next_batch(state: SamplerState, ds: Dataset, batch_size: int):
    """Draw the next batch of row indices; reshuffles at epoch boundaries and
    drops a final short batch so every step sees exactly ``batch_size`` rows."""
    if not 1 <= batch_size <= ds.n:
        raise ValueError(f"batch size {batch_size} out of range for n={ds.n}")
    if state.order is None or state.cursor + batch_size > ds.n:
        state.order = state._rng.permutation(ds.n)
        state.cursor = 0
        state.epoch += 1
    idx = state.order[state.cursor : state.cursor + batch_size].copy()
    state.cursor += batch_size
    return idx, state


def take(ds: Dataset, indices: np.ndarray):
    """Materialize a minibatch as (features, labels) arrays."""
    return ds.features[indices], ds.labels[indices]
