"""Differentiable objectives the optimizers run against.

Three families are provided: quadratics with a known Hessian, a
Gaussian-basin landscape with one sharp and one flat minimum, and a small
MLP classifier with hand-written backpropagation. A central-difference
gradient oracle (:func:`finite_diff_grad`) is included for checking the
analytic gradients.

Batches are ``(features, labels)`` array pairs for the MLP and are
ignored by the analytic objectives (pass ``None``).
"""

from __future__ import annotations

import numpy as np

from .vectors import LayerPartition, as_vector

__all__ = [
    "Objective",
    "QuadraticObjective",
    "BasinLandscape",
    "MlpClassifier",
    "finite_diff_grad",
    "gradient_max_rel_error",
]


class Objective:
    """Scalar objective over a flat parameter vector.

    Subclasses set ``dim`` and ``partition`` and implement ``loss`` and
    ``loss_and_grad``. The scalar returned by ``loss_and_grad`` is
    bit-identical to ``loss`` on the same inputs.
    """

    dim: int
    partition: LayerPartition

    def loss(self, w: np.ndarray, batch=None) -> float:
        raise NotImplementedError

    def loss_and_grad(self, w: np.ndarray, batch=None) -> tuple[float, np.ndarray]:
        raise NotImplementedError

    def _check_dim(self, w: np.ndarray) -> None:
        if len(w) != self.dim:
            raise ValueError(f"parameter length {len(w)} != objective dim {self.dim}")


class QuadraticObjective(Objective):
    """L(w) = 0.5 (w - c)^T H (w - c) with a symmetric PSD matrix H.

    The gradient is H (w - c) and the Hessian is H exactly, which makes
    this the closed-form oracle for every second-order identity in the
    test suite.
    """

    def __init__(self, hessian, center=None, partition: LayerPartition | None = None):
        h = np.array(hessian, dtype=np.float64)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValueError(f"hessian must be square, got shape {h.shape}")
        scale = max(1.0, float(np.abs(h).max()))
        if np.abs(h - h.T).max() > 1e-12 * scale:
            raise ValueError("hessian must be symmetric")
        self.hessian = h
        self.dim = h.shape[0]
        if center is None:
            self.center = np.zeros(self.dim)
        else:
            self.center = as_vector(center, "center")
            if len(self.center) != self.dim:
                raise ValueError("center length does not match hessian")
        self.partition = partition or LayerPartition.single(self.dim)
        self.partition.check_length(self.dim)

    @classmethod
    def diagonal(cls, diag, center=None, partition=None) -> "QuadraticObjective":
        return cls(np.diag(np.asarray(diag, dtype=np.float64)), center, partition)

    @classmethod
    def random_psd(cls, dim: int, seed: int, partition=None) -> "QuadraticObjective":
        """Seeded random H = A^T A / dim, strictly PSD with high probability."""
        rng = np.random.Generator(np.random.PCG64(seed))
        a = rng.standard_normal((dim, dim))
        return cls(a.T @ a / dim, partition=partition)

    def loss(self, w, batch=None) -> float:
        self._check_dim(w)
        d = w - self.center
        return float(0.5 * np.dot(d, self.hessian @ d))

    def loss_and_grad(self, w, batch=None):
        self._check_dim(w)
        d = w - self.center
        hd = self.hessian @ d
        return float(0.5 * np.dot(d, hd)), hd

    def hessian_vector(self, v: np.ndarray) -> np.ndarray:
        """Return H v exactly."""
        if len(v) != self.dim:
            raise ValueError(f"vector length {len(v)} != objective dim {self.dim}")
        return self.hessian @ v


class BasinLandscape(Objective):
    """Sum of negative Gaussian wells on top of a constant offset.

    L(w) = offset - sum_i depth_i * exp(-||w - c_i||^2 / (2 width_i^2)).
    The default instance has one sharp well and one flat well of equal
    depth, so optimizers can be compared on which minimum they select.
    """

    def __init__(self, centers, depths, widths, offset: float = 1.0):
        self.centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
        self.depths = np.asarray(depths, dtype=np.float64)
        self.widths = np.asarray(widths, dtype=np.float64)
        if not (len(self.centers) == len(self.depths) == len(self.widths)):
            raise ValueError("centers, depths, widths must have equal length")
        if np.any(self.depths <= 0) or np.any(self.widths <= 0):
            raise ValueError("depths and widths must be positive")
        self.offset = float(offset)
        self.dim = self.centers.shape[1]
        self.partition = LayerPartition.single(self.dim)

    @classmethod
    def two_basin_default(cls) -> "BasinLandscape":
        """2-D instance: sharp well at (-1, 0), flat well at (+1, 0)."""
        return cls(
            centers=[(-1.0, 0.0), (1.0, 0.0)],
            depths=(1.0, 1.0),
            widths=(0.05, 0.5),
            offset=1.0,
        )

    @property
    def flat_center(self) -> np.ndarray:
        return self.centers[int(np.argmax(self.widths))]

    @property
    def sharp_center(self) -> np.ndarray:
        return self.centers[int(np.argmin(self.widths))]

    def _wells(self, w):
        d = w[None, :] - self.centers
        sq = np.sum(d * d, axis=1)
        return d, self.depths * np.exp(-sq / (2.0 * self.widths**2))

    def loss(self, w, batch=None) -> float:
        self._check_dim(w)
        _, wells = self._wells(w)
        return float(self.offset - wells.sum())

    def loss_and_grad(self, w, batch=None):
        self._check_dim(w)
        d, wells = self._wells(w)
        grad = (wells / self.widths**2) @ d
        return float(self.offset - wells.sum()), grad


def _glorot_limit(fan_in: int, fan_out: int) -> float:
    return np.sqrt(6.0 / (fan_in + fan_out))


class MlpClassifier(Objective):
    """Fully connected classifier with softmax cross-entropy loss.

    Parameters live in one flat vector; the partition has one range per
    weight matrix and one per bias vector. Activation is tanh or relu
    (relu uses subgradient 0 at 0). The batch loss is the mean of the
    per-sample cross-entropies.
    """

    def __init__(self, layer_sizes, activation: str = "tanh"):
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError("layer_sizes needs >= 2 positive entries")
        if sizes[-1] < 2:
            raise ValueError("output layer needs >= 2 classes")
        if activation not in ("tanh", "relu"):
            raise ValueError(f"unknown activation: {activation!r}")
        self.layer_sizes = sizes
        self.activation = activation
        self.in_dim = sizes[0]
        self.num_classes = sizes[-1]
        block_sizes = []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            block_sizes.append(n_in * n_out)
            block_sizes.append(n_out)
        self.partition = LayerPartition.from_sizes(block_sizes)
        self.dim = self.partition.length

    def init_params(self, seed: int) -> np.ndarray:
        """Seeded uniform Glorot weights, zero biases; reproducible per seed."""
        rng = np.random.Generator(np.random.PCG64(seed))
        w = np.zeros(self.dim)
        sl = iter(self.partition.slices())
        for n_in, n_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            lim = _glorot_limit(n_in, n_out)
            w[next(sl)] = rng.uniform(-lim, lim, size=n_in * n_out)
            next(sl)  # bias block stays zero
        return w

    def _unpack(self, w):
        mats = []
        sl = self.partition.slices()
        for i, (n_in, n_out) in enumerate(zip(self.layer_sizes[:-1], self.layer_sizes[1:])):
            wm = w[sl[2 * i]].reshape(n_in, n_out)
            b = w[sl[2 * i + 1]]
            mats.append((wm, b))
        return mats

    def _check_batch(self, batch):
        if batch is None:
            raise ValueError("MlpClassifier requires a (features, labels) batch")
        x, y = batch
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(
                f"batch features must be (B, {self.in_dim}), got {x.shape}"
            )
        if len(y) != x.shape[0]:
            raise ValueError("features and labels lengths differ")
        if y.min() < 0 or y.max() >= self.num_classes:
            raise ValueError("label out of range")
        return x, y

    def _forward(self, w, x):
        """Returns (pre-activations z, activations a, logits)."""
        mats = self._unpack(w)
        a = x
        zs, acts = [], [a]
        for i, (wm, b) in enumerate(mats):
            z = a @ wm + b
            zs.append(z)
            if i < len(mats) - 1:
                a = np.tanh(z) if self.activation == "tanh" else np.maximum(z, 0.0)
                acts.append(a)
        return zs, acts, zs[-1]

    @staticmethod
    def _log_softmax(logits):
        shifted = logits - logits.max(axis=1, keepdims=True)
        return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    @staticmethod
    def _mean_cross_entropy(logp, y):
        return float(-logp[np.arange(len(y)), y].mean())

    def loss(self, w, batch=None) -> float:
        self._check_dim(w)
        x, y = self._check_batch(batch)
        _, _, logits = self._forward(w, x)
        return self._mean_cross_entropy(self._log_softmax(logits), y)

    def loss_and_grad(self, w, batch=None):
        self._check_dim(w)
        x, y = self._check_batch(batch)
        zs, acts, logits = self._forward(w, x)
        logp = self._log_softmax(logits)
        loss = self._mean_cross_entropy(logp, y)

        batch_size = x.shape[0]
        delta = np.exp(logp)
        delta[np.arange(batch_size), y] -= 1.0
        delta /= batch_size

        mats = self._unpack(w)
        grad = np.zeros(self.dim)
        sl = self.partition.slices()
        for i in range(len(mats) - 1, -1, -1):
            wm, _ = mats[i]
            grad[sl[2 * i]] = (acts[i].T @ delta).ravel()
            grad[sl[2 * i + 1]] = delta.sum(axis=0)
            if i > 0:
                da = delta @ wm.T
                if self.activation == "tanh":
                    delta = da * (1.0 - acts[i] ** 2)
                else:
                    delta = da * (zs[i - 1] > 0.0)
        return loss, grad

    def predict_proba(self, w, x) -> np.ndarray:
        """Per-row class probabilities; each row sums to 1."""
        self._check_dim(w)
        x = np.asarray(x, dtype=np.float64)
        _, _, logits = self._forward(w, x)
        return np.exp(self._log_softmax(logits))

    def accuracy(self, w, x, y) -> float:
        self._check_dim(w)
        x = np.asarray(x, dtype=np.float64)
        _, _, logits = self._forward(w, x)
        return float((logits.argmax(axis=1) == np.asarray(y)).mean())


def finite_diff_grad(obj: Objective, w: np.ndarray, batch=None, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient oracle: (L(w + h e_j) - L(w - h e_j)) / 2h."""
    if h <= 0:
        raise ValueError("h must be > 0")
    grad = np.zeros(len(w))
    for j in range(len(w)):
        wp = w.copy()
        wp[j] = w[j] + h
        wm = w.copy()
        wm[j] = w[j] - h
        grad[j] = (obj.loss(wp, batch) - obj.loss(wm, batch)) / (2.0 * h)
    return grad


def gradient_max_rel_error(
    obj: Objective, w: np.ndarray, batch=None, h: float = 1e-6, floor: float = 1e-6
) -> float:
    """Max per-coordinate relative error between analytic and central-difference
    gradients; ``floor`` guards coordinates whose magnitude is below noise scale."""
    _, analytic = obj.loss_and_grad(w, batch)
    numeric = finite_diff_grad(obj, w, batch, h)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))
