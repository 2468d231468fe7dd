"""Neighborhood-smoothed soft targets for the local calibration terms."""

from dataclasses import dataclass

import numpy as np

from .grid import DomainError, as_labels, one_hot
from .morphology import morph_class_stack, square


@dataclass(frozen=True)
class SmoothingKernel:
    kind: str = "mean"
    size: int = 3
    sigma: float = 1.0

    @property
    def weights(self):
        return make_kernel(self.kind, self.size, self.sigma)


def make_kernel(kind="mean", size=3, sigma=1.0):
    """Normalized k x k weights for a mean or sampled gaussian filter."""
    if size < 1 or size % 2 == 0:
        raise DomainError(f"kernel size must be odd and positive, got {size}")
    if kind == "mean":
        return np.full((size, size), 1.0 / (size * size))
    if kind == "gaussian":
        if not sigma > 0:
            raise DomainError(f"gaussian sigma must be positive, got {sigma}")
        r = np.arange(size) - size // 2
        g = np.exp(-(r[:, None] ** 2 + r[None, :] ** 2) / (2.0 * sigma * sigma))
        return g / g.sum()
    raise DomainError(f"unknown kernel kind {kind!r}")


def _kernel_weights(kernel):
    if isinstance(kernel, SmoothingKernel):
        return kernel.weights
    w = np.asarray(kernel, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] % 2 == 0:
        raise DomainError("kernel weights must be an odd square array")
    return w


def filter2d(x, weights):
    """Correlate the last two axes with ``weights`` under replicate padding."""
    k = weights.shape[0]
    r = k // 2
    h, w = x.shape[-2:]
    pad = [(0, 0)] * (x.ndim - 2) + [(r, r), (r, r)]
    xp = np.pad(x, pad, mode="edge")
    out = np.zeros(x.shape, dtype=np.float64)
    for i in range(k):
        for j in range(k):
            if weights[i, j] != 0.0:
                out += weights[i, j] * xp[..., i:i + h, j:j + w]
    return out


def smooth_targets(onehot, kernel=None):
    """Smooth each class plane of a (.., C, H, W) distribution field."""
    kernel = SmoothingKernel() if kernel is None else kernel
    return filter2d(np.asarray(onehot, dtype=np.float64), _kernel_weights(kernel))


def morph_smooth_targets(y, num_classes, op="identity", se=None, kernel=None):
    """Morph the class masks, renormalize to a distribution, then smooth.

    Returns ``(targets, n_fixed)`` where ``n_fixed`` counts pixels whose morphed
    class stack was not a partition: overlaps are divided by their sum and
    all-zero pixels get the uniform distribution.
    """
    y = as_labels(y, num_classes)
    se = square(3) if se is None else se
    batched = y.ndim == 3
    imgs = y if batched else y[None]
    stacks = np.stack([morph_class_stack(img, op, se, num_classes) for img in imgs])
    stacks = stacks.astype(np.float64)
    total = stacks.sum(axis=1, keepdims=True)
    n_fixed = int(np.count_nonzero(total != 1.0))
    empty = total == 0.0
    stacks = np.where(empty, 1.0 / num_classes, stacks / np.where(empty, 1.0, total))
    out = smooth_targets(stacks, kernel)
    return (out if batched else out[0]), n_fixed


def smoothed_one_hot(y, num_classes, kernel=None):
    return smooth_targets(one_hot(y, num_classes), kernel)
