"""Dense grid helpers shared across the package.

Arrays follow the (batch, class, height, width) layout, row-major, float64.
Label grids are integer arrays of shape (batch, height, width); most
functions also accept a single (height, width) image.
"""

import numpy as np


class DomainError(ValueError):
    """Input outside the domain an operation is defined on."""


def as_logits(z):
    z = np.asarray(z, dtype=np.float64)
    if z.ndim < 3:
        raise DomainError(f"logits need a class axis, got shape {z.shape}")
    if z.shape[-3] < 2:
        raise DomainError("need at least two classes")
    if not np.all(np.isfinite(z)):
        raise DomainError("logits contain non-finite values")
    return z


def as_labels(y, num_classes):
    y = np.asarray(y)
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise DomainError("labels must be integers")
        y = y.astype(np.int64)
    if num_classes < 1:
        raise DomainError("num_classes must be positive")
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise DomainError(f"labels must lie in [0, {num_classes})")
    return y


def softmax(z):
    """Softmax over the class axis (axis -3), max-subtracted for stability."""
    z = as_logits(z)
    e = np.exp(z - z.max(axis=-3, keepdims=True))
    return e / e.sum(axis=-3, keepdims=True)


def log_softmax(z):
    z = as_logits(z)
    shifted = z - z.max(axis=-3, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-3, keepdims=True))


def one_hot(y, num_classes):
    """(B, H, W) labels -> (B, C, H, W) one-hot; (H, W) -> (C, H, W)."""
    y = as_labels(y, num_classes)
    out = np.eye(num_classes, dtype=np.float64)[y]
    return np.moveaxis(out, -1, -3)


def class_slice(y, c, num_classes):
    """Binary mask (uint8) that is 1 exactly where ``y == c``."""
    y = as_labels(y, num_classes)
    if not 0 <= c < num_classes:
        raise DomainError(f"class index {c} outside [0, {num_classes})")
    return (y == c).astype(np.uint8)


def as_mask(a):
    a = np.asarray(a)
    if a.ndim != 2:
        raise DomainError(f"binary masks are 2D, got shape {a.shape}")
    if not np.all((a == 0) | (a == 1)):
        raise DomainError("binary mask entries must be 0 or 1")
    return a.astype(np.uint8)
