"""Binary morphology with flat, odd-sized structuring elements.

Pixels outside the grid count as background for both erosion and dilation,
so borders erode and dilation never wraps.
"""

import numpy as np

from .grid import DomainError, as_labels, as_mask, class_slice

MORPH_OPS = (
    "identity",
    "erosion",
    "dilation",
    "opening",
    "closing",
    "gradient",
    "internal_boundary",
    "external_boundary",
)


def square(k=3):
    return structuring_element(np.ones((k, k), dtype=np.uint8))


def cross(k=3):
    se = np.zeros((k, k), dtype=np.uint8)
    se[k // 2, :] = 1
    se[:, k // 2] = 1
    return structuring_element(se)


def make_se(shape="square", size=3):
    if shape == "square":
        return square(size)
    if shape == "cross":
        return cross(size)
    raise DomainError(f"unknown structuring element shape {shape!r}")


def structuring_element(se):
    """Validate a k x k binary structuring element with its origin at the center."""
    se = np.asarray(se)
    if se.ndim != 2 or se.shape[0] != se.shape[1]:
        raise DomainError(f"structuring element must be square, got {se.shape}")
    k = se.shape[0]
    if k < 1 or k % 2 == 0:
        raise DomainError(f"structuring element size must be odd, got {k}")
    if not np.all((se == 0) | (se == 1)):
        raise DomainError("structuring element entries must be 0 or 1")
    if se[k // 2, k // 2] != 1:
        raise DomainError("structuring element origin must be set")
    return se.astype(np.uint8)


def reflect(se):
    return se[::-1, ::-1].copy()


def _offsets(se):
    r = se.shape[0] // 2
    return [(i - r, j - r) for i, j in zip(*np.nonzero(se))]


def dilate(a, se=None):
    """Union of translates of ``a`` by every SE offset."""
    a = as_mask(a)
    se = square(3) if se is None else structuring_element(se)
    r = se.shape[0] // 2
    h, w = a.shape
    padded = np.pad(a, r)
    out = np.zeros_like(a)
    for di, dj in _offsets(se):
        # out[p] |= a[p - d]
        out |= padded[r - di:r - di + h, r - dj:r - dj + w]
    return out


def erode(a, se=None):
    """Pixels where the SE, placed at that pixel, fits inside the foreground."""
    a = as_mask(a)
    se = square(3) if se is None else structuring_element(se)
    r = se.shape[0] // 2
    h, w = a.shape
    padded = np.pad(a, r)
    out = np.ones_like(a)
    for di, dj in _offsets(se):
        out &= padded[r + di:r + di + h, r + dj:r + dj + w]
    return out


def apply_morph(a, op, se=None):
    a = as_mask(a)
    se = square(3) if se is None else structuring_element(se)
    if op == "identity":
        return a.copy()
    if op == "erosion":
        return erode(a, se)
    if op == "dilation":
        return dilate(a, se)
    if op == "opening":
        return dilate(erode(a, se), se)
    if op == "closing":
        return erode(dilate(a, se), se)
    if op == "gradient":
        return dilate(a, se) - erode(a, se)
    if op == "internal_boundary":
        return a - erode(a, se)
    if op == "external_boundary":
        return dilate(a, se) - a
    raise DomainError(f"unknown morphological op {op!r}; valid: {', '.join(MORPH_OPS)}")


def morph_class_stack(y, op, se, num_classes):
    """Per-class morphed masks, shape (C, H, W) for a single (H, W) label image.

    Foreground classes are morphed independently; the background channel is the
    complement of their union.  Overlaps are left in place (the stack need not
    be a partition).
    """
    y = as_labels(y, num_classes)
    stack = np.zeros((num_classes,) + y.shape, dtype=np.uint8)
    for c in range(1, num_classes):
        stack[c] = apply_morph(class_slice(y, c, num_classes), op, se)
    stack[0] = 1 - stack[1:].max(axis=0) if num_classes > 1 else 1
    return stack


def morph_labels(y, op, se, num_classes):
    """Reassemble morphed class masks into a label image.

    A pixel claimed by several foreground classes goes to the lowest index;
    unclaimed pixels are background.  Accepts (H, W) or (B, H, W).
    """
    y = as_labels(y, num_classes)
    if y.ndim == 3:
        return np.stack([morph_labels(img, op, se, num_classes) for img in y])
    stack = morph_class_stack(y, op, se, num_classes)
    out = np.zeros(y.shape, dtype=np.int64)
    for c in range(num_classes - 1, 0, -1):
        out[stack[c] == 1] = c
    return out
