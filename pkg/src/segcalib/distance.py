"""Exact Euclidean distance transform and signed distance fields.

The transform is the separable lower-envelope-of-parabolas construction run
over columns and then rows.  Parabola intersections are compared as exact
rationals, so squared distances come out as integers with no rounding.
"""

import math

import numpy as np
from numba import njit

from .grid import DomainError, as_labels, as_mask

NORMALIZATIONS = ("none", "max_abs")


class EmptyMaskError(DomainError):
    """The distance to an empty pixel set is undefined."""


EMPTY = -1


@njit(cache=True)
def _envelope_rows(f):
    """Squared-distance transform along each row of ``f``; EMPTY marks no site."""
    h, n = f.shape
    out = np.empty((h, n), dtype=np.int64)
    v = np.empty(n, dtype=np.int64)
    # znum[k] / zden[k] is the left boundary of parabola v[k]; v[0] extends to -inf
    znum = np.empty(n, dtype=np.int64)
    zden = np.empty(n, dtype=np.int64)
    for i in range(h):
        row = f[i]
        k = -1
        for q in range(n):
            if row[q] == EMPTY:
                continue
            hq = row[q] + q * q
            num = 0
            den = 1
            while k >= 0:
                p = v[k]
                num = hq - (row[p] + p * p)
                den = 2 * (q - p)
                if k > 0 and num * zden[k] <= znum[k] * den:
                    k -= 1
                    continue
                break
            k += 1
            v[k] = q
            znum[k] = num
            zden[k] = den
        if k < 0:
            for q in range(n):
                out[i, q] = EMPTY
            continue
        last = k
        k = 0
        for q in range(n):
            # advance while the next boundary lies strictly left of q
            while k < last and znum[k + 1] < q * zden[k + 1]:
                k += 1
            d = q - v[k]
            out[i, q] = d * d + row[v[k]]
    return out


def squared_edt(mask):
    """Integer squared distance from every pixel to the nearest 1-pixel."""
    mask = as_mask(mask)
    if not mask.any():
        raise EmptyMaskError("distance transform of an empty mask")
    f = np.where(mask == 1, 0, EMPTY).astype(np.int64)
    cols = _envelope_rows(np.ascontiguousarray(f.T))
    return _envelope_rows(np.ascontiguousarray(cols.T))


def edt(mask):
    """Euclidean distance to the nearest foreground pixel (0 on foreground)."""
    return np.sqrt(squared_edt(mask).astype(np.float64))


def _normalize(s, normalization):
    if normalization == "none":
        return s
    if normalization == "max_abs":
        m = np.abs(s).max()
        return s / m if m > 0 else s
    raise DomainError(f"unknown normalization {normalization!r}")


def sdf_from_mask(mask, normalization="none"):
    """Signed distance: negative inside the mask, positive outside.

    Distances are measured between pixel centers to the nearest pixel of the
    opposite set, so pixels touching the other region sit at -1 / +1.  An
    absent class gives +D everywhere and a full one -D, with D the grid diagonal.
    """
    mask = as_mask(mask)
    if normalization not in NORMALIZATIONS:
        raise DomainError(f"unknown normalization {normalization!r}")
    h, w = mask.shape
    if not mask.any():
        s = np.full((h, w), math.hypot(h, w))
    elif mask.all():
        s = np.full((h, w), -math.hypot(h, w))
    else:
        s = edt(mask) - edt(1 - mask)
    return _normalize(s, normalization)


def sdf_from_labels(y, num_classes, normalization="none"):
    """Per-class signed distance fields: (H, W) -> (C, H, W), (B, H, W) -> (B, C, H, W)."""
    y = as_labels(y, num_classes)
    if y.ndim == 3:
        return np.stack([sdf_from_labels(img, num_classes, normalization) for img in y])
    return np.stack([
        sdf_from_mask((y == c).astype(np.uint8), normalization) for c in range(num_classes)
    ])
