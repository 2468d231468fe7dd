"""Segmentation losses with analytic gradients with respect to the logits.

Every loss takes logits ``z`` of shape (B, C, H, W) (a single (C, H, W) image
is also accepted) and returns a :class:`LossResult` whose ``grad`` has the
shape of ``z``.  Means are taken over pixels, so gradients carry a 1/N factor.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .distance import NORMALIZATIONS, sdf_from_labels
from .grid import DomainError, as_labels, as_logits, log_softmax, one_hot, softmax
from .morphology import MORPH_OPS, make_se, morph_labels
from .smoothing import SmoothingKernel, morph_smooth_targets, smooth_targets

P_CLIP = 1e-7
NORMS = ("l1", "l2")


@dataclass(frozen=True)
class SdcConfig:
    alpha: float = 0.1
    lambda_sdf: float = 0.1
    conf_norm: str = "l1"
    sdf_norm: str = "l1"
    # slope of the distance-to-probability sigmoid, p = sigmoid(-sdf_scale * s)
    sdf_scale: float = 1.0
    sdf_clamp: float = 3.0
    sdf_normalization: str = "none"
    kernel: SmoothingKernel = field(default_factory=SmoothingKernel)
    morph_op: Optional[str] = None
    se_shape: str = "square"
    se_size: int = 3
    ce_on_morphed: bool = False

    def __post_init__(self):
        if self.alpha < 0 or self.lambda_sdf < 0:
            raise DomainError("loss weights must be nonnegative")
        if self.conf_norm not in NORMS or self.sdf_norm not in NORMS:
            raise DomainError(f"norms must be one of {NORMS}")
        if not self.sdf_scale > 0:
            raise DomainError("sdf_scale must be positive")
        if not self.sdf_clamp > 0:
            raise DomainError("sdf_clamp must be positive")
        if self.sdf_normalization not in NORMALIZATIONS:
            raise DomainError(f"sdf_normalization must be one of {NORMALIZATIONS}")
        if self.morph_op is not None and self.morph_op not in MORPH_OPS:
            raise DomainError(f"unknown morphological op {self.morph_op!r}")

    @property
    def se(self):
        return make_se(self.se_shape, self.se_size)


@dataclass
class LossResult:
    value: float
    grad: np.ndarray
    components: dict = field(default_factory=dict)


def _batched(z):
    z = as_logits(z)
    if z.ndim == 3:
        return z[None], True
    if z.ndim != 4:
        raise DomainError(f"logits must be (B, C, H, W), got {z.shape}")
    return z, False


def _unbatch(res, squeeze):
    if squeeze:
        res.grad = res.grad[0]
    return res


def _batched_labels(y, z):
    y = as_labels(y, z.shape[1])
    if y.ndim == 2:
        y = y[None]
    if y.shape != (z.shape[0],) + z.shape[2:]:
        raise DomainError(f"labels {y.shape} do not match logits {z.shape}")
    return y


def _batched_field(t, z, what="target"):
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 3:
        t = t[None]
    if t.shape != z.shape:
        raise DomainError(f"{what} {t.shape} does not match logits {z.shape}")
    return t


def _softmax_backward(p, g):
    """Pull a gradient w.r.t. probabilities back through the softmax."""
    return p * (g - (g * p).sum(axis=1, keepdims=True))


def cross_entropy(z, target):
    """Mean per-pixel cross-entropy against hard labels or a soft target field."""
    z, squeeze = _batched(z)
    n = z.shape[0] * z.shape[2] * z.shape[3]
    target = np.asarray(target)
    if target.shape == z.shape or (squeeze and target.shape == z.shape[1:]):
        t = _batched_field(target, z)
    else:
        t = one_hot(_batched_labels(target, z), z.shape[1])
    logp = log_softmax(z)
    value = float(-(t * logp).sum() / n)
    grad = (np.exp(logp) - t) / n
    return _unbatch(LossResult(value, grad, {"ce": value}), squeeze)


def conf_term(z, target, norm="l1"):
    """Mean over pixels and classes of |p - t| (l1) or (p - t)^2 (l2)."""
    z, squeeze = _batched(z)
    t = _batched_field(target, z)
    p = softmax(z)
    d = p - t
    m = d.size
    if norm == "l1":
        value = float(np.abs(d).sum() / m)
        gp = np.sign(d) / m
    elif norm == "l2":
        value = float((d * d).sum() / m)
        gp = 2.0 * d / m
    else:
        raise DomainError(f"unknown norm {norm!r}")
    grad = _softmax_backward(p, gp)
    return _unbatch(LossResult(value, grad, {"conf": value}), squeeze)


def predicted_sdf(p, scale, clamp):
    """Clamped inverse of p = sigmoid(-scale * s); also returns the unclamped value."""
    pc = np.clip(p, P_CLIP, 1.0 - P_CLIP)
    raw = -(np.log(pc) - np.log1p(-pc)) / scale
    return np.clip(raw, -clamp, clamp), raw


def sdf_term(z, s_star, cfg=None):
    """Distance between predicted and reference signed distances, foreground classes only.

    ``s_star`` holds one channel per class (background included, ignored here)
    and must already use the normalization in ``cfg``.
    """
    cfg = SdcConfig() if cfg is None else cfg
    z, squeeze = _batched(z)
    s_star = _batched_field(s_star, z, "signed distance field")
    p = softmax(z)
    pf = p[:, 1:]
    s_hat, raw = predicted_sdf(pf, cfg.sdf_scale, cfg.sdf_clamp)
    ref = np.clip(s_star[:, 1:], -cfg.sdf_clamp, cfg.sdf_clamp)
    d = s_hat - ref
    m = d.size
    if cfg.sdf_norm == "l1":
        value = float(np.abs(d).sum() / m)
        gs = np.sign(d) / m
    else:
        value = float((d * d).sum() / m)
        gs = 2.0 * d / m
    live = (np.abs(raw) < cfg.sdf_clamp) & (pf > P_CLIP) & (pf < 1.0 - P_CLIP)
    gs = np.where(live, gs, 0.0)
    # d s_hat_c / d z_j = -(delta_cj - p_j) / (scale * (1 - p_c))
    u = np.zeros_like(p)
    u[:, 1:] = -gs / (cfg.sdf_scale * (1.0 - np.where(live, pf, 0.0)))
    grad = u - p * u.sum(axis=1, keepdims=True)
    return _unbatch(LossResult(value, grad, {"sdf": value}), squeeze)


def prepare_sdc_targets(y, num_classes, cfg=None):
    """Label-only quantities of the SDC loss, computed once per batch and reusable."""
    cfg = SdcConfig() if cfg is None else cfg
    y = as_labels(y, num_classes)
    if y.ndim == 2:
        y = y[None]
    return {
        "soft": smooth_targets(one_hot(y, num_classes), cfg.kernel),
        "s_star": sdf_from_labels(y, num_classes, cfg.sdf_normalization),
    }


def _combine(parts, weights):
    value = 0.0
    grad = None
    comps = {}
    for name, w, res in zip(("ce", "conf", "sdf"), weights, parts):
        if res is None:
            comps[name] = 0.0
            continue
        comps[name] = res.value
        value += w * res.value
        grad = w * res.grad if grad is None else grad + w * res.grad
    return LossResult(value, grad, comps)


def sdc_loss(z, y, cfg=None, targets=None):
    """Cross-entropy + alpha * local calibration + lambda_sdf * SDF penalty."""
    cfg = SdcConfig() if cfg is None else cfg
    z, squeeze = _batched(z)
    y = _batched_labels(y, z)
    if targets is None:
        targets = prepare_sdc_targets(y, z.shape[1], cfg)
    ce = cross_entropy(z, y)
    conf = conf_term(z, targets["soft"], cfg.conf_norm) if cfg.alpha > 0 else None
    sdf = sdf_term(z, targets["s_star"], cfg) if cfg.lambda_sdf > 0 else None
    res = _combine((ce, conf, sdf), (1.0, cfg.alpha, cfg.lambda_sdf))
    return _unbatch(res, squeeze)


def prepare_margin_targets(y, num_classes, cfg):
    if cfg.morph_op is None:
        raise DomainError("margin loss needs cfg.morph_op")
    y = as_labels(y, num_classes)
    if y.ndim == 2:
        y = y[None]
    soft, n_fixed = morph_smooth_targets(y, num_classes, cfg.morph_op, cfg.se, cfg.kernel)
    ce_target = morph_labels(y, cfg.morph_op, cfg.se, num_classes) if cfg.ce_on_morphed else y
    return {"soft": soft, "ce_target": ce_target, "n_fixed": n_fixed}


def margin_loss(z, y, cfg, targets=None):
    """Cross-entropy + alpha * |p - smoothed morphed target|.

    The cross-entropy uses the original labels unless ``cfg.ce_on_morphed``.
    """
    z, squeeze = _batched(z)
    y = _batched_labels(y, z)
    if targets is None:
        targets = prepare_margin_targets(y, z.shape[1], cfg)
    ce = cross_entropy(z, targets["ce_target"])
    conf = conf_term(z, targets["soft"], cfg.conf_norm) if cfg.alpha > 0 else None
    res = _combine((ce, conf, None), (1.0, cfg.alpha, 0.0))
    return _unbatch(res, squeeze)


def label_smoothing_loss(z, y, eps=0.1):
    if not 0.0 <= eps < 1.0:
        raise DomainError(f"label smoothing eps must lie in [0, 1), got {eps}")
    z, squeeze = _batched(z)
    y = _batched_labels(y, z)
    c = z.shape[1]
    t = one_hot(y, c)
    if eps > 0:
        t = (1.0 - eps) * t + eps / c
    return _unbatch(cross_entropy(z, t), squeeze)


def focal_loss(z, y, gamma=3.0):
    """Mean of -(1 - p_true)^gamma * log p_true."""
    if gamma < 0:
        raise DomainError(f"focal gamma must be nonnegative, got {gamma}")
    z, squeeze = _batched(z)
    y = _batched_labels(y, z)
    n = y.size
    t = one_hot(y, z.shape[1])
    logp = log_softmax(z)
    p = np.exp(logp)
    lpt = (logp * t).sum(axis=1, keepdims=True)
    pt = np.exp(lpt)
    q = 1.0 - pt
    value = float(-((q ** gamma) * lpt).sum() / n)
    # pt * d/dpt of the per-pixel loss; the first term vanishes as q -> 0
    safe_q = np.where(q > 0, q, 1.0)
    first = np.where(q > 0, gamma * pt * lpt * safe_q ** (gamma - 1.0), 0.0) if gamma > 0 else 0.0
    a = first - q ** gamma
    grad = a * (t - p) / n
    return _unbatch(LossResult(value, grad, {"ce": value}), squeeze)


def baseline_loss(z, y, kind, eps=0.1, gamma=3.0):
    if kind == "label_smoothing":
        return label_smoothing_loss(z, y, eps)
    if kind == "focal":
        return focal_loss(z, y, gamma)
    raise DomainError(f"unknown baseline {kind!r}")
