"""Desk-scale segmentation experiments on synthetic shapes.

A pixel-wise linear scorer over a few fixed local features stands in for a
segmentation network: its logits are linear in the weights, so every loss in
:mod:`segcalib.losses` trains it through the logit gradient alone.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import DomainError, softmax
from .losses import (
    SdcConfig,
    cross_entropy,
    focal_loss,
    label_smoothing_loss,
    margin_loss,
    prepare_margin_targets,
    prepare_sdc_targets,
    sdc_loss,
)
from .metrics import UndefinedMetricError, cece, dsc, ece, friedman_ranks, hd95, pece
from .morphology import MORPH_OPS
from .smoothing import filter2d

log = logging.getLogger(__name__)

SHAPES = ("disk", "ellipse", "annulus")
METRICS = ("dsc", "hd95", "ece", "cece", "pece")
HIGHER_BETTER = (True, False, False, False, False)
FEATURES = ("intensity", "box3", "box5", "grad_x", "grad_y", "bias")


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class SynthSpec:
    image_size: int = 64
    n_images: int = 200
    shape: str = "disk"
    noise_sigma: float = 0.6
    rng_seed: int = 0
    test_fraction: float = 0.25

    def __post_init__(self):
        if self.image_size < 8:
            raise DomainError("image_size must be at least 8")
        if self.n_images < 1:
            raise DomainError("n_images must be positive")
        if self.shape not in SHAPES:
            raise DomainError(f"shape must be one of {SHAPES}")
        if self.noise_sigma < 0:
            raise DomainError("noise_sigma must be nonnegative")


@dataclass(frozen=True)
class LossSpec:
    """A named training loss: ce, sdc, margin, label_smoothing or focal."""
    kind: str = "ce"
    sdc: SdcConfig = field(default_factory=SdcConfig)
    eps: float = 0.1
    gamma: float = 3.0
    name: str = ""

    @property
    def label(self):
        return self.name or self.kind

    def prepare(self, y, num_classes):
        if self.kind == "sdc":
            return prepare_sdc_targets(y, num_classes, self.sdc)
        if self.kind == "margin":
            return prepare_margin_targets(y, num_classes, self.sdc)
        return {}

    def __call__(self, z, y, targets=None):
        if self.kind == "ce":
            return cross_entropy(z, y)
        if self.kind == "sdc":
            return sdc_loss(z, y, self.sdc, targets)
        if self.kind == "margin":
            return margin_loss(z, y, self.sdc, targets)
        if self.kind == "label_smoothing":
            return label_smoothing_loss(z, y, self.eps)
        if self.kind == "focal":
            return focal_loss(z, y, self.gamma)
        raise DomainError(f"unknown loss kind {self.kind!r}")


@dataclass(frozen=True)
class TrainConfig:
    loss: LossSpec = field(default_factory=LossSpec)
    learning_rate: float = 0.5
    epochs: int = 40
    batch_size: int = 16
    rng_seed: int = 0
    halve_lr_midway: bool = True

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise DomainError("learning_rate must be nonnegative")
        if self.epochs < 1:
            raise DomainError("epochs must be at least 1")
        if self.batch_size < 1:
            raise DomainError("batch_size must be positive")


def _draw_shape(rng, n, shape):
    ii, jj = np.indices((n, n), dtype=np.float64)
    cy, cx = rng.uniform(0.35 * n, 0.65 * n, 2)
    r = n / 4.0 * rng.uniform(0.75, 1.25)
    if shape == "disk":
        return (ii - cy) ** 2 + (jj - cx) ** 2 <= r * r
    if shape == "ellipse":
        a, b = r * rng.uniform(1.0, 1.4), r * rng.uniform(0.5, 0.9)
        t = rng.uniform(0, np.pi)
        u = (ii - cy) * np.cos(t) + (jj - cx) * np.sin(t)
        v = -(ii - cy) * np.sin(t) + (jj - cx) * np.cos(t)
        return (u / a) ** 2 + (v / b) ** 2 <= 1.0
    d2 = (ii - cy) ** 2 + (jj - cx) ** 2
    inner = r * rng.uniform(0.4, 0.6)
    return (d2 <= r * r) & (d2 > inner * inner)


def generate_dataset(spec):
    """List of (intensity image, label image) pairs; a pure function of the seed."""
    rng = np.random.default_rng(spec.rng_seed)
    out = []
    for _ in range(spec.n_images):
        label = _draw_shape(rng, spec.image_size, spec.shape).astype(np.int64)
        img = label.astype(np.float64)
        if spec.noise_sigma > 0:
            img = img + rng.normal(0.0, spec.noise_sigma, img.shape)
        out.append((img, label))
    return out


def split_dataset(data, test_fraction=0.25):
    n_test = max(1, int(round(len(data) * test_fraction))) if len(data) > 1 else 0
    return data[: len(data) - n_test], data[len(data) - n_test:]


def features(images):
    """Fixed per-pixel features, shape (B, F, H, W)."""
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    box3 = filter2d(x, np.full((3, 3), 1 / 9))
    box5 = filter2d(x, np.full((5, 5), 1 / 25))
    xp = np.pad(box3, ((0, 0), (1, 1), (1, 1)), mode="edge")
    gx = np.abs(xp[:, 1:-1, 2:] - xp[:, 1:-1, :-2]) / 2
    gy = np.abs(xp[:, 2:, 1:-1] - xp[:, :-2, 1:-1]) / 2
    return np.stack([x, box3, box5, gx, gy, np.ones_like(x)], axis=1)


@dataclass
class ToyModel:
    weights: np.ndarray  # (C, F)

    @classmethod
    def init(cls, num_classes=2, rng_seed=0, n_features=len(FEATURES)):
        rng = np.random.default_rng(rng_seed)
        return cls(rng.normal(0.0, 0.01, (num_classes, n_features)))

    def logits(self, feats):
        return np.einsum("cf,bfhw->bchw", self.weights, feats)

    def predict(self, feats):
        return softmax(self.logits(feats))


def train(model, data, cfg, num_classes=2):
    """Mini-batch gradient descent; returns (trained model, per-epoch mean loss)."""
    imgs = np.stack([d[0] for d in data])
    labels = np.stack([d[1] for d in data])
    feats = features(imgs)
    targets = cfg.loss.prepare(labels, num_classes)
    w = model.weights.copy()
    rng = np.random.default_rng(cfg.rng_seed)
    n = len(data)
    trace = []
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate
        if cfg.halve_lr_midway and epoch >= cfg.epochs // 2:
            lr = lr / 2
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = np.sort(order[start:start + cfg.batch_size])
            z = np.einsum("cf,bfhw->bchw", w, feats[idx])
            t = {k: v[idx] for k, v in targets.items() if isinstance(v, np.ndarray)}
            res = cfg.loss(z, labels[idx], t or None)
            if not np.isfinite(res.value) or not np.all(np.isfinite(res.grad)):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch} ({cfg.loss.label})")
            w = w - lr * np.einsum("bchw,bfhw->cf", res.grad, feats[idx])
            total += res.value * len(idx)
        trace.append(total / n)
        log.debug("%s epoch %d loss %.6f", cfg.loss.label, epoch, trace[-1])
    return ToyModel(w), trace


def evaluate(model, data, bins=10, fp_weight=2.0, threshold=1e-3):
    """DSC / HD95 averaged per image; ECE, CECE, pECE pooled over all pixels."""
    imgs = np.stack([d[0] for d in data])
    labels = np.stack([d[1] for d in data])
    p = model.predict(features(imgs))
    pred = p.argmax(axis=1)
    dscs, hds = [], []
    for b in range(len(data)):
        dscs.append(dsc(pred[b] == 1, labels[b] == 1))
        try:
            hds.append(hd95((pred[b] == 1).astype(np.uint8), (labels[b] == 1).astype(np.uint8)))
        except UndefinedMetricError:
            pass
    return {
        "dsc": float(np.mean(dscs)),
        "hd95": float(np.mean(hds)) if hds else float("nan"),
        "ece": ece(p, labels, bins),
        "cece": cece(p, labels, bins, threshold),
        "pece": pece(p, labels, bins, fp_weight),
    }


def run_one(spec, cfg):
    train_set, test_set = split_dataset(generate_dataset(spec), spec.test_fraction)
    model = ToyModel.init(2, cfg.rng_seed)
    model, trace = train(model, train_set, cfg)
    return evaluate(model, test_set), trace, model


def compare_losses(spec, losses, cfg, seeds=(0,)):
    """Train every loss on identical data and seeds.

    Returns a dict with ``rows`` (loss, seed and the five metrics, sorted by
    loss position then seed), ``median`` per loss, Friedman mean ``ranks`` over
    the medians, and the per-epoch training ``traces``.
    """
    if len(losses) < 2:
        raise DomainError("compare at least two losses")
    rows, traces = [], []
    for seed in seeds:
        s = replace(spec, rng_seed=seed)
        train_set, test_set = split_dataset(generate_dataset(s), s.test_fraction)
        for i, loss in enumerate(losses):
            c = replace(cfg, loss=loss, rng_seed=seed)
            model, trace = train(ToyModel.init(2, seed), train_set, c)
            m = evaluate(model, test_set)
            rows.append({"loss": loss.label, "order": i, "seed": seed, **m})
            traces.extend({"loss": loss.label, "order": i, "seed": seed, "epoch": e, "value": v}
                          for e, v in enumerate(trace))
    rows.sort(key=lambda r: (r["order"], r["seed"]))
    traces.sort(key=lambda r: (r["order"], r["seed"], r["epoch"]))
    med = summarize(rows, [l.label for l in losses])
    table = np.array([[med[l.label][k] for k in METRICS] for l in losses])
    mean_rank, _ = friedman_ranks(np.nan_to_num(table, nan=np.inf), HIGHER_BETTER)
    ranks = {l.label: float(r) for l, r in zip(losses, mean_rank)}
    return {"rows": rows, "median": med, "ranks": ranks, "traces": traces}


def summarize(rows, labels):
    return {
        lab: {k: float(np.median([r[k] for r in rows if r["loss"] == lab])) for k in METRICS}
        for lab in labels
    }


def margin_spec(op, base=None):
    base = SdcConfig() if base is None else base
    return LossSpec("margin", replace(base, morph_op=op, lambda_sdf=0.0), name=op)


def morph_ablation(spec, cfg, seeds=(0,), base=None):
    """Margin loss under each of the eight morphological ops; one row per op."""
    losses = [margin_spec(op, base) for op in MORPH_OPS]
    out = compare_losses(spec, losses, cfg, seeds)
    return [{"op": op, **out["median"][op]} for op in MORPH_OPS]


def lambda_sweep(spec, cfg, lambda_grid, seeds=(0,), base=None):
    """SDC at each lambda_sdf; rows of (lambda_sdf, dsc, hd95, ece, cece, pece)."""
    if len(lambda_grid) == 0:
        raise DomainError("lambda grid is empty")
    base = SdcConfig() if base is None else base
    rows = []
    for seed in seeds:
        s = replace(spec, rng_seed=seed)
        train_set, test_set = split_dataset(generate_dataset(s), s.test_fraction)
        for lam in lambda_grid:
            loss = LossSpec("sdc", replace(base, lambda_sdf=float(lam)))
            model, _ = train(ToyModel.init(2, seed), train_set, replace(cfg, loss=loss, rng_seed=seed))
            rows.append({"lambda_sdf": float(lam), "seed": seed, **evaluate(model, test_set)})
    out = []
    for lam in lambda_grid:
        sel = [r for r in rows if r["lambda_sdf"] == float(lam)]
        out.append({"lambda_sdf": float(lam),
                    **{k: float(np.median([r[k] for r in sel])) for k in METRICS}})
    return out
