"""Overlap, boundary and calibration metrics for segmentation outputs.

Probability fields are (B, C, H, W) or (C, H, W); label grids drop the class
axis.  Calibration bins are the half-open intervals (lo, hi] over
``linspace(0, 1, bins + 1)``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .distance import squared_edt
from .grid import DomainError, as_labels, as_mask
from .morphology import apply_morph, square

BIN_COLUMNS = ("bin_lo", "bin_hi", "count", "mean_conf", "mean_acc", "fp_count", "fp_conf")


class UndefinedMetricError(DomainError):
    """The metric has no value for this input (e.g. an empty mask)."""


@dataclass
class CalibrationBins:
    edges: np.ndarray
    count: np.ndarray
    mean_conf: np.ndarray
    mean_acc: np.ndarray
    fp_count: np.ndarray
    fp_conf: np.ndarray

    def rows(self):
        return [
            dict(zip(BIN_COLUMNS, (
                float(self.edges[b]), float(self.edges[b + 1]), int(self.count[b]),
                float(self.mean_conf[b]), float(self.mean_acc[b]),
                int(self.fp_count[b]), float(self.fp_conf[b]),
            )))
            for b in range(len(self.count))
        ]


def bin_index(conf, bins, zero_in_first=True):
    """Bin of each confidence; 0 lands in bin 0 or, if not ``zero_in_first``, at -1."""
    if bins < 1:
        raise DomainError("need at least one bin")
    edges = np.linspace(0.0, 1.0, bins + 1)
    idx = np.searchsorted(edges, conf, side="left") - 1
    if zero_in_first:
        idx = np.maximum(idx, 0)
    return idx, edges


def calibration_bins(conf, hit, bins=10, zero_in_first=True):
    """Per-bin statistics; pixels with ``hit == 0`` are the false positives."""
    conf = np.asarray(conf, dtype=np.float64).ravel()
    hit = np.asarray(hit, dtype=np.float64).ravel()
    idx, edges = bin_index(conf, bins, zero_in_first)
    keep = idx >= 0
    idx, conf, hit = idx[keep], conf[keep], hit[keep]
    miss = hit == 0
    count = np.bincount(idx, minlength=bins)
    sum_conf = np.bincount(idx, weights=conf, minlength=bins)
    sum_hit = np.bincount(idx, weights=hit, minlength=bins)
    fp_count = np.bincount(idx[miss], minlength=bins)
    fp_sum = np.bincount(idx[miss], weights=conf[miss], minlength=bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_conf = np.where(count > 0, sum_conf / np.maximum(count, 1), 0.0)
        mean_acc = np.where(count > 0, sum_hit / np.maximum(count, 1), 0.0)
        fp_conf = np.where(fp_count > 0, fp_sum / np.maximum(fp_count, 1), 0.0)
    return CalibrationBins(edges, count, mean_conf, mean_acc, fp_count, fp_conf)


def binned_ece(conf, hit, bins=10):
    cb = calibration_bins(conf, hit, bins)
    n = cb.count.sum()
    if n == 0:
        raise UndefinedMetricError("no samples to bin")
    return float(np.sum(cb.count / n * np.abs(cb.mean_conf - cb.mean_acc))), cb


def _split(p, y):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim == 3:
        p = p[None]
    y = as_labels(y, p.shape[1])
    if y.ndim == 2:
        y = y[None]
    if y.shape != (p.shape[0],) + p.shape[2:]:
        raise DomainError(f"labels {y.shape} do not match probabilities {p.shape}")
    return p, y


def ece_bins(p, y, bins=10):
    p, y = _split(p, y)
    fg = y != 0
    if not fg.any():
        raise UndefinedMetricError("ECE needs at least one foreground pixel")
    conf = p.max(axis=1)[fg]
    correct = (p.argmax(axis=1) == y)[fg]
    return binned_ece(conf, correct, bins)


def ece(p, y, bins=10):
    """ECE over pixels whose true class is foreground, using max-probability confidence."""
    return ece_bins(p, y, bins)[0]


def cece(p, y, bins=10, threshold=1e-3):
    """Mean over all classes of the per-class ECE of p_c on pixels with p_c > threshold."""
    if threshold < 0:
        raise DomainError("threshold must be nonnegative")
    p, y = _split(p, y)
    vals = []
    for c in range(p.shape[1]):
        pc = p[:, c]
        sel = pc > threshold
        if not sel.any():
            vals.append(0.0)
            continue
        vals.append(binned_ece(pc[sel], (y == c)[sel], bins)[0])
    return float(np.mean(vals))


def pece_binary(conf, y01, bins=10, fp_weight=2.0):
    """Pixel-wise ECE with a false-positive confidence offset per bin.

    ``total`` counts every pixel; pixels of confidence exactly 0 fall in no bin.
    Returns ``(value, CalibrationBins)``.
    """
    conf = np.asarray(conf, dtype=np.float64)
    y01 = np.asarray(y01)
    if conf.shape != y01.shape:
        raise DomainError("confidence and label grids differ in shape")
    if conf.size and (conf.min() < 0 or conf.max() > 1):
        raise DomainError("confidences must lie in [0, 1]")
    cb = calibration_bins(conf, y01, bins, zero_in_first=False)
    total = conf.size
    value = 0.0
    for b in range(bins):
        if cb.count[b] > 0:
            offset = fp_weight * cb.fp_conf[b]
            gap = abs((cb.mean_conf[b] - cb.mean_acc[b]) + offset)
            value += cb.count[b] / total * gap
    return float(value), cb


def pece_per_class(p, y, bins=10, fp_weight=2.0):
    p, y = _split(p, y)
    return {
        c: pece_binary(p[:, c], (y == c).astype(np.uint8), bins, fp_weight)
        for c in range(1, p.shape[1])
    }


def pece(p, y, bins=10, fp_weight=2.0):
    """Mean over foreground classes of the one-vs-rest pixel-wise ECE."""
    per = pece_per_class(p, y, bins, fp_weight)
    return float(np.mean([v for v, _ in per.values()]))


def dsc(pred, gt):
    """Dice overlap; two empty masks score 1."""
    pred = np.asarray(pred) != 0
    gt = np.asarray(gt) != 0
    if pred.shape != gt.shape:
        raise DomainError("masks differ in shape")
    denom = int(pred.sum()) + int(gt.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((pred & gt).sum()) / denom


def boundary(mask):
    return apply_morph(mask, "internal_boundary", square(3))


def hd_distances(pred, gt):
    """Both directed boundary-to-boundary distance multisets, concatenated."""
    pred = as_mask(pred)
    gt = as_mask(gt)
    if pred.shape != gt.shape:
        raise DomainError("masks differ in shape")
    if not pred.any() or not gt.any():
        raise UndefinedMetricError("Hausdorff distance needs two nonempty masks")
    bp, bg = boundary(pred), boundary(gt)
    d_pg = squared_edt(bg)[bp == 1]
    d_gp = squared_edt(bp)[bg == 1]
    return np.sqrt(np.concatenate([d_pg, d_gp]).astype(np.float64))


def nearest_rank(values, q=95):
    """The ceil(q/100 * n)-th smallest value, in integer arithmetic."""
    v = np.sort(np.asarray(values))
    n = len(v)
    k = max(1, (q * n + 99) // 100)
    return float(v[k - 1])


def hd95(pred, gt):
    return nearest_rank(hd_distances(pred, gt), 95)


def friedman_ranks(table, higher_better):
    """Mean rank per method (rows) over metrics (columns), 1 = best.

    Ties share the average of their rank positions.  Returns the mean ranks and
    the method order, best first (stable on ties).
    """
    table = np.asarray(table, dtype=np.float64)
    if table.ndim != 2 or table.size == 0:
        raise DomainError("need a non-empty methods x metrics table")
    if np.isnan(table).any():
        raise DomainError("table has missing entries")
    higher_better = np.asarray(higher_better, dtype=bool)
    if higher_better.shape != (table.shape[1],):
        raise DomainError("one orientation flag per metric column")
    oriented = np.where(higher_better, -table, table)
    ranks = np.column_stack([rankdata(oriented[:, j]) for j in range(table.shape[1])])
    mean = ranks.mean(axis=1)
    return mean, np.argsort(mean, kind="stable")


def metric_report(p, y, bins=10, fp_weight=2.0, threshold=1e-3):
    """All metrics for one prediction as a plain dict (keys config/per_class/mean/bins).

    Undefined values (HD95 with an empty mask, ECE without foreground) are None.
    """
    p, y = _split(p, y)
    num_classes = p.shape[1]
    pred = p.argmax(axis=1)
    per_pece = pece_per_class(p, y, bins, fp_weight)
    per_class = []
    for c in range(1, num_classes):
        hds = []
        for b in range(p.shape[0]):
            try:
                hds.append(hd95((pred[b] == c).astype(np.uint8), (y[b] == c).astype(np.uint8)))
            except UndefinedMetricError:
                pass
        per_class.append({
            "class": c,
            "dsc": dsc(pred == c, y == c),
            "hd95": float(np.mean(hds)) if hds else None,
            "pece": per_pece[c][0],
        })
    try:
        ece_value, ece_table = ece_bins(p, y, bins)
        ece_rows = ece_table.rows()
    except UndefinedMetricError:
        ece_value, ece_rows = None, []
    hd_defined = [r["hd95"] for r in per_class if r["hd95"] is not None]
    return {
        "config": {"bins": bins, "fp_weight": fp_weight, "threshold": threshold,
                   "num_classes": num_classes},
        "per_class": per_class,
        "mean": {
            "dsc": float(np.mean([r["dsc"] for r in per_class])),
            "hd95": float(np.mean(hd_defined)) if hd_defined else None,
            "ece": ece_value,
            "cece": cece(p, y, bins, threshold),
            "pece": float(np.mean([r["pece"] for r in per_class])),
        },
        "bins": {
            "ece": ece_rows,
            "pece": {str(c): per_pece[c][1].rows() for c in per_pece},
        },
    }
