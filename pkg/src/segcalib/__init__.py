"""Calibration-aware segmentation: SDC loss, morphological margin targets, pixel-wise ECE."""

__version__ = "0.1.0"

from .distance import EmptyMaskError, edt, sdf_from_labels, sdf_from_mask, squared_edt
from .grid import DomainError, class_slice, one_hot, softmax
from .losses import (
    LossResult,
    SdcConfig,
    baseline_loss,
    conf_term,
    cross_entropy,
    focal_loss,
    label_smoothing_loss,
    margin_loss,
    sdc_loss,
    sdf_term,
)
from .metrics import (
    CalibrationBins,
    UndefinedMetricError,
    cece,
    dsc,
    ece,
    friedman_ranks,
    hd95,
    metric_report,
    pece,
    pece_binary,
)
from .morphology import MORPH_OPS, apply_morph, dilate, erode
from .smoothing import SmoothingKernel, make_kernel, morph_smooth_targets, smooth_targets
