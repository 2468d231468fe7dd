import math

import numpy as np
import pytest

import gradcheck as gc
from segcalib.distance import sdf_from_labels
from segcalib.grid import DomainError, softmax
from segcalib.losses import (
    SdcConfig,
    conf_term,
    cross_entropy,
    focal_loss,
    label_smoothing_loss,
    margin_loss,
    predicted_sdf,
    prepare_margin_targets,
    prepare_sdc_targets,
    sdc_loss,
    sdf_term,
)
from segcalib.smoothing import smoothed_one_hot
from segcalib.theory import prob_from_sdf

TOL = 1e-4


def instance(rng, b=1, c=3, h=5, w=5):
    z = rng.normal(0.0, 2.0, (b, c, h, w))
    y = rng.integers(0, c, (b, h, w))
    return z, y


def test_ce_uniform_logits():
    z = np.zeros((1, 4, 3, 3))
    y = np.zeros((1, 3, 3), dtype=int)
    assert cross_entropy(z, y).value == pytest.approx(math.log(4), abs=1e-15)


def test_ce_loop_oracle(rng):
    z, y = instance(rng)
    total = 0.0
    for i in range(5):
        for j in range(5):
            col = z[0, :, i, j]
            total += -(col[y[0, i, j]] - math.log(sum(math.exp(v) for v in col)))
    assert cross_entropy(z, y).value == pytest.approx(total / 25, abs=1e-12)


def test_unbatched_inputs(rng):
    z, y = instance(rng)
    a = cross_entropy(z[0], y[0])
    b = cross_entropy(z, y)
    assert a.value == b.value and a.grad.shape == z.shape[1:]


def test_conf_value_oracle(rng):
    z, y = instance(rng)
    t = smoothed_one_hot(y, 3)
    p = softmax(z)
    assert conf_term(z, t, "l1").value == pytest.approx(np.mean(np.abs(p - t)), abs=1e-15)
    assert conf_term(z, t, "l2").value == pytest.approx(np.mean((p - t) ** 2), abs=1e-15)


def test_weights_zero_reduce_to_ce(rng):
    z, y = instance(rng)
    r = sdc_loss(z, y, SdcConfig(alpha=0.0, lambda_sdf=0.0))
    ce = cross_entropy(z, y)
    assert r.value == ce.value and np.array_equal(r.grad, ce.grad)


def test_baselines_reduce_to_ce(rng):
    z, y = instance(rng)
    ce = cross_entropy(z, y)
    assert label_smoothing_loss(z, y, 0.0).value == pytest.approx(ce.value, abs=1e-14)
    assert focal_loss(z, y, 0.0).value == pytest.approx(ce.value, abs=1e-14)
    assert np.allclose(focal_loss(z, y, 0.0).grad, ce.grad, atol=1e-15)


def test_predicted_sdf_inverts_sigmoid():
    s = np.linspace(-2.5, 2.5, 11)
    for scale in (0.5, 1.0, 2.0):
        p = prob_from_sdf(s, scale)[1]
        s_hat, _ = predicted_sdf(p, scale, 3.0)
        assert np.allclose(s_hat, s, atol=1e-9)
    assert predicted_sdf(np.array(0.5), 1.0, 3.0)[0] == 0.0


def test_sdf_term_perfect_prediction_is_zero():
    y = np.zeros((1, 6, 6), dtype=int)
    y[0, 2:4, 2:4] = 1
    s = sdf_from_labels(y, 2)
    fg = prob_from_sdf(np.clip(s[:, 1], -3, 3), 1.0)[1]
    z = np.stack([np.zeros_like(fg), np.log(fg) - np.log1p(-fg)], axis=1)
    assert sdf_term(z, s).value == pytest.approx(0.0, abs=1e-9)


def test_sdf_gradient_vanishes_when_clamped():
    z = np.zeros((1, 2, 1, 1))
    z[0, 1] = 10.0  # raw predicted distance -10, beyond the clamp
    s = np.zeros((1, 2, 1, 1))
    assert np.all(sdf_term(z, s).grad == 0)


def test_loss_rejects_bad_inputs(rng):
    z, y = instance(rng)
    with pytest.raises(DomainError):
        cross_entropy(z, y[:, :4])
    with pytest.raises(DomainError):
        label_smoothing_loss(z, y, 1.0)
    with pytest.raises(DomainError):
        margin_loss(z, y, SdcConfig())
    with pytest.raises(DomainError):
        SdcConfig(morph_op="tophat")


def test_margin_ce_on_morphed(rng):
    z, y = instance(rng, c=2, h=8, w=8)
    cfg = SdcConfig(morph_op="erosion", ce_on_morphed=True)
    t = prepare_margin_targets(y, 2, cfg)
    assert not np.array_equal(t["ce_target"], y) or y.sum() == 0
    r = margin_loss(z, y, cfg, t)
    assert r.components["ce"] == pytest.approx(cross_entropy(z, t["ce_target"]).value)


# gradient checks -------------------------------------------------------------

def test_grad_ce(rng):
    z, y = instance(rng)
    err, used, _ = gc.check(lambda v: cross_entropy(v, y), z)
    assert err <= TOL


def test_grad_ce_soft_target(rng):
    z, y = instance(rng)
    t = smoothed_one_hot(y, 3)
    assert gc.check(lambda v: cross_entropy(v, t), z)[0] <= TOL


@pytest.mark.parametrize("norm", ["l1", "l2"])
def test_grad_conf(norm, rng):
    for _ in range(3):
        z, y = instance(rng)
        t = smoothed_one_hot(y, 3)
        br = gc.l1_branches(t) if norm == "l1" else gc.no_kinks
        err, used, total = gc.check(lambda v: conf_term(v, t, norm), z, br)
        assert err <= TOL and used > total // 2


@pytest.mark.parametrize("sdf_norm", ["l1", "l2"])
def test_grad_sdf(sdf_norm, rng):
    cfg = SdcConfig(sdf_norm=sdf_norm)
    for _ in range(3):
        z, y = instance(rng)
        s = sdf_from_labels(y, 3)
        err, used, _ = gc.check(lambda v: sdf_term(v, s, cfg), z, gc.sdf_branches(s, cfg))
        assert err <= TOL and used > 0


def test_grad_sdc(rng):
    cfg = SdcConfig(alpha=0.1, lambda_sdf=0.1)
    for _ in range(3):
        z, y = instance(rng)
        t = prepare_sdc_targets(y, 3, cfg)
        br = gc.combine(gc.l1_branches(t["soft"]), gc.sdf_branches(t["s_star"], cfg))
        err, _, _ = gc.check(lambda v: sdc_loss(v, y, cfg, t), z, br)
        assert err <= TOL


def test_grad_margin(rng):
    cfg = SdcConfig(morph_op="closing", lambda_sdf=0.0)
    for _ in range(3):
        z, y = instance(rng, h=6, w=6)
        t = prepare_margin_targets(y, 3, cfg)
        err, _, _ = gc.check(lambda v: margin_loss(v, y, cfg, t), z, gc.l1_branches(t["soft"]))
        assert err <= TOL


def test_grad_label_smoothing_and_focal(rng):
    for _ in range(3):
        z, y = instance(rng)
        assert gc.check(lambda v: label_smoothing_loss(v, y, 0.1), z)[0] <= TOL
        assert gc.check(lambda v: focal_loss(v, y, 3.0), z)[0] <= TOL


def test_focal_saturated_pixel_is_finite():
    z = np.zeros((1, 2, 1, 1))
    z[0, 0] = 800.0
    r = focal_loss(z, np.zeros((1, 1, 1), dtype=int), 0.5)
    assert np.isfinite(r.value) and np.all(np.isfinite(r.grad))


def test_sdc_components_add_up(rng):
    for _ in range(5):
        z, y = instance(rng)
        cfg = SdcConfig(alpha=0.3, lambda_sdf=0.7)
        r = sdc_loss(z, y, cfg)
        c = r.components
        assert abs(r.value - (c["ce"] + 0.3 * c["conf"] + 0.7 * c["sdf"])) <= 1e-12
        assert min(c.values()) >= 0


def test_total_is_affine_in_lambda(rng):
    z, y = instance(rng)
    vals = [sdc_loss(z, y, SdcConfig(lambda_sdf=lam)).value for lam in (0.0, 0.5, 1.0)]
    sdf = sdc_loss(z, y, SdcConfig(lambda_sdf=1.0)).components["sdf"]
    assert vals[1] - vals[0] == pytest.approx(0.5 * sdf, abs=1e-12)
    assert vals[2] - vals[1] == pytest.approx(0.5 * sdf, abs=1e-12)


def test_inverse_sigmoid_roundtrip_inside_clamp():
    scale, tau = 2.0, 3.0
    lo, hi = prob_from_sdf(np.array([tau, -tau]), scale)[1]
    p = np.linspace(lo, hi, 101)
    s_hat, _ = predicted_sdf(p, scale, tau)
    assert np.abs(prob_from_sdf(s_hat, scale)[1] - p).max() <= 1e-9
