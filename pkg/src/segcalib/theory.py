"""Numerical checks of the sigmoid distance-to-probability bounds.

With p = sigmoid(-scale * s), the map s -> p is (scale / 4)-Lipschitz, so a
sup-norm error delta on the distance field moves every probability by at most
scale * delta / 4.  The functions here sample that claim and report the worst
observed slack.
"""

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from .distance import sdf_from_mask
from .grid import DomainError
from .metrics import ece, pece

SLACK = 1e-12


@dataclass
class BoundReport:
    name: str
    samples: int
    max_violation: float
    witness: tuple
    params: dict = field(default_factory=dict)

    @property
    def holds(self):
        return self.max_violation <= 0.0

    def to_dict(self):
        d = asdict(self)
        d["holds"] = self.holds
        return d


def prob_from_sdf(s, scale=1.0):
    """Binary probability field (2, ...) with foreground channel sigmoid(-scale * s)."""
    if not scale > 0:
        raise DomainError("scale must be positive")
    fg = expit(-scale * np.asarray(s, dtype=np.float64))
    return np.stack([1.0 - fg, fg])


def check_lipschitz(scale=1.0, n_samples=100_000, rng_seed=0, low=-50.0, high=50.0):
    if n_samples < 1:
        raise DomainError("need at least one sample")
    rng = np.random.default_rng(rng_seed)
    z1 = rng.uniform(low, high, n_samples)
    z2 = rng.uniform(low, high, n_samples)
    lhs = np.abs(expit(-scale * z1) - expit(-scale * z2))
    rhs = scale / 4.0 * np.abs(z1 - z2) + SLACK
    gap = lhs - rhs
    k = int(np.argmax(gap))
    return BoundReport(
        "lipschitz", n_samples, float(gap[k]), (float(z1[k]), float(z2[k])),
        {"scale": scale, "rng_seed": rng_seed, "range": [low, high]},
    )


def slope_ratio_at_zero(scale=1.0, h=1e-6):
    """Observed |sigmoid difference| over the Lipschitz bound for a tiny step at 0."""
    lhs = abs(expit(-scale * h) - expit(scale * h))
    return lhs / (scale / 4.0 * 2.0 * h)


def check_sdf_discrepancy(s_star, delta, scale=1.0, rng_seed=0):
    if delta < 0:
        raise DomainError("delta must be nonnegative")
    s_star = np.asarray(s_star, dtype=np.float64)
    rng = np.random.default_rng(rng_seed)
    s = s_star + rng.uniform(-delta, delta, s_star.shape)
    disc = np.abs(expit(-scale * s) - expit(-scale * s_star))
    gap = disc - (scale * delta / 4.0 + SLACK)
    k = np.unravel_index(int(np.argmax(gap)), gap.shape)
    return BoundReport(
        "sdf_discrepancy", int(s_star.size), float(gap[k]), (float(s[k]), float(s_star[k])),
        {"scale": scale, "delta": delta, "rng_seed": rng_seed,
         "sup_discrepancy": float(disc.max())},
    )


def calibration_transfer_demo(masks, deltas=(0.0, 0.25, 0.5, 1.0), scale=1.0, bins=10,
                              seeds=range(20)):
    """Median ECE / pECE of sigmoid(-scale * (s* + noise)) against each mask.

    Noise is uniform in [-delta, delta].  Each (mask, seed) pair is one draw;
    medians are taken over all draws.  Returns rows of (delta, pece, ece).
    """
    masks = [np.asarray(m, dtype=np.uint8) for m in masks]
    if not masks or any(not m.any() for m in masks):
        raise DomainError("masks must be nonempty")
    stars = [sdf_from_mask(m) for m in masks]
    rows = []
    for delta in deltas:
        e_vals, p_vals = [], []
        for seed in seeds:
            rng = np.random.default_rng(seed)
            for m, s_star in zip(masks, stars):
                s = s_star + rng.uniform(-delta, delta, s_star.shape)
                p = prob_from_sdf(s, scale)
                e_vals.append(ece(p, m, bins))
                p_vals.append(pece(p, m, bins))
        rows.append({"delta": float(delta), "pece": float(np.median(p_vals)),
                     "ece": float(np.median(e_vals))})
    return rows
