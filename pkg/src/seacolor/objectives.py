"""Mask-aware loss functionals of the four-generator objective.

Every L1 term is a masked mean normalised by (water pixels x channels), so
values are comparable across tiles with different water fractions. The
radiance term is an (unnormalised) masked L2 norm.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import DimensionMismatch, NonFiniteInput
from .imagecore import RasterImage, WaterMask, check_same_size, masked_mean_abs

PROB_EPS = 1e-7
DEPTH_OFFSET = 0.5


@dataclass(frozen=True)
class LossWeights:
    gamma: float = 30.0   # diffuse + specular
    sigma: float = 90.0   # dichromatic reconstruction
    iota: float = 100.0   # dewatered radiance
    tau: float = 50.0     # transmission / depth
    nu: float = 10.0      # re-synthesised underwater image

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"weight {f.name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class LossReport:
    l_gd: float
    l_gs: float
    l_r: float
    l_gj: float
    l_t: float
    l_n: float
    l_adv: float
    total: float

    def as_dict(self):
        return asdict(self)


PART_NAMES = ("l_gd", "l_gs", "l_r", "l_gj", "l_t", "l_n", "l_adv")


def _l1(a: RasterImage, b: RasterImage, mask: WaterMask, channels=None) -> float:
    if a.channels != b.channels:
        raise DimensionMismatch(f"channel counts differ: {a.channels} vs {b.channels}")
    if channels is not None and a.channels != channels:
        raise DimensionMismatch(f"expected {channels}-channel rasters, got {a.channels}")
    return masked_mean_abs(a, b, mask)


def loss_diffuse(target_diffuse: RasterImage, pred_diffuse: RasterImage, mask: WaterMask) -> float:
    return _l1(target_diffuse, pred_diffuse, mask)


def loss_specular(target_specular: RasterImage, pred_specular: RasterImage, mask: WaterMask) -> float:
    return _l1(target_specular, pred_specular, mask)


def loss_transmission(target_T: RasterImage, pred_T: RasterImage, mask: WaterMask) -> float:
    return _l1(target_T, pred_T, mask)


def loss_dewatered(target_J: RasterImage, pred_J: RasterImage, mask: WaterMask) -> float:
    return _l1(target_J, pred_J, mask)


def loss_resynthesis(N_real: RasterImage, N_fake: RasterImage, mask: WaterMask) -> float:
    return _l1(N_real, N_fake, mask)


def loss_radiance_l2(cube_rgb: RasterImage, pred_sum: RasterImage, mask: WaterMask) -> float:
    """sqrt of the summed squared residual over water pixels and channels."""
    check_same_size(cube_rgb, pred_sum, mask)
    if cube_rgb.channels != pred_sum.channels:
        raise DimensionMismatch("channel counts differ")
    r = (cube_rgb.data - pred_sum.data)[mask.as_bool()]
    return float(np.sqrt(np.sum(r * r)))


def gradient_l1(d: np.ndarray) -> float:
    """Mean per pixel of |forward x-difference| + |forward y-difference|.

    The difference past the last row/column is taken as zero.
    """
    d = np.asarray(d, dtype=np.float64)
    if d.ndim == 2:
        d = d[:, :, None]
    gx = np.abs(np.diff(d, axis=1)).sum()
    gy = np.abs(np.diff(d, axis=0)).sum()
    return float((gx + gy) / d.size)


def loss_depth_scale_invariant(t: float, pred_T: RasterImage, target_T: RasterImage) -> float:
    """log(t + 0.5) plus the gradient-L1 of (pred_T - target_T).

    ``t`` is the masked transmission L1. The result may be negative; its
    floor is log(0.5).
    """
    if t < 0 or not math.isfinite(t):
        raise ValueError(f"t must be a finite L1 value >= 0, got {t}")
    check_same_size(pred_T, target_T)
    if pred_T.channels != target_T.channels:
        raise DimensionMismatch("channel counts differ")
    return math.log(t + DEPTH_OFFSET) + gradient_l1(pred_T.data - target_T.data)


def adversarial_losses(d_real, d_fake, saturating: bool = False):
    """Cross-entropy GAN losses from discriminator probabilities.

    Returns ``(gen, disc)``. ``disc = -mean log D(real) - mean log(1 - D(fake))``.
    The generator term is the non-saturating ``-mean log D(fake)`` unless
    ``saturating`` is set, in which case it is ``mean log(1 - D(fake))``.
    """
    dr = np.clip(np.asarray(d_real, dtype=np.float64), PROB_EPS, 1 - PROB_EPS)
    df = np.clip(np.asarray(d_fake, dtype=np.float64), PROB_EPS, 1 - PROB_EPS)
    disc = -np.mean(np.log(dr)) - np.mean(np.log1p(-df))
    gen = np.mean(np.log1p(-df)) if saturating else -np.mean(np.log(df))
    return float(gen), float(disc)


def total_objective(parts, w: LossWeights = LossWeights()) -> LossReport:
    """Weighted sum of the seven loss terms.

    ``parts`` is a mapping (or object with attributes) holding l_gd, l_gs,
    l_r, l_gj, l_t, l_n and l_adv.
    """
    get = parts.__getitem__ if isinstance(parts, dict) else lambda k: getattr(parts, k)
    vals = {k: float(get(k)) for k in PART_NAMES}
    bad = [k for k, v in vals.items() if not math.isfinite(v)]
    if bad:
        raise NonFiniteInput(f"non-finite loss terms: {bad}")
    total = (vals["l_adv"] + w.gamma * (vals["l_gs"] + vals["l_gd"]) + w.sigma * vals["l_r"]
             + w.iota * vals["l_gj"] + w.tau * vals["l_t"] + w.nu * vals["l_n"])
    return LossReport(total=total, **vals)


def evaluate_losses(x, targets: dict, preds: dict, mask: WaterMask, V,
                    weights: LossWeights = LossWeights(), d_fake=0.5) -> LossReport:
    """All seven terms for one image from explicit targets and predictions.

    ``targets`` keys: diffuse, specular, T, J, N, cube_rgb.
    ``preds`` keys: diffuse, specular, T, J.
    The re-synthesised image is assembled from ``preds['J']``, ``preds['T']``
    and the veiling light ``V``.
    """
    pd, ps, pt, pj = preds["diffuse"], preds["specular"], preds["T"], preds["J"]
    pred_sum = RasterImage(pd.data + ps.data)
    V = np.asarray(V, dtype=np.float64).reshape(1, 1, -1)
    n_fake = RasterImage(pj.data * pt.data + V * (1.0 - pt.data))
    l_tr = loss_transmission(targets["T"], pt, mask)
    parts = dict(
        l_gd=loss_diffuse(targets["diffuse"], pd, mask),
        l_gs=loss_specular(targets["specular"], ps, mask),
        l_r=loss_radiance_l2(targets["cube_rgb"], pred_sum, mask),
        l_gj=loss_dewatered(targets["J"], pj, mask),
        l_t=loss_depth_scale_invariant(l_tr, pt, targets["T"]),
        l_n=loss_resynthesis(targets["N"], n_fake, mask),
        l_adv=adversarial_losses(0.5, d_fake)[0],
    )
    return total_objective(parts, weights)
