"""Differentiable counterparts of :mod:`seacolor.objectives` on NCHW tensors.

Masks have shape (N, 1, H, W). Batched L1 terms normalise by the total
number of water pixels in the batch times the channel count, which equals
the per-image definition when N == 1.
"""

from __future__ import annotations

import numpy as np

from ..objectives import DEPTH_OFFSET, PROB_EPS
from . import autodiff as ad
from .autodiff import Tensor


def masked_l1(pred: Tensor, target, mask: np.ndarray) -> Tensor:
    c = pred.shape[1]
    n = float(mask.sum()) * c
    if n == 0:
        return ad.Tensor(0.0)
    return ad.tsum(ad.abs_diff(pred, target) * mask) * (1.0 / n)


def masked_l2_norm(pred: Tensor, target, mask: np.ndarray) -> Tensor:
    if mask.sum() == 0:
        return ad.Tensor(0.0)
    d = (pred - ad.as_tensor(target)) * mask
    return ad.sqrt(ad.tsum(ad.square(d)))


def gradient_l1(d: Tensor) -> Tensor:
    """Mean per element of |forward x-diff| + |forward y-diff| (zero past the edge)."""
    gx = ad.tabs(d[:, :, :, 1:] - d[:, :, :, :-1])
    gy = ad.tabs(d[:, :, 1:, :] - d[:, :, :-1, :])
    return (ad.tsum(gx) + ad.tsum(gy)) * (1.0 / d.data.size)


def depth_loss(t: Tensor, pred_T: Tensor, target_T) -> Tensor:
    return ad.log(t + DEPTH_OFFSET) + gradient_l1(pred_T - ad.as_tensor(target_T))


def resynthesize(pred_J: Tensor, pred_T: Tensor, V: np.ndarray) -> Tensor:
    """N_hat = J_hat * T_hat + V * (1 - T_hat); V has shape (N, 3)."""
    v = np.asarray(V, dtype=ad.DTYPE).reshape(V.shape[0], -1, 1, 1)
    return pred_J * pred_T + (1.0 - pred_T) * v


def generator_adversarial(d_fake: Tensor, saturating: bool = False) -> Tensor:
    if saturating:
        return -ad.bce_with_clamp(d_fake, 0.0, PROB_EPS)
    return ad.bce_with_clamp(d_fake, 1.0, PROB_EPS)


def discriminator_loss(d_real: Tensor, d_fake: Tensor) -> Tensor:
    return ad.bce_with_clamp(d_real, 1.0, PROB_EPS) + ad.bce_with_clamp(d_fake, 0.0, PROB_EPS)
