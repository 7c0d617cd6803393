"""Underwater image formation: transmission, veiling light, synthesis and inversion.

Nadir viewing is assumed, so the diffuse-attenuation terms drop out and the
model reduces to ``N = J*T + V*(1 - T)`` with ``T = exp(-alpha * r)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import DimensionMismatch, EmptyMask, NegativeRange
from .imagecore import RasterImage, WaterMask, check_same_size

DEFAULT_ALPHA = 0.9
T_FLOOR = 1e-3

Alpha = Union[float, Sequence[float]]


class TransmissionMap(RasterImage):
    """Transmission raster clamped to [T_FLOOR, 1]; 1 channel, or 3 for per-channel alpha."""

    def __init__(self, data):
        super().__init__(np.clip(np.asarray(data, dtype=np.float64), T_FLOOR, 1.0))

    @classmethod
    def from_raster(cls, img: RasterImage) -> "TransmissionMap":
        return cls(img.data)


@dataclass(frozen=True)
class OpticalParams:
    alpha: float = DEFAULT_ALPHA
    veiling: tuple = (0.0, 0.0, 0.0)
    # cos(theta) is fixed at 0 for nadir views, which removes the K terms
    zenith_cos: float = field(default=0.0, init=False)

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.alpha, dtype=np.float64))
        if np.any(a <= 0):
            raise ValueError("alpha must be positive")
        v = np.asarray(self.veiling, dtype=np.float64)
        if v.shape != (3,) or np.any((v < 0) | (v > 1)):
            raise ValueError("veiling must be three values in [0, 1]")


def transmission_from_range(range_map: RasterImage, alpha: Alpha = DEFAULT_ALPHA) -> TransmissionMap:
    """T = exp(-r * alpha), clamped to [T_FLOOR, 1].

    ``alpha`` may be a scalar or an RGB triple; a triple applied to a
    single-channel range map yields a 3-channel transmission map.
    """
    a = np.asarray(alpha, dtype=np.float64)
    if np.any(a <= 0):
        raise ValueError("alpha must be positive")
    r = range_map.data
    if np.any(r < 0):
        raise NegativeRange("range map contains negative distances")
    if a.ndim == 0:
        return TransmissionMap(np.exp(-r * float(a)))
    if a.shape != (3,):
        raise ValueError("per-channel alpha must have exactly 3 values")
    return TransmissionMap(np.exp(-r * a))


def veiling_grey_world(img: RasterImage, mask: WaterMask) -> np.ndarray:
    """Per-channel mean of ``img`` over water pixels."""
    check_same_size(img, mask)
    sel = mask.as_bool()
    if not sel.any():
        raise EmptyMask("veiling light needs at least one water pixel")
    return img.data[sel].mean(axis=0)


def _prepare(img: RasterImage, T: RasterImage, V, mask: WaterMask):
    check_same_size(img, T, mask)
    if img.channels != 3:
        raise DimensionMismatch("expected a 3-channel image")
    if T.channels not in (1, 3):
        raise DimensionMismatch("transmission must have 1 or 3 channels")
    V = np.asarray(V, dtype=np.float64).reshape(-1)
    if V.size != 3:
        raise DimensionMismatch("veiling light must have 3 components")
    t = np.clip(T.data, T_FLOOR, 1.0)
    return t, V, mask.as_bool()


def synthesize_underwater(J: RasterImage, T: RasterImage, V, mask: WaterMask) -> RasterImage:
    """N = J*T + V*(1 - T) on water pixels; land pixels copied unchanged."""
    t, V, sel = _prepare(J, T, V, mask)
    out = np.array(J.data)
    water = J.data * t + V * (1.0 - t)
    out[sel] = np.clip(water[sel], 0.0, 1.0)
    return RasterImage(out)


def dewater(N: RasterImage, T: RasterImage, V, mask: WaterMask) -> RasterImage:
    """J = (N - V)/T + V on water pixels, clamped to [0, 1]; land untouched."""
    t, V, sel = _prepare(N, T, V, mask)
    out = np.array(N.data)
    water = (N.data - V) / t + V
    out[sel] = np.clip(water[sel], 0.0, 1.0)
    return RasterImage(out)
