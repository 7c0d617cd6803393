"""Raster containers, percentile stretch, masked statistics and PNG I/O.

Images live in memory as float64 arrays of shape (H, W, C) with C in {1, 3}
and nominal range [0, 1]. 8-bit quantisation happens only at file
boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, DimensionMismatch, IoError, NonFiniteInput

PathLike = Union[str, Path]


@dataclass(frozen=True, eq=False)
class RasterImage:
    """H×W×C floating-point image, C ∈ {1, 3}."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise DimensionMismatch(f"expected (H, W, 1|3) raster, got shape {arr.shape}")
        if arr.shape[0] == 0 or arr.shape[1] == 0:
            raise DimensionMismatch("raster must be non-empty")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteInput("raster contains NaN or Inf")
        if arr.flags.writeable:
            # private copy so freezing never touches the caller's buffer
            arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"RasterImage({self.height}x{self.width}x{self.channels})"


@dataclass(frozen=True, eq=False)
class WaterMask:
    """Binary H×W raster, 1 = water, 0 = land or cloud."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        if arr.ndim != 2:
            raise DimensionMismatch(f"mask must be 2-D, got shape {arr.shape}")
        if not np.all((arr == 0) | (arr == 1)):
            raise ValueError("mask values must be 0 or 1")
        arr = arr.astype(np.uint8)
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @classmethod
    def full(cls, height: int, width: int) -> "WaterMask":
        return cls(np.ones((height, width), dtype=np.uint8))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    def as_bool(self) -> np.ndarray:
        return self.bits.astype(bool)

    def __repr__(self):
        return f"WaterMask({self.height}x{self.width}, water={self.count})"


def check_same_size(*items) -> None:
    """Raise DimensionMismatch unless every raster/mask shares H and W."""
    sizes = {(it.height, it.width) for it in items}
    if len(sizes) > 1:
        raise DimensionMismatch(f"spatial sizes disagree: {sorted(sizes)}")


class Stretched(NamedTuple):
    image: RasterImage
    constant_channels: tuple  # indices of channels that collapsed to zero


def linear_stretch(img: RasterImage, lo_pct: float = 0.01, hi_pct: float = 0.99) -> Stretched:
    """Per-channel percentile stretch to [0, 1].

    The ``lo_pct`` quantile maps to 0 and the ``hi_pct`` quantile to 1
    (linear interpolation between order statistics), followed by clamping.
    A channel whose two quantiles coincide maps to zeros and its index is
    reported in ``constant_channels``.
    """
    if not 0.0 <= lo_pct < hi_pct <= 1.0:
        raise ValueError(f"need 0 <= lo_pct < hi_pct <= 1, got ({lo_pct}, {hi_pct})")
    out = np.zeros_like(img.data)
    flat = img.data.reshape(-1, img.channels)
    lo = np.quantile(flat, lo_pct, axis=0)
    hi = np.quantile(flat, hi_pct, axis=0)
    constant = []
    for c in range(img.channels):
        span = hi[c] - lo[c]
        if span <= 0.0:
            constant.append(c)
            continue
        out[:, :, c] = (img.data[:, :, c] - lo[c]) / span
    np.clip(out, 0.0, 1.0, out=out)
    return Stretched(RasterImage(out), tuple(constant))


def masked_mean_abs(a: RasterImage, b: RasterImage, m: WaterMask) -> float:
    """Mean |a - b| over water pixels and all channels; 0 for an empty mask."""
    check_same_size(a, b, m)
    if a.channels != b.channels:
        raise DimensionMismatch(f"channel counts differ: {a.channels} vs {b.channels}")
    sel = m.as_bool()
    n = int(sel.sum()) * a.channels
    if n == 0:
        return 0.0
    return float(np.abs(a.data[sel] - b.data[sel]).sum() / n)


def to_uint8(data: np.ndarray) -> np.ndarray:
    return np.round(np.clip(data, 0.0, 1.0) * 255.0).astype(np.uint8)


def read_image(path: PathLike) -> RasterImage:
    """Load an 8-bit grayscale or RGB PNG as floats v/255."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("L", "1", "LA"):
                arr = np.asarray(im.convert("L"))
            elif im.mode in ("RGB", "RGBA", "P"):
                arr = np.asarray(im.convert("RGB"))
            else:
                raise DecodeError(f"{path}: unsupported image mode {im.mode!r}")
    except FileNotFoundError as exc:
        raise IoError(f"{path}: no such file") from exc
    except UnidentifiedImageError as exc:
        raise DecodeError(f"{path}: not a decodable image") from exc
    except OSError as exc:
        raise DecodeError(f"{path}: {exc}") from exc
    return RasterImage(arr.astype(np.float64) / 255.0)


def write_image(img: RasterImage, path: PathLike) -> None:
    path = Path(path)
    if not path.parent.exists():
        raise IoError(f"{path.parent}: directory does not exist")
    q = to_uint8(img.data)
    pil = Image.fromarray(q[:, :, 0], mode="L") if img.channels == 1 else Image.fromarray(q, mode="RGB")
    try:
        pil.save(path, format="PNG")
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc


def read_mask(path: PathLike) -> WaterMask:
    """Decode an 8-bit mask PNG; any sample >= 128 counts as water."""
    img = read_image(path)
    if img.channels != 1:
        gray = img.data.mean(axis=2)
    else:
        gray = img.data[:, :, 0]
    return WaterMask((gray >= 0.5).astype(np.uint8))


def write_mask(mask: WaterMask, path: PathLike) -> None:
    path = Path(path)
    if not path.parent.exists():
        raise IoError(f"{path.parent}: directory does not exist")
    Image.fromarray(mask.bits * np.uint8(255), mode="L").save(path, format="PNG")
