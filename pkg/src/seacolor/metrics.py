"""Full-reference (PSNR, SSIM) and no-reference (UIQM) image quality metrics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .errors import DimensionMismatch, ImageTooSmall
from .imagecore import RasterImage

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class UIQMConfig:
    """Constants of the published UIQM definition.

    Inputs are scaled to [0, 255] before evaluation.
    """

    c1: float = 0.0282          # colourfulness weight
    c2: float = 0.2953          # sharpness weight
    c3: float = 3.5753          # contrast weight
    trim_low: float = 0.1       # asymmetric alpha-trimmed mean, lower fraction
    trim_high: float = 0.1      # upper fraction
    uicm_mean_weight: float = -0.0268
    uicm_spread_weight: float = 0.1586
    channel_weights: Tuple[float, float, float] = (0.299, 0.587, 0.114)
    block: int = 8
    plip_gamma: float = 1026.0  # PLIP gamma = k = lambda = mu for 8-bit data
    min_size: int = 32


UIQM_DEFAULTS = UIQMConfig()


@dataclass
class MetricReport:
    psnr_db: Optional[float] = None
    ssim: Optional[float] = None
    uiqm: Optional[float] = None
    uicm: Optional[float] = None
    uism: Optional[float] = None
    uiconm: Optional[float] = None
    # reserved, not computed: both need pretrained natural-scene models
    niqe: Optional[float] = None
    ccf: Optional[float] = None

    def to_json_dict(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            if v is None:
                continue
            if isinstance(v, float) and math.isinf(v):
                v = "inf" if v > 0 else "-inf"
            out[k] = v
        return out


def _pair(a: RasterImage, b: RasterImage) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"image shapes differ: {a.shape} vs {b.shape}")


def psnr(a: RasterImage, b: RasterImage) -> float:
    """PSNR in dB for unit dynamic range; ``inf`` when the images are identical."""
    _pair(a, b)
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    rows = sliding_window_view(img, g.size, axis=0) @ g
    return sliding_window_view(rows, g.size, axis=1) @ g


def ssim(a: RasterImage, b: RasterImage) -> float:
    """Mean SSIM over all fully-contained 11x11 Gaussian windows.

    Colour inputs are reduced to grayscale by averaging channels.
    """
    _pair(a, b)
    if min(a.height, a.width) < SSIM_WINDOW:
        raise ImageTooSmall(f"SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels")
    x = a.data.mean(axis=2)
    y = b.data.mean(axis=2)
    g = gaussian_window()
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    mx, my = _filter_valid(x, g), _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(y * y, g) - my * my
    sxy = _filter_valid(x * y, g) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


# --- UIQM -----------------------------------------------------------------

def _trimmed_stats(values: np.ndarray, lo: float, hi: float) -> Tuple[float, float]:
    s = np.sort(values, axis=None)
    k = s.size
    t_lo = int(math.ceil(lo * k))
    t_hi = int(math.floor(hi * k))
    kept = s[t_lo : k - t_hi]
    mu = float(kept.sum() / (k - t_lo - t_hi))
    var = float(np.mean((s - mu) ** 2))
    return mu, var


def uicm(rgb255: np.ndarray, cfg: UIQMConfig = UIQM_DEFAULTS) -> float:
    """Colourfulness from the RG and YB opponent channels."""
    r, g, b = rgb255[..., 0], rgb255[..., 1], rgb255[..., 2]
    rg = r - g
    yb = 0.5 * (r + g) - b
    mu_rg, var_rg = _trimmed_stats(rg, cfg.trim_low, cfg.trim_high)
    mu_yb, var_yb = _trimmed_stats(yb, cfg.trim_low, cfg.trim_high)
    return (cfg.uicm_mean_weight * math.sqrt(mu_rg ** 2 + mu_yb ** 2)
            + cfg.uicm_spread_weight * math.sqrt(var_rg + var_yb))


def _block_edges(n: int, block: int) -> np.ndarray:
    return np.arange(0, n, block)


def block_extrema(ch: np.ndarray, block: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per-block max and min; a trailing partial block keeps its smaller size."""
    re, ce = _block_edges(ch.shape[0], block), _block_edges(ch.shape[1], block)
    bmax = np.maximum.reduceat(np.maximum.reduceat(ch, re, axis=0), ce, axis=1)
    bmin = np.minimum.reduceat(np.minimum.reduceat(ch, re, axis=0), ce, axis=1)
    return bmax, bmin


def eme(ch: np.ndarray, block: int) -> float:
    """Measure of enhancement: 2/(k1 k2) * sum log(max/min) over blocks.

    Blocks with a zero extremum contribute nothing.
    """
    bmax, bmin = block_extrema(ch, block)
    ok = (bmin > 0) & (bmax > 0)
    total = np.log(bmax[ok] / bmin[ok]).sum()
    return float(2.0 / bmax.size * total)


def sobel_magnitude(ch: np.ndarray) -> np.ndarray:
    gx = ndimage.sobel(ch, axis=1, mode="reflect")
    gy = ndimage.sobel(ch, axis=0, mode="reflect")
    return np.hypot(gx, gy)


def uism(rgb255: np.ndarray, cfg: UIQMConfig = UIQM_DEFAULTS) -> float:
    """Sharpness: weighted EME of each channel's Sobel-weighted edge map."""
    total = 0.0
    for c, lam in enumerate(cfg.channel_weights):
        ch = rgb255[..., c]
        total += lam * eme(ch * sobel_magnitude(ch), cfg.block)
    return total


def plip_add(a, b, gamma):
    return a + b - a * b / gamma


def plip_sub(a, b, k):
    return k * (a - b) / (k - b)


def plip_scalar_mul(c, a, gamma):
    return gamma - gamma * (1.0 - a / gamma) ** c


def uiconm(rgb255: np.ndarray, cfg: UIQMConfig = UIQM_DEFAULTS) -> float:
    """Contrast: PLIP logAMEE of the intensity image.

    Each block contributes the entropy-like term -m log m with
    m = (max (-) min) / (max (+) min) in PLIP arithmetic; the block sum is
    PLIP-scaled by 1/(k1 k2).
    """
    gray = rgb255.mean(axis=2)
    bmax, bmin = block_extrema(gray, cfg.block)
    top = plip_sub(bmax, bmin, cfg.plip_gamma)
    bot = plip_add(bmax, bmin, cfg.plip_gamma)
    ok = (top > 0) & (bot > 0)
    m = top[ok] / bot[ok]
    s = float(-(m * np.log(m)).sum())
    return float(plip_scalar_mul(1.0 / bmax.size, s, cfg.plip_gamma))


def uiqm(img: RasterImage, cfg: UIQMConfig = UIQM_DEFAULTS) -> Tuple[float, float, float, float]:
    """Returns ``(uiqm, uicm, uism, uiconm)`` for an RGB raster in [0, 1]."""
    if img.channels != 3:
        raise DimensionMismatch("UIQM needs a 3-channel image")
    if min(img.height, img.width) < cfg.min_size:
        raise ImageTooSmall(f"UIQM needs at least {cfg.min_size}x{cfg.min_size} pixels")
    x = img.data * 255.0
    cm, sm, conm = uicm(x, cfg), uism(x, cfg), uiconm(x, cfg)
    return cfg.c1 * cm + cfg.c2 * sm + cfg.c3 * conm, cm, sm, conm


def evaluate(ref: Optional[RasterImage], test: RasterImage, which=("psnr", "ssim", "uiqm")) -> MetricReport:
    rep = MetricReport()
    which = set(which)
    unknown = which - {"psnr", "ssim", "uiqm"}
    if unknown:
        raise ValueError(f"unknown metrics: {sorted(unknown)}")
    if which & {"psnr", "ssim"} and ref is None:
        raise ValueError("psnr/ssim need a reference image")
    if "psnr" in which:
        rep.psnr_db = psnr(ref, test)
    if "ssim" in which:
        rep.ssim = ssim(ref, test)
    if "uiqm" in which:
        rep.uiqm, rep.uicm, rep.uism, rep.uiconm = uiqm(test)
    return rep
