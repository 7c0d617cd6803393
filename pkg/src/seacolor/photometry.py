"""Grey-world illuminant and closed-form dichromatic decomposition.

Observed radiance per pixel ``u`` and band ``i`` is modelled as::

    I(u, i) = L(i) * gS(u, i) + k(u) * L(i)

with ``L`` the illuminant, ``gS`` the shading-times-reflectance term and
``k`` the specular coefficient. Given ``L`` from the grey-world average,
``E[k(u)] = mean_i I(u, i) / L(i)`` and ``gS = I / L - E[k]``, which makes
the split exact: ``compose_dichromatic(gS, E[k], L)`` reproduces ``I``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatch, EmptyMask, ZeroIlluminantBand
from .hypercube import DEFAULT_RGB_BANDS, HyperCube, check_band
from .imagecore import RasterImage, WaterMask, linear_stretch

log = logging.getLogger(__name__)

ILLUMINANT_FLOOR = 1e-6


@dataclass(frozen=True, eq=False)
class IlluminantSpectrum:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("illuminant values must be finite and non-negative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def usable(self, eps: float = ILLUMINANT_FLOOR) -> np.ndarray:
        """Boolean per band: True where the band is bright enough to divide by."""
        return self.values >= eps

    def rejected_bands(self, eps: float = ILLUMINANT_FLOOR) -> Tuple[int, ...]:
        """1-based indices of bands excluded by the division floor."""
        return tuple(int(i) + 1 for i in np.flatnonzero(~self.usable(eps)))


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Diffuse/specular split of one cube.

    ``diffuse`` and ``specular`` are the stretched training targets.
    ``diffuse_raw`` holds ``I_c - E[k] L_c`` per RGB band before clamping,
    so that ``diffuse_raw + k_expect * L_c == I_c`` exactly.
    """

    diffuse: RasterImage
    specular: RasterImage
    k_expect: RasterImage
    gS: np.ndarray
    illuminant: IlluminantSpectrum
    diffuse_raw: RasterImage
    specular_raw: RasterImage
    bands: Tuple[int, int, int]
    degenerate_channels: Tuple[str, ...] = ()


def _check_mask(cube: HyperCube, mask: Optional[WaterMask]) -> None:
    if mask is not None and (mask.height, mask.width) != (cube.height, cube.width):
        raise DimensionMismatch(
            f"mask {mask.height}x{mask.width} vs cube {cube.height}x{cube.width}")


def grey_world(cube: HyperCube, mask: Optional[WaterMask] = None) -> IlluminantSpectrum:
    """Per-band mean reflectance, restricted to water pixels when a mask is given."""
    _check_mask(cube, mask)
    planes = cube.planes.astype(np.float64)
    if mask is None:
        return IlluminantSpectrum(planes.reshape(cube.bands, -1).mean(axis=1))
    sel = mask.as_bool()
    if not sel.any():
        raise EmptyMask("grey-world estimate needs at least one water pixel")
    return IlluminantSpectrum(planes[:, sel].mean(axis=1))


def _ratio(cube: HyperCube, L: IlluminantSpectrum, eps: float):
    if len(L) != cube.bands:
        raise DimensionMismatch(f"illuminant has {len(L)} bands, cube has {cube.bands}")
    ok = L.usable(eps)
    if not ok.any():
        raise ZeroIlluminantBand("every illuminant band is below the division floor")
    if not ok.all():
        log.warning("illuminant bands %s below %.1e excluded", L.rejected_bands(eps), eps)
    ratio = np.zeros(cube.planes.shape, dtype=np.float64)
    ratio[ok] = cube.planes[ok].astype(np.float64) / L.values[ok, None, None]
    return ratio, ok


def specular_expectation(cube: HyperCube, L: IlluminantSpectrum,
                         eps: float = ILLUMINANT_FLOOR) -> RasterImage:
    """E[k(u)]: mean over usable bands of I(u, i) / L(i)."""
    ratio, ok = _ratio(cube, L, eps)
    return RasterImage(ratio[ok].mean(axis=0))


def shading_reflectance(cube: HyperCube, L: IlluminantSpectrum, k_expect: RasterImage,
                        eps: float = ILLUMINANT_FLOOR) -> np.ndarray:
    """gS(u, i) = I(u, i) / L(i) - E[k(u)], shape (bands, H, W).

    Bands rejected by the illuminant floor carry zeros.
    """
    if (k_expect.height, k_expect.width) != (cube.height, cube.width) or k_expect.channels != 1:
        raise DimensionMismatch("k_expect must be a 1-channel raster matching the cube")
    ratio, ok = _ratio(cube, L, eps)
    gS = ratio - k_expect.data[None, :, :, 0]
    gS[~ok] = 0.0
    return gS


def compose_dichromatic(gS: np.ndarray, k: RasterImage, L: IlluminantSpectrum,
                        wavelengths_nm: Optional[Sequence[float]] = None) -> HyperCube:
    """Forward dichromatic model: I = L * gS + k * L."""
    gS = np.asarray(gS, dtype=np.float64)
    if gS.ndim != 3:
        raise DimensionMismatch(f"gS must be (bands, H, W), got {gS.shape}")
    if gS.shape[0] != len(L):
        raise DimensionMismatch(f"gS has {gS.shape[0]} bands, illuminant has {len(L)}")
    if k.channels != 1 or (k.height, k.width) != gS.shape[1:]:
        raise DimensionMismatch("k must be a 1-channel raster matching gS")
    Lv = L.values[:, None, None]
    cube = Lv * gS + k.data[None, :, :, 0] * Lv
    if wavelengths_nm is None:
        wavelengths_nm = np.arange(1, gS.shape[0] + 1, dtype=np.float32)
    return HyperCube(cube, wavelengths_nm)


def decompose(cube: HyperCube, bands: Sequence[int] = DEFAULT_RGB_BANDS,
              mask: Optional[WaterMask] = None, lo_pct: float = 0.01,
              hi_pct: float = 0.99) -> Decomposition:
    """Split a cube into stretched diffuse (RGB) and specular (gray) targets."""
    bands = tuple(int(b) for b in bands)
    for b in bands:
        check_band(cube, b)
    if len(set(bands)) != 3:
        raise ValueError(f"band triplet must be 3 distinct indices, got {bands}")
    L = grey_world(cube, mask)
    k_exp = specular_expectation(cube, L)
    gS = shading_reflectance(cube, L, k_exp)
    idx = [b - 1 for b in bands]
    I_rgb = np.stack([cube.planes[i].astype(np.float64) for i in idx], axis=-1)
    L_rgb = L.values[idx]
    diffuse_raw = I_rgb - k_exp.data * L_rgb
    specular_raw = k_exp.data * L_rgb.mean()
    diff = linear_stretch(RasterImage(np.maximum(diffuse_raw, 0.0)), lo_pct, hi_pct)
    spec = linear_stretch(RasterImage(specular_raw), lo_pct, hi_pct)
    degenerate = tuple(f"diffuse[{c}]" for c in diff.constant_channels)
    degenerate += tuple("specular" for _ in spec.constant_channels)
    return Decomposition(
        diffuse=diff.image,
        specular=spec.image,
        k_expect=k_exp,
        gS=gS,
        illuminant=L,
        diffuse_raw=RasterImage(diffuse_raw),
        specular_raw=RasterImage(specular_raw),
        bands=bands,
        degenerate_channels=degenerate,
    )


def reconstruction_residual(cube: HyperCube, diffuse: RasterImage, specular: RasterImage,
                            mask: WaterMask, bands: Sequence[int] = DEFAULT_RGB_BANDS,
                            illuminant: Optional[IlluminantSpectrum] = None) -> float:
    """Masked L2 norm of I_c - (diffuse_c + specular * L_c) over the RGB bands.

    ``specular`` is the per-pixel specular coefficient (e.g. ``k_expect``),
    scaled per band by the illuminant. The illuminant defaults to the
    water-pixel grey-world estimate of ``cube``.
    """
    _check_mask(cube, mask)
    if (diffuse.height, diffuse.width) != (cube.height, cube.width) or diffuse.channels != 3:
        raise DimensionMismatch("diffuse must be a 3-channel raster matching the cube")
    if (specular.height, specular.width) != (cube.height, cube.width) or specular.channels != 1:
        raise DimensionMismatch("specular must be a 1-channel raster matching the cube")
    sel = mask.as_bool()
    if not sel.any():
        return 0.0
    if illuminant is None:
        illuminant = grey_world(cube, mask)
    idx = [int(b) - 1 for b in bands]
    for b in bands:
        check_band(cube, int(b))
    I_rgb = np.stack([cube.planes[i].astype(np.float64) for i in idx], axis=-1)
    recon = diffuse.data + specular.data * illuminant.values[idx]
    resid = (I_rgb - recon)[sel]
    return float(np.sqrt(np.sum(resid * resid)))
