"""Desk-scale synthetic scenes for the toy trainer.

Each sample is built forward through the physics: a piecewise-constant
seafloor with smooth spectra and a weak specular field is rendered as a
63-band cube with the dichromatic model, pushed through the water column
with a random range map, and decomposed again to obtain the diffuse and
specular targets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..hypercube import DEFAULT_RGB_BANDS, HyperCube, compose_rgb
from ..imagecore import RasterImage, WaterMask
from ..photometry import IlluminantSpectrum, compose_dichromatic, decompose, grey_world
from ..watercolumn import DEFAULT_ALPHA, synthesize_underwater, transmission_from_range

N_BANDS = 63
# descending VNIR grid, so bands 33/45/56 fall on red/green/blue
WAVELENGTHS_NM = np.linspace(1010.0, 400.0, N_BANDS)
ALLOWED_SIZES = (16, 32, 64)
WATER_FRACTION = (0.3, 0.9)
MAX_RANGE = 2.0


@dataclass
class SyntheticBatch:
    """NCHW float64 arrays; ``mask`` is (N, 1, H, W), ``V`` is (N, 3)."""

    x: np.ndarray
    diffuse: np.ndarray
    specular: np.ndarray
    T: np.ndarray
    J: np.ndarray
    N: np.ndarray
    mask: np.ndarray
    V: np.ndarray
    range_map: np.ndarray

    @property
    def cube_rgb(self) -> np.ndarray:
        # the observed radiance the dichromatic sum should reproduce
        return self.x

    def __len__(self):
        return self.x.shape[0]

    def subset(self, idx) -> "SyntheticBatch":
        return SyntheticBatch(**{k: getattr(self, k)[idx] for k in self.__dataclass_fields__})


def _smooth_field(rng, size, cells):
    """Bilinear upsampling of a coarse uniform grid to (size, size), range [0, 1]."""
    coarse = rng.uniform(0.0, 1.0, (cells + 1, cells + 1))
    pos = np.linspace(0.0, cells, size)
    i0 = np.minimum(np.floor(pos).astype(int), cells - 1)
    f = pos - i0
    rows = coarse[i0] * (1 - f)[:, None] + coarse[i0 + 1] * f[:, None]
    return rows[:, i0] * (1 - f)[None, :] + rows[:, i0 + 1] * f[None, :]


def _voronoi_labels(rng, size, n_cells):
    seeds = rng.uniform(0, size, (n_cells, 2))
    yy, xx = np.mgrid[0:size, 0:size]
    d = (yy[..., None] - seeds[:, 0]) ** 2 + (xx[..., None] - seeds[:, 1]) ** 2
    return np.argmin(d, axis=-1)


def _spectra_from_rgb(rgb, bands=DEFAULT_RGB_BANDS):
    """Piecewise-linear spectrum through (band_R, r), (band_G, g), (band_B, b)."""
    idx = np.arange(1, N_BANDS + 1)
    order = np.argsort(bands)
    xs = np.asarray(bands, dtype=float)[order]
    return np.stack([np.interp(idx, xs, c[order]) for c in rgb])


def _mask(rng, size):
    frac = rng.uniform(WATER_FRACTION[0] + 0.05, WATER_FRACTION[1] - 0.05)
    field = _smooth_field(rng, size, 3)
    n_water = int(round(frac * size * size))
    flat = np.argsort(field, axis=None, kind="stable")
    bits = np.zeros(size * size, dtype=np.uint8)
    bits[flat[:n_water]] = 1
    return bits.reshape(size, size)


def make_sample(rng, size, alpha=DEFAULT_ALPHA, bands=DEFAULT_RGB_BANDS):
    """One synthetic scene; returns a dict of HWC arrays plus scalars."""
    labels = _voronoi_labels(rng, size, int(rng.integers(4, 9)))
    n_cells = labels.max() + 1
    cell_rgb = rng.uniform(0.1, 0.8, (n_cells, 3))
    S = _spectra_from_rgb(cell_rgb, bands)[labels]              # (H, W, B)
    gS = np.moveaxis(S * rng.uniform(0.85, 1.0), -1, 0)         # shading folded in
    k = RasterImage(0.08 * _smooth_field(rng, size, 2) ** 2)
    L = IlluminantSpectrum(rng.uniform(0.9, 1.0) * (0.95 + 0.05 * np.cos(np.linspace(0, np.pi, N_BANDS))))
    floor_cube = compose_dichromatic(gS, k, L, WAVELENGTHS_NM)
    J = compose_rgb(floor_cube, *bands)

    mask = WaterMask(_mask(rng, size))
    r = RasterImage(MAX_RANGE * _smooth_field(rng, size, 2))
    T = transmission_from_range(r, alpha)

    # veiling light: grey-world over water pixels of a noisy water-light cube
    tint = np.interp(np.arange(N_BANDS), [0, 30, 45, 62], [0.02, 0.08, 0.35, 0.45])
    water_light = tint[:, None, None] * (1.0 + 0.1 * rng.standard_normal((N_BANDS, size, size)))
    V_spec = grey_world(HyperCube(np.clip(water_light, 0, 1), WAVELENGTHS_NM), mask).values
    V = V_spec[[b - 1 for b in bands]]

    N = synthesize_underwater(J, T, V, mask)
    t = T.data[None, :, :, 0]
    sel = mask.as_bool()[None]
    obs = np.where(sel, floor_cube.planes * t + V_spec[:, None, None] * (1 - t), floor_cube.planes)
    observed = HyperCube(obs, WAVELENGTHS_NM)
    dec = decompose(observed, bands, mask)
    return dict(x=N.data, diffuse=dec.diffuse.data, specular=dec.specular.data, T=T.data,
                J=J.data, N=N.data, mask=mask.bits[:, :, None].astype(np.float64), V=V,
                range_map=r.data)


def make_synthetic_batch(seed: int, n: int, size: int = 32, alpha: float = DEFAULT_ALPHA) -> SyntheticBatch:
    """``n`` reproducible synthetic scenes of ``size`` x ``size`` pixels."""
    if size not in ALLOWED_SIZES:
        raise ValueError(f"size must be one of {ALLOWED_SIZES}, got {size}")
    rng = np.random.default_rng(seed)
    samples = [make_sample(rng, size, alpha) for _ in range(n)]

    def stack(key):
        return np.ascontiguousarray(np.stack([s[key] for s in samples]).transpose(0, 3, 1, 2))

    return SyntheticBatch(
        x=stack("x"), diffuse=stack("diffuse"), specular=stack("specular"), T=stack("T"),
        J=stack("J"), N=stack("N"), mask=stack("mask"),
        V=np.stack([s["V"] for s in samples]), range_map=stack("range_map"),
    )
