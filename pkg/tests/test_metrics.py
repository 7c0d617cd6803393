import json
import math

import numpy as np
import pytest

from seacolor.errors import DimensionMismatch, ImageTooSmall
from seacolor.imagecore import RasterImage, read_image
from seacolor.metrics import UIQM_DEFAULTS, MetricReport, evaluate, psnr, ssim, uiqm

from _oracles import oracle_uiqm


def test_uiqm_matches_scalar_oracle(fixtures_dir):
    img = read_image(fixtures_dir / "uiqm_64.png")
    assert img.shape == (64, 64, 3)
    got = uiqm(img)
    want = oracle_uiqm(img.data.tolist())
    for g, w in zip(got, want):
        assert abs(g - w) <= 1e-6


def test_uiqm_constants():
    c = UIQM_DEFAULTS
    assert (c.c1, c.c2, c.c3) == (0.0282, 0.2953, 3.5753)
    assert c.plip_gamma == 1026.0


# --- PSNR ------------------------------------------------------------------------

def test_psnr_identical_is_inf(rng):
    a = RasterImage(rng.uniform(size=(8, 8, 3)))
    assert psnr(a, a) == math.inf


def test_psnr_mse_001():
    a = RasterImage(np.zeros((4, 4, 3)))
    b = RasterImage(np.full((4, 4, 3), 0.1))
    assert psnr(a, b) == pytest.approx(10 * math.log10(1 / 0.01), abs=1e-9)
    assert psnr(a, b) == pytest.approx(20.0, abs=1e-9)


def test_psnr_zero_db():
    assert psnr(RasterImage(np.zeros((2, 2))), RasterImage(np.ones((2, 2)))) == 0.0


def test_psnr_symmetric_and_shape_checked(rng):
    a, b = RasterImage(rng.uniform(size=(5, 5))), RasterImage(rng.uniform(size=(5, 5)))
    assert psnr(a, b) == psnr(b, a)
    with pytest.raises(DimensionMismatch):
        psnr(a, RasterImage(np.zeros((5, 4))))


# --- SSIM ------------------------------------------------------------------------

def test_ssim_identity(rng):
    a = RasterImage(rng.uniform(size=(24, 24, 3)))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)


def test_ssim_constant_images():
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    expected = (2 * 0.3 * 0.7 + c1) / (0.3 ** 2 + 0.7 ** 2 + c1) * (c2 / c2)
    got = ssim(RasterImage(np.full((16, 16), 0.3)), RasterImage(np.full((16, 16), 0.7)))
    assert got == pytest.approx(expected, abs=1e-9)


def test_ssim_symmetric_and_bounded(rng):
    a, b = RasterImage(rng.uniform(size=(20, 20))), RasterImage(rng.uniform(size=(20, 20)))
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)
    assert ssim(a, b) < 1 - 1e-9


def test_ssim_too_small():
    with pytest.raises(ImageTooSmall):
        ssim(RasterImage(np.zeros((10, 12))), RasterImage(np.zeros((10, 12))))


def test_noise_monotonicity():
    rng = np.random.default_rng(7)
    base = rng.uniform(0.2, 0.8, (32, 32, 3))
    noise = np.random.default_rng(8).standard_normal(base.shape)
    ref = RasterImage(base)
    p, s = [], []
    for sigma in (0.01, 0.05, 0.1):
        t = RasterImage(base + sigma * noise)
        p.append(psnr(ref, t))
        s.append(ssim(ref, t))
    assert p[0] > p[1] > p[2]
    assert s[0] > s[1] > s[2]


# --- UIQM properties ---------------------------------------------------------------

def test_uiqm_gray_has_zero_colourfulness():
    _, cm, _, _ = uiqm(RasterImage(np.full((32, 32, 3), 0.4)))
    assert cm == 0.0


def test_uiqm_rotation_and_flip_invariance(fixtures_dir):
    img = read_image(fixtures_dir / "uiqm_64.png")
    base = uiqm(img)
    for arr in (np.rot90(img.data), img.data[::-1], img.data[:, ::-1]):
        np.testing.assert_allclose(uiqm(RasterImage(np.ascontiguousarray(arr))), base, rtol=1e-9, atol=1e-9)


def test_uiqm_size_and_channels():
    with pytest.raises(ImageTooSmall):
        uiqm(RasterImage(np.zeros((16, 40, 3))))
    with pytest.raises(DimensionMismatch):
        uiqm(RasterImage(np.zeros((32, 32))))


def test_report_json_inf(rng):
    a = RasterImage(rng.uniform(size=(16, 16, 3)))
    rep = evaluate(a, a, which=("psnr", "ssim"))
    d = rep.to_json_dict()
    assert d["psnr_db"] == "inf"
    assert "niqe" not in d
    json.dumps(d)


def test_evaluate_validation(rng):
    a = RasterImage(rng.uniform(size=(16, 16, 3)))
    with pytest.raises(ValueError):
        evaluate(None, a, which=("psnr",))
    with pytest.raises(ValueError):
        evaluate(a, a, which=("niqe",))
    assert MetricReport().to_json_dict() == {}
