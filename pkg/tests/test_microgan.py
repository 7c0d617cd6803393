import numpy as np
import pytest

from seacolor.errors import NonFiniteGradient, ShapeMismatch
from seacolor.imagecore import RasterImage, WaterMask
from seacolor.microgan import autodiff as ad
from seacolor.microgan import losses as L
from seacolor.microgan.data import N_BANDS, WATER_FRACTION, make_synthetic_batch
from seacolor.microgan.nets import (
    AttentionDiscriminator,
    GeneratorSpec,
    build_generator,
    conv_param_count,
    generator_param_count,
)
from seacolor.microgan.optim import Adam
from seacolor.microgan.train import (
    Networks,
    TrainConfig,
    batch_order,
    load_checkpoint,
    save_checkpoint,
    train_step,
    train_toy,
)
from seacolor.watercolumn import dewater

from _gradcheck import full_graph_errors, numeric_grad, rel_error

SMALL = TrainConfig(image_size=16, depth=2, base_width=4, disc_dim=8, batch=2)


@pytest.fixture(scope="module")
def small_batch():
    return make_synthetic_batch(5, 2, 16)


def test_param_count_formula():
    spec = GeneratorSpec.for_name("Gd")
    # by hand for widths 16, 32, 64; bottleneck 128
    enc = conv_param_count(3, 16, 3) + conv_param_count(16, 16, 3) \
        + conv_param_count(16, 32, 3) + conv_param_count(32, 32, 3) \
        + conv_param_count(32, 64, 3) + conv_param_count(64, 64, 3)
    mid = conv_param_count(64, 128, 3)
    dec = conv_param_count(128 + 64, 64, 3) + conv_param_count(64 + 32, 32, 3) + conv_param_count(32 + 16, 16, 3)
    head = conv_param_count(16, 3, 1)
    assert generator_param_count(spec) == enc + mid + dec + head
    for name in ("Gd", "Gs", "Gt", "Gj"):
        s = GeneratorSpec.for_name(name)
        assert build_generator(s, 0).num_parameters() == generator_param_count(s)


def test_generator_channels_and_range():
    x = ad.Tensor(np.random.default_rng(0).uniform(size=(2, 3, 32, 32)))
    for name, cout in (("Gd", 3), ("Gs", 1), ("Gt", 1), ("Gj", 3)):
        y = build_generator(GeneratorSpec.for_name(name), 1)(x).data
        assert y.shape == (2, cout, 32, 32)
        assert np.all((y > 0) & (y < 1))


def test_generator_rejects_bad_input():
    g = build_generator(GeneratorSpec.for_name("Gt"), 0)
    with pytest.raises(ShapeMismatch):
        g(ad.Tensor(np.zeros((1, 1, 32, 32))))
    with pytest.raises(ShapeMismatch):
        g(ad.Tensor(np.zeros((1, 3, 20, 20))))
    with pytest.raises(ValueError):
        GeneratorSpec.for_name("Gx")


def test_generator_deterministic():
    x = ad.Tensor(np.random.default_rng(0).uniform(size=(1, 3, 32, 32)))
    a = build_generator(GeneratorSpec.for_name("Gd"), 9)(x).data
    b = build_generator(GeneratorSpec.for_name("Gd"), 9)(x).data
    c = build_generator(GeneratorSpec.for_name("Gd"), 10)(x).data
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_discriminator_output_and_patch_sensitivity():
    rng = np.random.default_rng(1)
    D = AttentionDiscriminator(image_size=16, patch=4, dim=8, seed=3)
    x = rng.uniform(size=(2, 3, 16, 16))
    y = rng.uniform(size=(2, 3, 16, 16))
    p = D(ad.Tensor(x), ad.Tensor(y)).data
    assert p.shape == (2, 1)
    assert np.all((p > 0) & (p < 1))
    # swap two 4x4 patches of the candidate; positional embeddings make the score change
    y2 = y.copy()
    y2[:, :, 0:4, 0:4], y2[:, :, 12:16, 12:16] = y[:, :, 12:16, 12:16], y[:, :, 0:4, 0:4]
    assert not np.allclose(D(ad.Tensor(x), ad.Tensor(y2)).data, p, atol=1e-12)
    with pytest.raises(ShapeMismatch):
        D(ad.Tensor(x), ad.Tensor(y[:, :1]))


def test_discriminator_gradient_check(small_batch):
    nets = Networks(SMALL)
    y = ad.Tensor(np.random.default_rng(2).uniform(size=small_batch.J.shape))

    def loss():
        return L.discriminator_loss(nets.D(ad.Tensor(small_batch.x), ad.Tensor(small_batch.J)),
                                    nets.D(ad.Tensor(small_batch.x), y))

    nets.D.zero_grad()
    loss().backward()
    rng = np.random.default_rng(0)
    for name, p in nets.D.named_parameters():
        idx = rng.choice(p.data.size, size=min(3, p.data.size), replace=False)
        num = numeric_grad(lambda: loss().item(), p.data, idx=idx)
        assert rel_error(p.grad.reshape(-1)[idx], num) <= 1e-4, name


def test_full_objective_gradient_check(small_batch):
    errs = full_graph_errors(Networks(SMALL), small_batch)
    assert max(errs.values()) <= 1e-3, errs


def test_synthetic_batch_consistency():
    b = make_synthetic_batch(11, 3, 32)
    assert b.x.shape == (3, 3, 32, 32) and b.mask.shape == (3, 1, 32, 32) and b.V.shape == (3, 3)
    frac = b.mask.mean(axis=(1, 2, 3))
    assert np.all(frac >= WATER_FRACTION[0]) and np.all(frac <= WATER_FRACTION[1])
    for arr in (b.x, b.diffuse, b.specular, b.T, b.J, b.N):
        assert arr.min() >= 0 and arr.max() <= 1
    for i in range(3):
        hwc = lambda a: RasterImage(a[i].transpose(1, 2, 0))
        back = dewater(hwc(b.N), hwc(b.T), b.V[i], WaterMask(b.mask[i, 0]))
        m = b.mask[i, 0].astype(bool)
        assert np.max(np.abs(back.data[m] - hwc(b.J).data[m])) <= 1e-6
    assert N_BANDS == 63


def test_synthetic_batch_reproducible():
    a, b = make_synthetic_batch(3, 2, 16), make_synthetic_batch(3, 2, 16)
    assert all(np.array_equal(getattr(a, k), getattr(b, k)) for k in a.__dataclass_fields__)
    with pytest.raises(ValueError):
        make_synthetic_batch(3, 1, 24)


def test_adam_first_step_moves_by_lr():
    p = ad.parameter(np.array([1.0, -2.0]))
    opt = Adam([p])
    p.grad = np.array([0.5, -3.0])
    opt.step()
    # bias-corrected first step is lr * sign(g) up to eps
    np.testing.assert_allclose(p.data, [1.0 - 2e-4, -2.0 + 2e-4], atol=1e-10)


def test_batch_order_deterministic_and_covers():
    a = batch_order(100, 16, 6, 8)
    assert [x.tolist() for x in a] == [x.tolist() for x in batch_order(100, 16, 6, 8)]
    assert all(len(x) == 6 and len(set(x.tolist())) == 6 for x in a)


def test_train_step_deterministic(small_batch):
    r1 = train_step(small_batch, Networks(SMALL))
    r2 = train_step(small_batch, Networks(SMALL))
    assert r1 == r2
    assert np.isfinite(r1.total)


def test_train_step_blames_nonfinite(small_batch):
    nets = Networks(SMALL)
    bad = small_batch.subset(np.arange(2))
    bad.T = np.full_like(bad.T, np.nan)
    with pytest.raises(NonFiniteGradient) as exc:
        train_step(bad, nets)
    assert exc.value.term in ("l_t", "l_n")


def test_checkpoint_round_trip(tmp_path, small_batch):
    nets = Networks(SMALL)
    train_step(small_batch, nets)
    save_checkpoint(nets, tmp_path / "ck")
    other = Networks(SMALL)
    load_checkpoint(other, tmp_path / "ck")
    for k, v in nets.state_dict().items():
        np.testing.assert_array_equal(other.state_dict()[k], v.astype(np.float32).astype(np.float64))


def test_train_toy_outputs(tmp_path):
    cfg = TrainConfig(image_size=16, depth=2, base_width=4, disc_dim=8, batch=2)
    res = train_toy(cfg, steps=3, n_samples=4, out_dir=tmp_path, sample_every=2)
    assert len(res.history) == 3
    lines = (tmp_path / "losses.csv").read_text().splitlines()
    assert lines[0] == "step,l_gd,l_gs,l_r,l_gj,l_t,l_n,l_adv,total"
    assert len(lines) == 4
    assert (tmp_path / "samples_00002.png").exists() and (tmp_path / "samples_00003.png").exists()
    assert (tmp_path / "checkpoint.bin").exists() and (tmp_path / "checkpoint.json").exists()
    assert (tmp_path / "config.json").exists()
