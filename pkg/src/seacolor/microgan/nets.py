"""U-Net generators and a single-block attention discriminator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from ..errors import ShapeMismatch
from . import autodiff as ad
from .autodiff import Tensor

LEAK = 0.2

GENERATOR_CHANNELS = {"Gd": (3, 3), "Gs": (3, 1), "Gt": (3, 1), "Gj": (3, 3)}


class Module:
    """Container of named parameters, kept in creation order."""

    def __init__(self):
        self._params: Dict[str, Tensor] = {}

    def param(self, name: str, data) -> Tensor:
        t = ad.parameter(data, name=name)
        self._params[name] = t
        return t

    def named_parameters(self) -> List[Tuple[str, Tensor]]:
        return list(self._params.items())

    def parameters(self) -> List[Tensor]:
        return list(self._params.values())

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self._params.values())

    def zero_grad(self):
        for p in self._params.values():
            p.grad = None

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self._params.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        missing = set(self._params) - set(state)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for k, p in self._params.items():
            if state[k].shape != p.data.shape:
                raise ShapeMismatch(f"{k}: {state[k].shape} vs {p.data.shape}")
            p.data = np.array(state[k], dtype=ad.DTYPE)


def _uniform(rng, shape, fan_in):
    # He-style bound for leaky-ReLU fan-in scaling
    bound = math.sqrt(6.0 / ((1.0 + LEAK ** 2) * fan_in))
    return rng.uniform(-bound, bound, size=shape)


class _ConvSpec:
    __slots__ = ("w", "b", "stride", "pad")

    def __init__(self, w, b, stride, pad):
        self.w, self.b, self.stride, self.pad = w, b, stride, pad

    def __call__(self, x):
        return ad.conv2d(x, self.w, self.b, stride=self.stride, pad=self.pad)


def conv_param_count(cin: int, cout: int, k: int) -> int:
    return k * k * cin * cout + cout


@dataclass(frozen=True)
class GeneratorSpec:
    name: str
    in_channels: int = 3
    out_channels: int = 3
    depth: int = 3
    base_width: int = 16

    @classmethod
    def for_name(cls, name: str, depth: int = 3, base_width: int = 16) -> "GeneratorSpec":
        if name not in GENERATOR_CHANNELS:
            raise ValueError(f"unknown generator {name!r}; expected one of {sorted(GENERATOR_CHANNELS)}")
        cin, cout = GENERATOR_CHANNELS[name]
        return cls(name, cin, cout, depth, base_width)

    def widths(self) -> List[int]:
        return [self.base_width * 2 ** i for i in range(self.depth)]


class UNet(Module):
    """Encoder/decoder with skip connections and a sigmoid output head.

    Each encoder level: 3x3 conv + leaky ReLU, then a stride-2 3x3 conv +
    leaky ReLU. The bottleneck doubles the deepest width. Each decoder level:
    nearest 2x upsample, concatenation with the matching encoder features,
    3x3 conv + leaky ReLU. A 1x1 conv and a sigmoid produce the output.
    """

    def __init__(self, spec: GeneratorSpec, seed: int):
        super().__init__()
        self.spec = spec
        rng = np.random.default_rng(seed)
        widths = spec.widths()
        self.enc, self.down, self.dec = [], [], []

        def conv(name, cin, cout, k=3, stride=1):
            w = self.param(f"{name}.w", _uniform(rng, (cout, cin, k, k), cin * k * k))
            b = self.param(f"{name}.b", np.zeros(cout))
            return _ConvSpec(w, b, stride, k // 2)

        c = spec.in_channels
        for i, w in enumerate(widths):
            self.enc.append(conv(f"enc{i}", c, w))
            self.down.append(conv(f"down{i}", w, w, stride=2))
            c = w
        self.bottleneck = conv("bottleneck", c, 2 * c)
        c = 2 * c
        for i in reversed(range(spec.depth)):
            self.dec.append(conv(f"dec{i}", c + widths[i], widths[i]))
            c = widths[i]
        self.head = conv("head", c, spec.out_channels, k=1)

    def __call__(self, x: Tensor) -> Tensor:
        size = x.shape[2]
        if x.shape[1] != self.spec.in_channels:
            raise ShapeMismatch(f"{self.spec.name} expects {self.spec.in_channels} channels")
        if size % (2 ** self.spec.depth) or x.shape[3] % (2 ** self.spec.depth):
            raise ShapeMismatch(f"spatial size must be divisible by {2 ** self.spec.depth}")
        skips = []
        h = x
        for enc, down in zip(self.enc, self.down):
            h = ad.leaky_relu(enc(h), LEAK)
            skips.append(h)
            h = ad.leaky_relu(down(h), LEAK)
        h = ad.leaky_relu(self.bottleneck(h), LEAK)
        for dec, skip in zip(self.dec, reversed(skips)):
            h = ad.upsample_nearest(h, 2)
            h = ad.leaky_relu(dec(ad.concat([h, skip], axis=1)), LEAK)
        return ad.sigmoid(self.head(h))


def generator_param_count(spec: GeneratorSpec) -> int:
    """Closed-form parameter count of :class:`UNet` for ``spec``."""
    widths = spec.widths()
    total = 0
    c = spec.in_channels
    for w in widths:
        total += conv_param_count(c, w, 3) + conv_param_count(w, w, 3)
        c = w
    total += conv_param_count(c, 2 * c, 3)
    c = 2 * c
    for w in reversed(widths):
        total += conv_param_count(c + w, w, 3)
        c = w
    return total + conv_param_count(c, spec.out_channels, 1)


def build_generator(spec: GeneratorSpec, seed: int) -> UNet:
    return UNet(spec, seed)


class AttentionDiscriminator(Module):
    """Patch embedding, one pre-norm self-attention block with MLP, mean-pooled sigmoid head.

    The input image ``x`` and the candidate are concatenated along channels
    before patchification, so the output scores the pair.
    """

    def __init__(self, image_size: int = 32, patch: int = 4, dim: int = 32,
                 in_channels: int = 6, mlp_ratio: int = 2, seed: int = 0):
        super().__init__()
        if image_size % patch:
            raise ShapeMismatch(f"image size {image_size} not divisible by patch {patch}")
        rng = np.random.default_rng(seed)
        self.image_size, self.patch, self.dim, self.in_channels = image_size, patch, dim, in_channels
        self.tokens = (image_size // patch) ** 2
        pdim = in_channels * patch * patch
        hidden = mlp_ratio * dim

        def lin(name, n_in, n_out):
            w = self.param(f"{name}.w", rng.uniform(-1, 1, (n_in, n_out)) * math.sqrt(3.0 / n_in))
            b = self.param(f"{name}.b", np.zeros(n_out))
            return w, b

        self.embed = lin("embed", pdim, dim)
        self.pos = self.param("pos", rng.normal(0.0, 0.02, (self.tokens, dim)))
        self.ln1 = (self.param("ln1.w", np.ones(dim)), self.param("ln1.b", np.zeros(dim)))
        self.q = lin("attn.q", dim, dim)
        self.k = lin("attn.k", dim, dim)
        self.v = lin("attn.v", dim, dim)
        self.o = lin("attn.o", dim, dim)
        self.ln2 = (self.param("ln2.w", np.ones(dim)), self.param("ln2.b", np.zeros(dim)))
        self.fc1 = lin("mlp.fc1", dim, hidden)
        self.fc2 = lin("mlp.fc2", hidden, dim)
        self.ln_out = (self.param("ln_out.w", np.ones(dim)), self.param("ln_out.b", np.zeros(dim)))
        self.head = lin("head", dim, 1)

    @staticmethod
    def _linear(x, wb):
        return ad.matmul(x, wb[0]) + wb[1]

    def patchify(self, x: Tensor) -> Tensor:
        n, c, h, w = x.shape
        p = self.patch
        t = x.reshape(n, c, h // p, p, w // p, p).transpose(0, 2, 4, 1, 3, 5)
        return t.reshape(n, (h // p) * (w // p), c * p * p)

    def __call__(self, x: Tensor, candidate: Tensor) -> Tensor:
        """Probability, shape (N, 1), that ``candidate`` is real given ``x``."""
        z_in = ad.concat([x, candidate], axis=1)
        n, c, h, w = z_in.shape
        if c != self.in_channels or h != self.image_size or w != self.image_size:
            raise ShapeMismatch(
                f"discriminator expects (N, {self.in_channels}, {self.image_size}, {self.image_size}), got {z_in.shape}")
        z = self._linear(self.patchify(z_in), self.embed) + self.pos
        h1 = ad.layer_norm(z, *self.ln1)
        q, k, v = self._linear(h1, self.q), self._linear(h1, self.k), self._linear(h1, self.v)
        att = ad.softmax(ad.matmul(q, k.transpose(0, 2, 1)) * (1.0 / math.sqrt(self.dim)), axis=-1)
        z = z + self._linear(ad.matmul(att, v), self.o)
        h2 = ad.layer_norm(z, *self.ln2)
        z = z + self._linear(ad.leaky_relu(self._linear(h2, self.fc1), LEAK), self.fc2)
        pooled = ad.layer_norm(z.mean(axis=1), *self.ln_out)
        return ad.sigmoid(self._linear(pooled, self.head))


def build_discriminator(patch: int = 4, dim: int = 32, seed: int = 0, image_size: int = 32) -> AttentionDiscriminator:
    return AttentionDiscriminator(image_size=image_size, patch=patch, dim=dim, seed=seed)
