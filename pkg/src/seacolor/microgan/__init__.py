"""Toy-scale four-generator adversarial trainer on a numpy autodiff engine."""

from .autodiff import Tensor
from .data import SyntheticBatch, make_synthetic_batch
from .nets import GeneratorSpec, build_discriminator, build_generator, generator_param_count
from .optim import Adam
from .train import Networks, TrainConfig, train_step, train_toy

__all__ = [
    "Tensor", "SyntheticBatch", "make_synthetic_batch", "GeneratorSpec", "build_discriminator",
    "build_generator", "generator_param_count", "Adam", "Networks", "TrainConfig", "train_step", "train_toy",
]
