"""Water-column removal and in-air colour restoration for water-covered imagery."""

from .errors import SeacolorError
from .imagecore import RasterImage, WaterMask, linear_stretch, masked_mean_abs, read_image, write_image
from .hypercube import HyperCube, compose_rgb, load_cube, save_cube
from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = [
    "SeacolorError", "RasterImage", "WaterMask", "linear_stretch", "masked_mean_abs", "read_image",
    "write_image", "HyperCube", "compose_rgb", "load_cube", "save_cube", "KERNEL_BACKEND",
]
