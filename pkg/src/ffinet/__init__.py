"""Occluded video prediction with Fourier-convolution inpainting, built on a small numpy autodiff core."""

__version__ = "0.1.0"

from .model import ModelConfig, ModelParams, forward, init_params
from .occlusion import MaskPolicy, MaskSet, MaskSpec, apply_masks, generate_mask
from .presets import preset
from .tensor import ComplexSpectrum, Tensor, irfft2, no_grad, rfft2
from .train import TrainConfig, train

__all__ = [
    "ComplexSpectrum", "MaskPolicy", "MaskSet", "MaskSpec", "ModelConfig", "ModelParams", "Tensor",
    "TrainConfig", "apply_masks", "forward", "generate_mask", "init_params", "irfft2", "no_grad", "preset",
    "rfft2", "train",
]
