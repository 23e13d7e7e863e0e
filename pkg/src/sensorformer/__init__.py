"""Sensorformer: two-stage cross-patch attention for multivariate forecasting."""
from .model import ModelConfig, build_model, forward, load_checkpoint, save_checkpoint
from .numerics.kernels import BACKEND as KERNEL_BACKEND
from .patching import PatchConfig

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "ModelConfig",
    "PatchConfig",
    "build_model",
    "forward",
    "load_checkpoint",
    "save_checkpoint",
]
