"""Cycle-alternating backprojection upscaler for acoustic map images."""

from .data import PairDataset, load_pairs
from .metrics import psnr, ssim
from .model import (
    CascadedUpscaler,
    FeatureState,
    ModelConfig,
    UpscaleStage,
    parameter_count,
)
from .train import (
    TrainConfig,
    load_checkpoint,
    progressive_train,
    save_checkpoint,
    train_model,
    train_scale,
)

__version__ = "0.1.0"
