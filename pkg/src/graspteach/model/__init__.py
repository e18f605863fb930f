from .augment import AugmentConfig, augment_sample
from .checkpoint import Checkpoint, ModelParams, load_checkpoint, save_checkpoint
from .losses import compute_loss
from .reptile import (
    MetaTrainConfig,
    inner_adapt,
    meta_train,
    meta_validate,
    reptile_meta_step,
)
from .unet import UNet, UNetArch, build_model, forward_masks

__all__ = [
    "AugmentConfig",
    "augment_sample",
    "Checkpoint",
    "ModelParams",
    "load_checkpoint",
    "save_checkpoint",
    "compute_loss",
    "MetaTrainConfig",
    "inner_adapt",
    "meta_train",
    "meta_validate",
    "reptile_meta_step",
    "UNet",
    "UNetArch",
    "build_model",
    "forward_masks",
]
