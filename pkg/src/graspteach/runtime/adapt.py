"""Few-shot adaptation from a checkpoint and mask prediction on scenes of
arbitrary size (resized to the network grid internally)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image

from ..model.checkpoint import Checkpoint, ModelParams
from ..model.reptile import MetaTrainConfig, ModelRunner, inner_adapt
from ..model.unet import images_to_tensor


@dataclass
class AdaptedModel:
    params: ModelParams
    provenance: dict


def config_from_checkpoint(ckpt: Checkpoint) -> MetaTrainConfig:
    cfg_dict = ckpt.meta.get("config")
    if cfg_dict:
        return MetaTrainConfig.from_dict(cfg_dict)
    return MetaTrainConfig(arch=ckpt.params.arch)


def adapt_few_shot(ckpt: Checkpoint, support, steps: int | None = None,
                   cfg: MetaTrainConfig | None = None, task_id: str = "",
                   seed=0, runner: ModelRunner | None = None) -> AdaptedModel:
    """Adapt a copy of the checkpoint on the support samples.

    ``steps`` defaults to the config's test-time step count (60). The
    checkpoint itself is never modified.
    """
    cfg = cfg or config_from_checkpoint(ckpt)
    if steps is None:
        steps = cfg.inner_steps_test
    if steps < 0:
        raise ValueError("steps must be >= 0")
    params = inner_adapt(ckpt.params, support, steps, cfg, seed=seed, runner=runner)
    return AdaptedModel(params=params, provenance={
        "checkpoint_id": ckpt.checkpoint_id, "task_id": task_id,
        "shots": len(support), "steps": steps})


def _fit_size(size: int, div: int) -> int:
    return max(div, int(round(size / div)) * div)


def predict_mask(model: AdaptedModel | ModelParams, image: np.ndarray,
                 threshold: float = 0.5, runner: ModelRunner | None = None) -> np.ndarray:
    """Predict a boolean mask for one RGB image at its native resolution.

    Images whose sides are not divisible by the network grid are resized
    for inference and the mask is restored with nearest-neighbor.
    """
    params = model.params if isinstance(model, AdaptedModel) else model
    runner = runner or ModelRunner()
    net = runner.model_for(params.arch)
    net.load_state_dict(params.tensors)
    net.eval()

    h, w = image.shape[:2]
    div = 2 ** params.arch.depth
    nh, nw = _fit_size(h, div), _fit_size(w, div)
    net_input = image
    if (nh, nw) != (h, w):
        net_input = np.asarray(
            Image.fromarray(image).resize((nw, nh), Image.Resampling.BILINEAR))
    with torch.no_grad():
        logits = net(images_to_tensor([net_input]))
        probs = torch.sigmoid(logits)[0, 0].numpy()
    mask = probs >= threshold
    if (nh, nw) != (h, w):
        mask = np.asarray(Image.fromarray(mask.astype(np.uint8) * 255).resize(
            (w, h), Image.Resampling.NEAREST)) >= 128
    return mask
