"""Encoder-decoder segmentation network with skip connections.

Takes 3-channel images in [0, 1], returns a single-channel logit map of
the same spatial size. Depth is the number of poolings, so inputs must be
divisible by 2**depth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn


@dataclass(frozen=True)
class UNetArch:
    depth: int = 4
    base_width: int = 16
    convs_per_stage: int = 2

    def to_dict(self) -> dict:
        return {"depth": self.depth, "base_width": self.base_width,
                "convs_per_stage": self.convs_per_stage}

    @classmethod
    def from_dict(cls, d: dict) -> "UNetArch":
        return cls(depth=int(d["depth"]), base_width=int(d["base_width"]),
                   convs_per_stage=int(d["convs_per_stage"]))


class _ConvStage(nn.Module):
    def __init__(self, cin: int, cout: int, n: int):
        super().__init__()
        layers = []
        for i in range(n):
            layers += [nn.Conv2d(cin if i == 0 else cout, cout, 3, padding=1),
                       nn.ReLU(inplace=True)]
        self.body = nn.Sequential(*layers)

    def forward(self, x):
        return self.body(x)


class UNet(nn.Module):
    def __init__(self, arch: UNetArch = UNetArch()):
        super().__init__()
        self.arch = arch
        widths = [arch.base_width * (2 ** i) for i in range(arch.depth + 1)]
        self.encoder = nn.ModuleList()
        cin = 3
        for w in widths[:-1]:
            self.encoder.append(_ConvStage(cin, w, arch.convs_per_stage))
            cin = w
        self.bottleneck = _ConvStage(cin, widths[-1], arch.convs_per_stage)
        self.decoder = nn.ModuleList()
        cin = widths[-1]
        for w in reversed(widths[:-1]):
            self.decoder.append(_ConvStage(cin + w, w, arch.convs_per_stage))
            cin = w
        self.head = nn.Conv2d(cin, 1, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        div = 2 ** self.arch.depth
        if x.ndim != 4 or x.shape[1] != 3:
            raise ValueError(f"expected (N, 3, H, W) input, got {tuple(x.shape)}")
        if x.shape[2] % div or x.shape[3] % div:
            raise ValueError(
                f"input size {tuple(x.shape[2:])} must be divisible by {div} "
                f"(depth {self.arch.depth})")
        skips = []
        for stage in self.encoder:
            x = stage(x)
            skips.append(x)
            x = F.max_pool2d(x, 2)
        x = self.bottleneck(x)
        for stage, skip in zip(self.decoder, reversed(skips)):
            x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = stage(torch.cat([x, skip], dim=1))
        return self.head(x)


def build_model(arch: UNetArch, init_seed: int | None = None) -> UNet:
    if init_seed is not None:
        torch.manual_seed(init_seed)
    return UNet(arch)


def images_to_tensor(images) -> torch.Tensor:
    """Stack HxWx3 uint8 images into a (N, 3, H, W) float tensor in [0, 1]."""
    arr = np.stack([np.asarray(im) for im in images])
    if arr.dtype != np.uint8:
        raise ValueError(f"expected uint8 images, got {arr.dtype}")
    t = torch.from_numpy(arr.astype(np.float32) / 255.0)
    return t.permute(0, 3, 1, 2).contiguous()


def masks_to_tensor(masks) -> torch.Tensor:
    arr = np.stack([np.asarray(m, dtype=np.float32) for m in masks])
    return torch.from_numpy(arr).unsqueeze(1)


@torch.no_grad()
def forward_masks(model: nn.Module, images, threshold: float = 0.5) -> np.ndarray:
    """Predict boolean masks for a batch of uint8 images (at network size)."""
    model.eval()
    logits = model(images_to_tensor(images))
    probs = torch.sigmoid(logits).squeeze(1).numpy()
    return probs >= threshold
