"""Segmentation losses: binary cross-entropy, soft Dice, and their sum."""

from __future__ import annotations

import torch
import torch.nn.functional as F

LOSS_KINDS = ("bce", "dice", "bce+dice")

DICE_EPS = 1e-6


def bce_loss(logits: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    return F.binary_cross_entropy_with_logits(logits, target)


def dice_loss(logits: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    p = torch.sigmoid(logits)
    inter = (p * target).sum()
    return 1.0 - (2.0 * inter + DICE_EPS) / (p.sum() + target.sum() + DICE_EPS)


def compute_loss(kind: str, logits: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Scalar loss of the requested kind; shapes of logits/target must match."""
    if logits.shape != target.shape:
        raise ValueError(f"logits shape {tuple(logits.shape)} != target {tuple(target.shape)}")
    target = target.to(logits.dtype)
    if kind == "bce":
        return bce_loss(logits, target)
    if kind == "dice":
        return dice_loss(logits, target)
    if kind == "bce+dice":
        return bce_loss(logits, target) + dice_loss(logits, target)
    raise ValueError(f"unknown loss kind {kind!r}, expected one of {LOSS_KINDS}")
