"""Turns sparse grasp-hit count maps into smooth binary grasp-area masks:
normalize, Gaussian blur, grayscale erode, repeated dilate, threshold."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels


def default_sigma(size: int) -> float:
    """Kernel-size-to-sigma convention used when no sigma is given."""
    return 0.3 * ((size - 1) * 0.5 - 1) + 0.8


@dataclass
class MorphConfig:
    gaussian_size: int = 5
    erode_size: int = 7
    dilate_size: int = 15
    dilate_count: int = 2
    gaussian_sigma: float | None = None
    threshold: float = 0.1

    def __post_init__(self):
        for name in ("gaussian_size", "erode_size", "dilate_size"):
            v = getattr(self, name)
            if v <= 0 or v % 2 == 0:
                raise ValueError(f"{name} must be odd and positive, got {v}")
        if self.dilate_count < 0:
            raise ValueError("dilate_count must be >= 0")
        if not 0 < self.threshold <= 1:
            raise ValueError("threshold must be in (0, 1]")

    @property
    def sigma(self) -> float:
        return self.gaussian_sigma if self.gaussian_sigma is not None else default_sigma(self.gaussian_size)

    def to_dict(self) -> dict:
        return {"gaussian_size": self.gaussian_size, "erode_size": self.erode_size,
                "dilate_size": self.dilate_size, "dilate_count": self.dilate_count,
                "gaussian_sigma": self.sigma, "threshold": self.threshold}


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """Normalized isotropic 2D Gaussian kernel."""
    r = size // 2
    ax = np.arange(-r, r + 1, dtype=np.float64)
    xx, yy = np.meshgrid(ax, ax)
    k = np.exp(-(xx * xx + yy * yy) / (2.0 * sigma * sigma))
    return k / k.sum()


def location_map_to_mask(counts: np.ndarray, cfg: MorphConfig | None = None) -> np.ndarray:
    """Binary grasp-area mask from a grasp location (hit count) map.

    Pipeline: normalize counts by their max, blur, min-filter erode,
    ``dilate_count`` max-filter dilations, then threshold. An all-zero
    map short-circuits to an empty mask.
    """
    cfg = cfg or MorphConfig()
    counts = np.asarray(counts)
    if counts.ndim != 2:
        raise ValueError(f"counts must be 2D, got shape {counts.shape}")
    if (counts < 0).any():
        raise ValueError("counts must be non-negative")
    peak = counts.max()
    if peak == 0:
        return np.zeros(counts.shape, dtype=bool)
    img = counts.astype(np.float64) / float(peak)
    img = kernels.convolve2d(img, gaussian_kernel(cfg.gaussian_size, cfg.sigma))
    img = kernels.min_filter(img, cfg.erode_size)
    for _ in range(cfg.dilate_count):
        img = kernels.max_filter(img, cfg.dilate_size)
    return img >= cfg.threshold


def dilate_mask(mask: np.ndarray, margin_px: int) -> np.ndarray:
    """Binary dilation by a square structuring element of radius margin_px."""
    if margin_px <= 0:
        return mask.astype(bool)
    grown = kernels.max_filter(mask.astype(np.float64), 2 * margin_px + 1)
    return grown > 0.5
