"""Paired image/mask augmentation for few-shot support samples.

Geometric transforms (rotation, horizontal flip) are applied identically
to image and mask with nearest-neighbor resampling, so the pair stays
pixel-aligned. Photometric transforms (Gaussian blur, brightness,
contrast, hue) touch the image only. Geometric and photometric draws come
from independent seed streams, so disabling one never shifts the other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage


@dataclass
class AugmentConfig:
    rotate_deg: float = 30.0
    flip_prob: float = 0.5
    blur_sigma_max: float = 1.5
    brightness: float = 0.2
    contrast: float = 0.2
    hue: float = 0.05

    def to_dict(self) -> dict:
        return {"rotate_deg": self.rotate_deg, "flip_prob": self.flip_prob,
                "blur_sigma_max": self.blur_sigma_max, "brightness": self.brightness,
                "contrast": self.contrast, "hue": self.hue}


def hflip(arr: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(arr[:, ::-1])


def rotate_nearest(arr: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate about the image center, same output size, zero fill."""
    if angle_deg == 0.0:
        return arr
    return ndimage.rotate(arr, angle_deg, axes=(1, 0), reshape=False,
                          order=0, mode="constant", cval=0)


def shift_hue(image: np.ndarray, amount: float) -> np.ndarray:
    """Rotate hue by ``amount`` (fraction of a full turn) via 8-bit HSV."""
    hsv = np.asarray(Image.fromarray(image).convert("HSV")).copy()
    hsv[..., 0] = (hsv[..., 0].astype(np.int32) + int(round(amount * 255))) % 256
    return np.asarray(Image.fromarray(hsv, mode="HSV").convert("RGB"))


def augment_sample(image: np.ndarray, mask: np.ndarray, seed,
                   cfg: AugmentConfig | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Return an augmented (image, mask) pair; deterministic given seed."""
    cfg = cfg or AugmentConfig()
    if image.shape[:2] != mask.shape:
        raise ValueError("image and mask dimensions differ")
    geo, photo = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2)]

    angle = geo.uniform(-cfg.rotate_deg, cfg.rotate_deg)
    do_flip = geo.uniform() < cfg.flip_prob

    out_img = rotate_nearest(image, angle)
    out_mask = rotate_nearest(mask.astype(np.uint8), angle) > 0
    if do_flip:
        out_img = hflip(out_img)
        out_mask = hflip(out_mask)

    sigma = photo.uniform(0.0, cfg.blur_sigma_max)
    brightness = photo.uniform(1.0 - cfg.brightness, 1.0 + cfg.brightness)
    contrast = photo.uniform(1.0 - cfg.contrast, 1.0 + cfg.contrast)
    hue = photo.uniform(-cfg.hue, cfg.hue)

    arr = out_img.astype(np.float64)
    if sigma > 1e-3:
        arr = ndimage.gaussian_filter(arr, sigma=(sigma, sigma, 0.0))
    arr = arr * brightness
    arr = (arr - arr.mean()) * contrast + arr.mean()
    out_img = np.clip(arr, 0, 255).astype(np.uint8)
    if hue != 0.0:
        out_img = shift_hue(out_img, hue)
    return out_img, out_mask
