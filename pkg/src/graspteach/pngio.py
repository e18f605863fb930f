"""PNG read/write helpers for images, label maps, and binary masks.

All writes are atomic (tempfile + rename) so partially written files never
appear in task directories.
"""

from __future__ import annotations

import io
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_png(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    _to_pil(arr).save(buf, format="PNG")
    return buf.getvalue()


def _to_pil(arr: np.ndarray) -> Image.Image:
    if arr.dtype == bool:
        return Image.fromarray((arr * np.uint8(255)), mode="L")
    if arr.dtype == np.uint16:
        return Image.fromarray(arr)  # 16-bit single channel ("I;16")
    return Image.fromarray(arr)


def write_rgb(path, image: np.ndarray) -> None:
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValueError(f"expected HxWx3 uint8 image, got {image.shape} {image.dtype}")
    _atomic_write_bytes(Path(path), encode_png(image))


def read_rgb(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def write_mask(path, mask: np.ndarray) -> None:
    """Binary mask as 8-bit PNG with values 0/255."""
    _atomic_write_bytes(Path(path), encode_png(np.asarray(mask, dtype=bool)))


def read_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return arr >= 128


def write_labels(path, labels: np.ndarray) -> None:
    """Instance id map as 16-bit single-channel PNG (0 = background)."""
    arr = np.asarray(labels)
    if arr.min() < 0 or arr.max() > np.iinfo(np.uint16).max:
        raise ValueError("label ids must fit uint16")
    _atomic_write_bytes(Path(path), encode_png(arr.astype(np.uint16)))


def read_labels(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im)
    return arr.astype(np.int32)
