"""Drops small spurious components from a predicted binary mask."""

from __future__ import annotations

import numpy as np

from .. import kernels


def remove_outliers(mask: np.ndarray, ratio: float = 0.5,
                    connectivity: int = 8) -> np.ndarray:
    """Keep only components with area >= ratio * largest component area.

    The comparison is strict "less than" for removal, so a component at
    exactly the ratio boundary is kept. Empty masks pass through.
    """
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"ratio must be in [0, 1], got {ratio}")
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    mask = np.asarray(mask, dtype=bool)
    labels, count = kernels.label_components(mask.astype(np.uint8), connectivity)
    if count <= 1:
        return mask.copy()
    areas = np.bincount(labels.reshape(-1), minlength=count + 1)[1:]
    cutoff = ratio * areas.max()
    keep = np.flatnonzero(areas >= cutoff) + 1
    return np.isin(labels, keep)
