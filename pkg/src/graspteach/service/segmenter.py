"""Click-driven segmentation without learned weights.

A pixel belongs to the mask when its geodesic cost (over color + spatial
edge weights) to the positive seeds is within the cutoff and not larger
than its cost to the negative seeds. Learned segmenters can be registered
under the same interface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels


@dataclass
class GeodesicParams:
    color_weight: float = 1.0
    spatial_weight: float = 0.005
    max_cost: float = 0.5

    def to_dict(self) -> dict:
        return {"color_weight": self.color_weight, "spatial_weight": self.spatial_weight,
                "max_cost": self.max_cost}


def _seed_array(clicks) -> np.ndarray:
    # clicks are (x, y); the cost maps index (row=v=y, col=u=x)
    return np.array([(int(y), int(x)) for x, y in clicks], dtype=np.int64).reshape(-1, 2)


def default_click_segment(image: np.ndarray, positive_clicks, negative_clicks,
                          params: GeodesicParams | None = None) -> np.ndarray:
    """Segment by smaller geodesic cost to positive vs negative seeds.

    Ties go to the positive side. Pixels farther than max_cost from every
    positive seed are background. Raises on an empty positive set.
    """
    params = params or GeodesicParams()
    if len(positive_clicks) == 0:
        raise ValueError("no positive seed")
    img = np.asarray(image)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.dtype == np.uint8:
        img = img.astype(np.float64) / 255.0
    else:
        img = img.astype(np.float64)
    pos_cost = kernels.geodesic_costs(img, _seed_array(positive_clicks),
                                      params.color_weight, params.spatial_weight)
    mask = pos_cost <= params.max_cost
    if len(negative_clicks) > 0:
        neg_cost = kernels.geodesic_costs(img, _seed_array(negative_clicks),
                                          params.color_weight, params.spatial_weight)
        mask &= pos_cost <= neg_cost
    return mask


_SEGMENTERS = {"geodesic": default_click_segment}


def register_segmenter(name: str, fn) -> None:
    """Register a segmenter callable (image, pos_clicks, neg_clicks, params) -> mask."""
    _SEGMENTERS[name] = fn


def get_segmenter(name: str):
    try:
        return _SEGMENTERS[name]
    except KeyError:
        raise KeyError(f"unknown segmenter {name!r}; registered: {sorted(_SEGMENTERS)}")
