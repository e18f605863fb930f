"""Restricts 6-DOF grasp candidates to a predicted grasp-area mask.

A grasp is kept when the projected midpoint of its fingertips lands
inside the mask, optionally dilated by a pixel margin to tolerate tight
predictions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import CameraModel, GraspPose, grasp_center_pixel
from .morphology import dilate_mask


@dataclass
class GraspCandidateSet:
    grasps: list[GraspPose]
    camera: CameraModel

    def __post_init__(self):
        for g in self.grasps:
            if g.score is not None and not np.isfinite(g.score):
                raise ValueError("grasp scores must be finite")


@dataclass
class CoverageStats:
    n_total: int
    n_in_view: int
    n_kept: int
    kept_fraction: float

    def to_dict(self) -> dict:
        return {"n_total": self.n_total, "n_in_view": self.n_in_view,
                "n_kept": self.n_kept, "kept_fraction": self.kept_fraction}


def _check_mask(candidates: GraspCandidateSet, mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    cam = candidates.camera
    if mask.shape != (cam.height, cam.width):
        raise ValueError(f"mask shape {mask.shape} does not match camera "
                         f"({cam.height}, {cam.width})")
    return mask


def filter_grasps_by_mask(candidates: GraspCandidateSet, mask: np.ndarray,
                          margin_px: int = 0, closing_axis=None) -> GraspCandidateSet:
    """Keep grasps whose center pixel falls in the (dilated) mask.

    Out-of-view grasps are dropped; ordering and scores are preserved.
    """
    mask = _check_mask(candidates, mask)
    if margin_px > 0:
        mask = dilate_mask(mask, margin_px)
    kept = []
    for g in candidates.grasps:
        px = grasp_center_pixel(candidates.camera, g, closing_axis)
        if px is not None and mask[px[1], px[0]]:
            kept.append(g)
    return GraspCandidateSet(grasps=kept, camera=candidates.camera)


def grasp_coverage(candidates: GraspCandidateSet, mask: np.ndarray,
                   margin_px: int = 0, closing_axis=None) -> CoverageStats:
    mask = _check_mask(candidates, mask)
    if margin_px > 0:
        mask = dilate_mask(mask, margin_px)
    n_total = len(candidates.grasps)
    n_in_view = 0
    n_kept = 0
    for g in candidates.grasps:
        px = grasp_center_pixel(candidates.camera, g, closing_axis)
        if px is None:
            continue
        n_in_view += 1
        if mask[px[1], px[0]]:
            n_kept += 1
    return CoverageStats(n_total=n_total, n_in_view=n_in_view, n_kept=n_kept,
                         kept_fraction=n_kept / max(n_total, 1))
