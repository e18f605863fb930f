"""Builds grasp-area segmentation tasks from annotated scene sequences.

For every (scene, object) pair: project the grasp centers of selected
frames into pixel hit maps, smooth them into area masks, intersect with
the object's instance region, and keep the first ``images_per_task``
frames whose masks pass the quality criteria.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import kernels
from ..geometry import grasp_center_pixel
from ..morphology import MorphConfig, location_map_to_mask
from .scenes import SceneBundle, list_frame_dirs, load_scene_bundle
from .tasks import TaskSample, write_json, write_task


@dataclass
class QualityCriteria:
    min_area_px: int = 400
    max_components: int = 2
    min_largest_share: float = 0.6

    def to_dict(self) -> dict:
        return {"min_area_px": self.min_area_px, "max_components": self.max_components,
                "min_largest_share": self.min_largest_share}


@dataclass
class BuildConfig:
    frame_skip: int = 20
    images_per_task: int = 9
    morph: MorphConfig = field(default_factory=MorphConfig)
    criteria: QualityCriteria = field(default_factory=QualityCriteria)
    closing_axis: tuple[float, float, float] = (0.0, 1.0, 0.0)
    seed: int = 0

    def to_dict(self) -> dict:
        return {"frame_skip": self.frame_skip, "images_per_task": self.images_per_task,
                "morph": self.morph.to_dict(), "criteria": self.criteria.to_dict(),
                "closing_axis": list(self.closing_axis), "seed": self.seed}


def select_frames(sequence_length: int, frame_skip: int, max_images: int) -> list[int]:
    """Frame indices 0, skip+1, 2(skip+1), ... capped at max_images."""
    if sequence_length <= 0:
        raise ValueError("sequence_length must be positive")
    if frame_skip < 0:
        raise ValueError("frame_skip must be >= 0")
    stride = frame_skip + 1
    return list(range(0, sequence_length, stride))[:max_images]


def build_location_map(scene: SceneBundle, object_id: int,
                       closing_axis=None) -> np.ndarray:
    """Count per pixel how many of the object's grasp centers project there."""
    counts = np.zeros((scene.camera.height, scene.camera.width), dtype=np.int32)
    for grasp in scene.grasps:
        if grasp.object_id != object_id:
            continue
        px = grasp_center_pixel(scene.camera, grasp, closing_axis)
        if px is not None:
            counts[px[1], px[0]] += 1
    return counts


def finalize_sample(mask: np.ndarray, scene: SceneBundle, object_id: int,
                    criteria: QualityCriteria):
    """Clip the mask to the object region and apply the quality gates.

    Returns (mask, None) when accepted, (None, reason) when rejected.
    """
    if mask.shape != scene.object_labels.shape:
        raise ValueError("mask dimensions do not match scene")
    clipped = mask & (scene.object_labels == object_id)
    area = int(clipped.sum())
    if area < criteria.min_area_px:
        return None, "too_small"
    labels, count = kernels.label_components(clipped.astype(np.uint8), 8)
    if count > criteria.max_components:
        return None, "too_diverse"
    if count > 0:
        largest = int(np.bincount(labels.reshape(-1))[1:].max())
        if largest / area < criteria.min_largest_share:
            return None, "too_diverse"
    return clipped, None


def build_object_task(frames: list[SceneBundle], object_id: int, cfg: BuildConfig):
    """Accepted samples (capped at images_per_task) plus rejection log."""
    accepted: list[TaskSample] = []
    rejected: dict[str, str] = {}
    for scene in frames:
        if len(accepted) >= cfg.images_per_task:
            break
        counts = build_location_map(scene, object_id, cfg.closing_axis)
        mask = location_map_to_mask(counts, cfg.morph)
        final, reason = finalize_sample(mask, scene, object_id, cfg.criteria)
        if final is None:
            rejected[scene.frame_id] = reason
        else:
            accepted.append(TaskSample(image=scene.rgb, mask=final,
                                       scene_id=scene.scene_id, frame_id=scene.frame_id))
    return accepted, rejected


def assemble_task_dataset(scene_dirs, out_dir, cfg: BuildConfig | None = None) -> dict:
    """Build one task per (scene, object) into out_dir; returns the manifest.

    Scene parse failures are recorded and skipped; the build continues.
    """
    cfg = cfg or BuildConfig()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks, errors = [], []
    for scene_dir in sorted(Path(d) for d in scene_dirs):
        try:
            frame_dirs = list_frame_dirs(scene_dir)
            indices = select_frames(len(frame_dirs), cfg.frame_skip, len(frame_dirs))
            frames = [load_scene_bundle(frame_dirs[i], scene_id=scene_dir.name,
                                        frame_id=frame_dirs[i].name) for i in indices]
        except Exception as exc:  # per-scene failures must not stop the build
            errors.append({"scene": scene_dir.name, "error": str(exc)})
            continue
        object_ids = sorted({g.object_id for f in frames for g in f.grasps})
        for object_id in object_ids:
            task_id = f"{scene_dir.name}_obj{object_id:03d}"
            accepted, rejected = build_object_task(frames, object_id, cfg)
            record = {"task_id": task_id, "scene_id": scene_dir.name,
                      "object_id": object_id, "accepted": len(accepted),
                      "rejected": rejected, "emitted": len(accepted) >= cfg.images_per_task}
            if record["emitted"]:
                write_task(out_dir / task_id, task_id, accepted[:cfg.images_per_task])
            tasks.append(record)
    manifest = {"config": cfg.to_dict(), "tasks": tasks, "errors": errors,
                "n_emitted": sum(t["emitted"] for t in tasks)}
    write_json(out_dir / "build_manifest.json", manifest)
    return manifest
