"""Scene bundle loading.

A scene bundle directory holds one captured view:
    rgb.png      8-bit RGB
    labels.png   16-bit single-channel instance ids, 0 = background
    camera.json  {fx, fy, cx, cy, width, height, extrinsic: [16 row-major]}
    grasps.json  [{rotation: [9 row-major], translation: [3], width, object_id}, ...]

A scene sequence directory contains one bundle subdirectory per frame,
ordered by name.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import pngio
from ..geometry import CameraModel, GraspPose


@dataclass
class SceneBundle:
    rgb: np.ndarray
    object_labels: np.ndarray
    camera: CameraModel
    grasps: list[GraspPose]
    scene_id: str
    frame_id: str

    def __post_init__(self):
        h, w = self.object_labels.shape
        if self.rgb.shape[:2] != (h, w):
            raise ValueError("rgb and label dimensions differ")
        if (self.camera.height, self.camera.width) != (h, w):
            raise ValueError("camera size does not match images")

    def object_ids(self) -> list[int]:
        return sorted({g.object_id for g in self.grasps})


def load_grasps(path) -> list[GraspPose]:
    with open(path) as f:
        doc = json.load(f)
    items = doc["grasps"] if isinstance(doc, dict) else doc
    return [GraspPose.from_dict(d) for d in items]


def save_grasps(path, grasps: list[GraspPose], extra: dict | None = None) -> None:
    payload = [g.to_dict() for g in grasps]
    doc = {"grasps": payload, **(extra or {})} if extra else payload
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")


def load_camera(path) -> CameraModel:
    with open(path) as f:
        return CameraModel.from_dict(json.load(f))


def load_scene_bundle(bundle_dir, scene_id: str | None = None,
                      frame_id: str | None = None) -> SceneBundle:
    bundle_dir = Path(bundle_dir)
    return SceneBundle(
        rgb=pngio.read_rgb(bundle_dir / "rgb.png"),
        object_labels=pngio.read_labels(bundle_dir / "labels.png"),
        camera=load_camera(bundle_dir / "camera.json"),
        grasps=load_grasps(bundle_dir / "grasps.json"),
        scene_id=scene_id if scene_id is not None else bundle_dir.parent.name,
        frame_id=frame_id if frame_id is not None else bundle_dir.name,
    )


def list_frame_dirs(scene_dir) -> list[Path]:
    scene_dir = Path(scene_dir)
    frames = [p for p in scene_dir.iterdir() if p.is_dir() and (p / "rgb.png").exists()]
    return sorted(frames, key=lambda p: p.name)


def load_scene_sequence(scene_dir) -> list[SceneBundle]:
    scene_dir = Path(scene_dir)
    return [load_scene_bundle(p, scene_id=scene_dir.name, frame_id=p.name)
            for p in list_frame_dirs(scene_dir)]
