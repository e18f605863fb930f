"""Few-shot task storage.

A task directory holds task.json plus the referenced image/mask PNGs:
    task.json  {task_id, samples: [{image, mask, scene_id, frame_id}]}
Masks are 8-bit PNGs with values 0/255. Samples keep manifest order;
protocol code decides which become support and which become query.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import pngio


@dataclass
class TaskSample:
    image: np.ndarray
    mask: np.ndarray
    scene_id: str = ""
    frame_id: str = ""

    def __post_init__(self):
        if self.image.shape[:2] != self.mask.shape:
            raise ValueError(
                f"mask {self.mask.shape} does not match image {self.image.shape[:2]}")


@dataclass
class FewShotTask:
    task_id: str
    support: list[TaskSample] = field(default_factory=list)
    query: list[TaskSample] = field(default_factory=list)

    @property
    def samples(self) -> list[TaskSample]:
        return self.support + self.query


def write_task(task_dir, task_id: str, samples: list[TaskSample]) -> dict:
    """Write samples and task.json; returns the manifest dict."""
    task_dir = Path(task_dir)
    task_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, s in enumerate(samples):
        image_name = f"image_{i:03d}.png"
        mask_name = f"mask_{i:03d}.png"
        pngio.write_rgb(task_dir / image_name, s.image)
        pngio.write_mask(task_dir / mask_name, s.mask)
        entries.append({"image": image_name, "mask": mask_name,
                        "scene_id": s.scene_id, "frame_id": s.frame_id})
    manifest = {"task_id": task_id, "samples": entries}
    write_json(task_dir / "task.json", manifest)
    return manifest


def append_sample(task_dir, task_id: str, sample: TaskSample) -> dict:
    """Add one sample to a task, creating it if needed; returns a record
    with the assigned shot index and file paths."""
    task_dir = Path(task_dir)
    task_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = task_dir / "task.json"
    if manifest_path.exists():
        with open(manifest_path) as f:
            manifest = json.load(f)
    else:
        manifest = {"task_id": task_id, "samples": []}
    idx = len(manifest["samples"])
    image_name = f"image_{idx:03d}.png"
    mask_name = f"mask_{idx:03d}.png"
    pngio.write_rgb(task_dir / image_name, sample.image)
    pngio.write_mask(task_dir / mask_name, sample.mask)
    manifest["samples"].append({"image": image_name, "mask": mask_name,
                                "scene_id": sample.scene_id, "frame_id": sample.frame_id})
    write_json(manifest_path, manifest)
    return {"task_id": task_id, "shot_index": idx,
            "image": str(task_dir / image_name), "mask": str(task_dir / mask_name)}


def load_task_samples(task_dir) -> tuple[str, list[TaskSample]]:
    task_dir = Path(task_dir)
    with open(task_dir / "task.json") as f:
        manifest = json.load(f)
    samples = [TaskSample(image=pngio.read_rgb(task_dir / e["image"]),
                          mask=pngio.read_mask(task_dir / e["mask"]),
                          scene_id=e.get("scene_id", ""), frame_id=e.get("frame_id", ""))
               for e in manifest["samples"]]
    return manifest["task_id"], samples


def load_task(task_dir, shots: int | None = None) -> FewShotTask:
    """Load a task; the first ``shots`` samples become support, the rest
    query. With shots=None all samples land in support."""
    task_id, samples = load_task_samples(task_dir)
    if shots is None:
        return FewShotTask(task_id=task_id, support=samples)
    return FewShotTask(task_id=task_id, support=samples[:shots], query=samples[shots:])


def list_task_dirs(root) -> list[Path]:
    root = Path(root)
    return sorted(p.parent for p in root.glob("*/task.json"))


def split_tasks(task_root, n_train: int, n_val: int, n_test: int, seed: int) -> dict:
    """Disjoint deterministic train/val/test split over task ids."""
    ids = [p.name for p in list_task_dirs(task_root)]
    need = n_train + n_val + n_test
    if need > len(ids):
        raise ValueError(f"split needs {need} tasks but only {len(ids)} available")
    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    split = {"train": sorted(shuffled[:n_train]),
             "val": sorted(shuffled[n_train:n_train + n_val]),
             "test": sorted(shuffled[n_train + n_val:need]),
             "seed": seed}
    write_json(Path(task_root) / "splits.json", split)
    return split


def read_split(task_root) -> dict:
    with open(Path(task_root) / "splits.json") as f:
        return json.load(f)


def load_split_tasks(task_root, part: str, shots: int | None = None) -> list[FewShotTask]:
    split = read_split(task_root)
    root = Path(task_root)
    return [load_task(root / tid, shots=shots) for tid in split[part]]


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as f:
        json.dump(obj, f, indent=1, sort_keys=True)
        f.write("\n")
    tmp.replace(path)
