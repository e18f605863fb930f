import json
from pathlib import Path

import numpy as np
import pytest

from graspteach import pngio
from graspteach.data.tasks import TaskSample, write_task
from graspteach.geometry import CameraModel


def identity_camera(width=128, height=96, fx=100.0, fy=100.0):
    return CameraModel(fx=fx, fy=fy, cx=width / 2, cy=height / 2,
                       width=width, height=height, extrinsic=np.eye(4))


def backproject(camera, u, v, z):
    """World point that projects to pixel (u, v) at depth z (identity extrinsic)."""
    return np.array([(u - camera.cx) / camera.fx * z,
                     (v - camera.cy) / camera.fy * z, z])


def grasp_at_pixel(camera, u, v, object_id, z=0.5, width=0.02):
    """Grasp whose fingertip midpoint projects to pixel (u, v)."""
    from graspteach.geometry import GraspPose

    return GraspPose(rotation=np.eye(3), translation=backproject(camera, u, v, z),
                     width=width, object_id=object_id)


def write_scene_frame(frame_dir: Path, camera, labels, grasps, rgb=None):
    frame_dir.mkdir(parents=True, exist_ok=True)
    if rgb is None:
        rgb = np.full((camera.height, camera.width, 3), 80, dtype=np.uint8)
        rgb[labels > 0] = (180, 160, 90)
    pngio.write_rgb(frame_dir / "rgb.png", rgb)
    pngio.write_labels(frame_dir / "labels.png", labels)
    with open(frame_dir / "camera.json", "w") as f:
        json.dump(camera.to_dict(), f)
    with open(frame_dir / "grasps.json", "w") as f:
        json.dump([g.to_dict() for g in grasps], f)


def make_demo_scene(scene_dir: Path, n_frames=23, width=128, height=96,
                    objects=(1, 2), dense=True):
    """Scene sequence with rectangular objects and dense grasp clusters.

    Object regions are 40x40 blocks; each object's grasps hit a 16x12
    pixel patch inside its region twice per pixel, which survives the
    default morphology comfortably.
    """
    camera = identity_camera(width, height)
    labels = np.zeros((height, width), dtype=np.uint16)
    origins = {1: (10, 14), 2: (70, 40)}  # (u0, v0) per object id
    grasps = []
    for oid in objects:
        u0, v0 = origins[oid]
        labels[v0:v0 + 40, u0:u0 + 40] = oid
        if dense:
            for du in range(12, 28):
                for dv in range(14, 26):
                    for _ in range(2):
                        grasps.append(grasp_at_pixel(camera, u0 + du, v0 + dv, oid))
        else:  # sparse: a single hit, which the morphology erodes away
            grasps.append(grasp_at_pixel(camera, u0 + 20, v0 + 20, oid))
    for i in range(n_frames):
        write_scene_frame(scene_dir / f"{i:04d}", camera, labels, grasps)
    return camera, labels


@pytest.fixture(scope="session")
def demo_scene(tmp_path_factory):
    scene_dir = tmp_path_factory.mktemp("scenes") / "scene_0000"
    camera, labels = make_demo_scene(scene_dir)
    return {"dir": scene_dir, "camera": camera, "labels": labels}


def make_task_dir(root: Path, task_id: str, n_samples: int, size=(32, 32),
                  full_masks=False, seed=0):
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n_samples):
        image = rng.integers(0, 256, size=(*size, 3), dtype=np.uint8)
        if full_masks:
            mask = np.ones(size, dtype=bool)
        else:
            mask = np.zeros(size, dtype=bool)
            mask[4:12, 4:14] = True
        samples.append(TaskSample(image=image, mask=mask, scene_id=task_id,
                                  frame_id=f"{i:03d}"))
    write_task(root / task_id, task_id, samples)
    return root / task_id


# --- acceptance reporting ----------------------------------------------------

ACCEPTANCE_RESULTS: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance" in report.nodeid and report.when == "call":
        name = report.nodeid.split("::")[-1].replace("test_criterion_", "")
        ACCEPTANCE_RESULTS[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, outcome in ACCEPTANCE_RESULTS.items():
            tag = "PASS" if outcome == "passed" else outcome.upper()
            terminalreporter.write_line(f"[{tag}] {name}")
