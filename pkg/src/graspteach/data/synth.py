"""Procedural cluttered-scene generator for desk-scale experiments.

Each task owns a target "tool" (an elongated handle with an attached head,
task-specific colors); every sample re-renders the tool at a new pose,
scale, and lighting among random distractor shapes over a random gradient
background. The ground-truth mask is the handle region, which is drawn on
top so it is never occluded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .tasks import TaskSample, write_json, write_task


@dataclass
class SynthConfig:
    image_size: tuple[int, int] = (128, 128)  # (height, width)
    images_per_task: int = 9
    min_area_frac: float = 0.005
    max_area_frac: float = 0.15
    distractors: tuple[int, int] = (3, 7)  # half-open range
    hue_margin: float = 0.08  # min circular hue distance to the handle
    noise_sigma: float = 0.015
    max_attempts: int = 64

    def to_dict(self) -> dict:
        return {"image_size": list(self.image_size), "images_per_task": self.images_per_task,
                "min_area_frac": self.min_area_frac, "max_area_frac": self.max_area_frac,
                "distractors": list(self.distractors), "hue_margin": self.hue_margin,
                "noise_sigma": self.noise_sigma}


def hsv_to_rgb(h: float, s: float, v: float) -> tuple[float, float, float]:
    i = int(h * 6.0) % 6
    f = h * 6.0 - math.floor(h * 6.0)
    p, q, t = v * (1 - s), v * (1 - s * f), v * (1 - s * (1 - f))
    return [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]


def _hue_away_from(rng, avoid: float, margin: float) -> float:
    while True:
        h = rng.uniform(0.0, 1.0)
        d = abs(h - avoid)
        if min(d, 1.0 - d) >= margin:
            return h


def _rect_corners(cx, cy, half_len, half_wid, theta):
    dx, dy = math.cos(theta), math.sin(theta)
    nx, ny = -dy, dx
    return [(cx + sx * half_len * dx + sy * half_wid * nx,
             cy + sx * half_len * dy + sy * half_wid * ny)
            for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1))]


@dataclass
class _ToolSpec:
    handle_hsv: tuple[float, float, float]
    head_hsv: tuple[float, float, float]
    length_frac: float
    width_frac: float
    head_len_ratio: float
    head_width_ratio: float


def _sample_tool(rng) -> _ToolSpec:
    handle_hue = rng.uniform(0.0, 1.0)
    head_hue = (handle_hue + rng.uniform(0.3, 0.6)) % 1.0
    return _ToolSpec(
        handle_hsv=(handle_hue, rng.uniform(0.65, 0.95), rng.uniform(0.75, 1.0)),
        head_hsv=(head_hue, rng.uniform(0.5, 0.9), rng.uniform(0.5, 0.9)),
        length_frac=rng.uniform(0.32, 0.5),
        width_frac=rng.uniform(0.09, 0.15),
        head_len_ratio=rng.uniform(0.2, 0.35),
        head_width_ratio=rng.uniform(2.0, 3.0),
    )


def _draw_background(rng, h, w, avoid_hue, margin):
    c0 = np.array(hsv_to_rgb(_hue_away_from(rng, avoid_hue, margin),
                             rng.uniform(0.1, 0.5), rng.uniform(0.3, 0.9)))
    c1 = np.array(hsv_to_rgb(_hue_away_from(rng, avoid_hue, margin),
                             rng.uniform(0.1, 0.5), rng.uniform(0.3, 0.9)))
    axis = rng.integers(0, 2)
    ramp = np.linspace(0.0, 1.0, h if axis == 0 else w)
    ramp = ramp[:, None, None] if axis == 0 else ramp[None, :, None]
    return (1.0 - ramp) * c0 + ramp * c1 + np.zeros((h, w, 3))


def _draw_distractors(draw: ImageDraw.ImageDraw, rng, h, w, avoid_hue, margin, count):
    s = min(h, w)
    for _ in range(count):
        hue = _hue_away_from(rng, avoid_hue, margin)
        color = tuple(int(round(255 * c)) for c in
                      hsv_to_rgb(hue, rng.uniform(0.4, 0.95), rng.uniform(0.35, 1.0)))
        kind = rng.integers(0, 3)
        cx, cy = rng.uniform(0, w), rng.uniform(0, h)
        size = rng.uniform(0.08, 0.28) * s
        if kind == 0:
            rx, ry = size * rng.uniform(0.5, 1.0), size * rng.uniform(0.5, 1.0)
            draw.ellipse([cx - rx, cy - ry, cx + rx, cy + ry], fill=color)
        elif kind == 1:
            theta = rng.uniform(0, math.tau)
            aspect = rng.uniform(0.25, 1.0)
            draw.polygon(_rect_corners(cx, cy, size, size * aspect, theta), fill=color)
        else:
            pts = [(cx + rng.uniform(-size, size), cy + rng.uniform(-size, size))
                   for _ in range(3)]
            draw.polygon(pts, fill=color)


def render_sample(tool: _ToolSpec, rng, cfg: SynthConfig) -> TaskSample:
    """Render one scene; resamples the pose until the handle mask satisfies
    the area-fraction bounds and stays a single component."""
    h, w = cfg.image_size
    s = min(h, w)
    for _ in range(cfg.max_attempts):
        base = _draw_background(rng, h, w, tool.handle_hsv[0], cfg.hue_margin)
        img = Image.fromarray((np.clip(base, 0, 1) * 255).astype(np.uint8))
        draw = ImageDraw.Draw(img)
        n_distr = int(rng.integers(cfg.distractors[0], cfg.distractors[1]))
        _draw_distractors(draw, rng, h, w, tool.handle_hsv[0], cfg.hue_margin, n_distr)

        scale = rng.uniform(0.85, 1.15)
        theta = rng.uniform(0, math.tau)
        cx, cy = rng.uniform(0.3 * w, 0.7 * w), rng.uniform(0.3 * h, 0.7 * h)
        half_len = 0.5 * tool.length_frac * s * scale
        half_wid = 0.5 * tool.width_frac * s * scale
        dx, dy = math.cos(theta), math.sin(theta)

        hue_jit = rng.uniform(-0.015, 0.015)
        handle_rgb = hsv_to_rgb((tool.handle_hsv[0] + hue_jit) % 1.0,
                                tool.handle_hsv[1], tool.handle_hsv[2])
        head_rgb = hsv_to_rgb((tool.head_hsv[0] + hue_jit) % 1.0,
                              tool.head_hsv[1], tool.head_hsv[2])

        # head sits past the handle end; handle is drawn last, on top
        head_len = 2 * half_len * tool.head_len_ratio
        head_cx = cx + (half_len + 0.5 * head_len - 0.05 * half_len) * dx
        head_cy = cy + (half_len + 0.5 * head_len - 0.05 * half_len) * dy
        draw.polygon(_rect_corners(head_cx, head_cy, 0.5 * head_len,
                                   half_wid * tool.head_width_ratio, theta),
                     fill=tuple(int(round(255 * c)) for c in head_rgb))
        handle_corners = _rect_corners(cx, cy, half_len, half_wid, theta)
        draw.polygon(handle_corners, fill=tuple(int(round(255 * c)) for c in handle_rgb))

        mask_img = Image.new("L", (w, h), 0)
        ImageDraw.Draw(mask_img).polygon(handle_corners, fill=255)
        mask = np.asarray(mask_img) >= 128

        frac = mask.sum() / (h * w)
        if not (cfg.min_area_frac <= frac <= cfg.max_area_frac):
            continue

        arr = np.asarray(img, dtype=np.float64) / 255.0
        arr = arr * rng.uniform(0.82, 1.18)
        arr = arr + rng.normal(0.0, cfg.noise_sigma, size=arr.shape)
        image = (np.clip(arr, 0, 1) * 255).astype(np.uint8)
        return TaskSample(image=image, mask=mask)
    raise RuntimeError("could not render a sample within the area bounds")


def generate_synthetic_tasks(out_dir, seed: int, n_tasks: int,
                             cfg: SynthConfig | None = None) -> dict:
    """Write n_tasks procedurally generated tasks; returns the manifest."""
    if n_tasks <= 0:
        raise ValueError("n_tasks must be positive")
    cfg = cfg or SynthConfig()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    task_ids = []
    for t in range(n_tasks):
        tool = _sample_tool(np.random.default_rng([seed, t]))
        samples = [render_sample(tool, np.random.default_rng([seed, t, i]), cfg)
                   for i in range(cfg.images_per_task)]
        task_id = f"synth_{t:04d}"
        for i, smp in enumerate(samples):
            smp.scene_id, smp.frame_id = task_id, f"{i:03d}"
        write_task(out_dir / task_id, task_id, samples)
        task_ids.append(task_id)
    manifest = {"seed": seed, "n_tasks": n_tasks, "config": cfg.to_dict(),
                "task_ids": task_ids}
    write_json(out_dir / "synth_manifest.json", manifest)
    return manifest
