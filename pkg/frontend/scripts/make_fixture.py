"""Builds the end-to-end fixture: a bench scene with two red regions, a
hand-set checkpoint whose prediction is exactly those regions (so the
outlier toggle has a visible effect), and a fixture.json with the
click script plus the mask-area band derived from an independent
geodesic oracle.

Usage: python3 scripts/make_fixture.py <data_dir>
"""

import heapq
import json
import math
import sys
from pathlib import Path

import numpy as np
import torch

from graspteach import pngio
from graspteach.model.checkpoint import params_from_model, save_checkpoint
from graspteach.model.reptile import MetaTrainConfig
from graspteach.model.unet import UNet, UNetArch
from graspteach.service.segmenter import GeodesicParams

BIG = (slice(30, 80), slice(20, 60))      # 2000 px
SMALL = (slice(8, 20), slice(100, 112))   # 144 px
RED = (200, 40, 40)
BACKGROUND = (25, 28, 30)

CLICKS = [
    {"x": 30, "y": 40, "polarity": "positive"},
    {"x": 50, "y": 70, "polarity": "positive"},
    {"x": 25, "y": 75, "polarity": "positive"},
    {"x": 55, "y": 35, "polarity": "negative"},
]


def build_scene() -> np.ndarray:
    img = np.full((96, 128, 3), BACKGROUND, dtype=np.uint8)
    img[BIG] = RED
    img[SMALL] = RED
    return img


def build_checkpoint(out_dir: Path) -> None:
    arch = UNetArch(depth=1, base_width=2, convs_per_stage=1)
    net = UNet(arch)
    with torch.no_grad():
        for p in net.parameters():
            p.zero_()
        sd = net.state_dict()
        sd["encoder.0.body.0.weight"][0, 0, 1, 1] = 1.0  # pass red through
        sd["decoder.0.body.0.weight"][0, 4, 1, 1] = 1.0  # pick the skip channel
        sd["head.weight"][0, 0, 0, 0] = 20.0
        sd["head.bias"][0] = -10.0
        net.load_state_dict(sd)
    cfg = MetaTrainConfig(arch=arch, image_size=(96, 128))
    save_checkpoint(out_dir, params_from_model(net), {"config": cfg.to_dict()})


def geodesic_oracle(image: np.ndarray, seeds, color_weight, spatial_weight) -> np.ndarray:
    img = image.astype(np.float64) / 255.0
    h, w = img.shape[:2]
    dist = np.full((h, w), np.inf)
    heap = []
    for x, y in seeds:
        dist[y, x] = 0.0
        heapq.heappush(heap, (0.0, y, x))
    moves = [(-1, 0, 1.0), (1, 0, 1.0), (0, -1, 1.0), (0, 1, 1.0),
             (-1, -1, math.sqrt(2)), (-1, 1, math.sqrt(2)),
             (1, -1, math.sqrt(2)), (1, 1, math.sqrt(2))]
    while heap:
        d, y, x = heapq.heappop(heap)
        if d > dist[y, x]:
            continue
        for dy, dx, step in moves:
            ny, nx = y + dy, x + dx
            if not (0 <= ny < h and 0 <= nx < w):
                continue
            nd = d + color_weight * float(np.linalg.norm(img[y, x] - img[ny, nx])) \
                + spatial_weight * step
            if nd < dist[ny, nx]:
                dist[ny, nx] = nd
                heapq.heappush(heap, (nd, ny, nx))
    return dist


def expected_click_area(image: np.ndarray) -> int:
    params = GeodesicParams()
    pos = [(c["x"], c["y"]) for c in CLICKS if c["polarity"] == "positive"]
    neg = [(c["x"], c["y"]) for c in CLICKS if c["polarity"] == "negative"]
    dp = geodesic_oracle(image, pos, params.color_weight, params.spatial_weight)
    mask = dp <= params.max_cost
    if neg:
        dn = geodesic_oracle(image, neg, params.color_weight, params.spatial_weight)
        mask &= dp <= dn
    return int(mask.sum())


def main(data_dir: str) -> None:
    data = Path(data_dir)
    scene = build_scene()
    pngio.write_rgb(data / "scenes" / "bench.png", scene)
    build_checkpoint(data / "checkpoint")
    area = expected_click_area(scene)
    fixture = {
        "scene_id": "bench",
        "width": 128,
        "height": 96,
        "clicks": CLICKS,
        "mask_area_band": [int(area * 0.8), int(math.ceil(area * 1.2))],
        "oracle_mask_area": area,
        "prediction_area_raw": 2144,  # both red regions
        "prediction_area_cleaned": 2000,  # small region dropped
    }
    with open(data / "fixture.json", "w") as f:
        json.dump(fixture, f, indent=1, sort_keys=True)
    print(json.dumps(fixture))


if __name__ == "__main__":
    main(sys.argv[1])
