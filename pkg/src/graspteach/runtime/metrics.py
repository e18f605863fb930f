"""Intersection-over-union scoring and the task-suite evaluation harness."""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..data.tasks import list_task_dirs, load_task
from ..model.checkpoint import Checkpoint
from ..model.reptile import MetaTrainConfig, ModelRunner
from .adapt import adapt_few_shot, config_from_checkpoint, predict_mask
from .outliers import remove_outliers


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """|a & b| / |a | b|; two empty masks score 1.0 by convention."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        return 1.0
    return int(np.logical_and(a, b).sum()) / union


@dataclass
class TaskEval:
    task_id: str
    shots: int
    ious: list[float]
    mean: float
    skipped: str | None = None


@dataclass
class EvalReport:
    global_miou: float
    tasks: list[TaskEval]
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"global_miou": self.global_miou,
                "tasks": [{"task_id": t.task_id, "shots": t.shots, "ious": t.ious,
                           "mean": t.mean, **({"skipped": t.skipped} if t.skipped else {})}
                          for t in self.tasks],
                "config": self.config}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def to_table(self) -> str:
        rows = [("Task", "Shots", "mIoU", "Images")]
        for t in self.tasks:
            if t.skipped:
                rows.append((t.task_id, "-", "skipped", t.skipped))
            else:
                rows.append((t.task_id, str(t.shots), f"{t.mean:.3f}", str(len(t.ious))))
        rows.append(("Average (all tasks)", "", f"{self.global_miou:.3f}" if
                     math.isfinite(self.global_miou) else "n/a", ""))
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
        lines.insert(1, "-" * len(lines[0]))
        return "\n".join(lines) + "\n"


def evaluate_suite(ckpt: Checkpoint, task_dir, shots: int, steps: int,
                   outlier_elim: bool = False, threshold: float = 0.5,
                   outlier_ratio: float = 0.5, seed: int | None = None,
                   n_query: int | None = None,
                   cfg: MetaTrainConfig | None = None) -> EvalReport:
    """Adapt on each task's first ``shots`` samples and score the rest.

    Samples are taken in manifest order; passing a seed shuffles each
    task's samples before the support/query split. ``n_query`` pins the
    query set to the last n samples so shot sweeps share test images.
    Tasks that cannot provide shots + 1 samples are reported as skipped.
    The global mean is the mean over per-task means.
    """
    cfg = cfg or config_from_checkpoint(ckpt)
    runner = ModelRunner()
    task_dirs = list_task_dirs(task_dir)
    evals: list[TaskEval] = []
    seeds = np.random.SeedSequence(seed or 0).spawn(max(len(task_dirs), 1))
    for tdir, s in zip(task_dirs, seeds):
        task = load_task(tdir, shots=shots)
        samples = task.samples
        if seed is not None:
            tid_hash = zlib.crc32(task.task_id.encode())
            perm = np.random.default_rng([seed, tid_hash]).permutation(len(samples))
            samples = [samples[i] for i in perm]
            task.support, task.query = samples[:shots], samples[shots:]
        if n_query is not None and len(samples) >= shots + n_query:
            task.support = samples[:shots]
            task.query = samples[len(samples) - n_query:]
        if len(task.support) < shots or not task.query:
            evals.append(TaskEval(task.task_id, shots, [], math.nan,
                                  skipped=f"needs {shots}+1 samples, has "
                                          f"{len(task.support) + len(task.query)}"))
            continue
        adapted = adapt_few_shot(ckpt, task.support, steps, cfg,
                                 task_id=task.task_id, seed=s, runner=runner)
        ious = []
        for q in task.query:
            pred = predict_mask(adapted, q.image, threshold, runner=runner)
            if outlier_elim:
                pred = remove_outliers(pred, ratio=outlier_ratio)
            ious.append(iou(pred, q.mask))
        evals.append(TaskEval(task.task_id, shots, ious, float(np.mean(ious))))
    scored = [t.mean for t in evals if not t.skipped]
    report = EvalReport(
        global_miou=float(np.mean(scored)) if scored else math.nan,
        tasks=evals,
        config={"shots": shots, "steps": steps, "outlier_elim": outlier_elim,
                "threshold": threshold, "outlier_ratio": outlier_ratio,
                "checkpoint_id": ckpt.checkpoint_id, "seed": seed})
    return report


def write_report(report: EvalReport, out_path) -> None:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(report.to_json())
    out_path.with_suffix(".txt").write_text(report.to_table())
