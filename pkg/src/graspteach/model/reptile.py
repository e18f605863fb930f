"""First-order meta-training loop.

Each meta-iteration adapts the current initialization to a batch of tasks
with a few adaptive-moment gradient steps, then moves the initialization
toward the mean of the adapted parameters (scaled by a decaying meta
learning rate). Validation runs periodically and the best initialization
by mean query IoU is kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..data.tasks import FewShotTask, TaskSample
from .augment import AugmentConfig, augment_sample
from .checkpoint import (
    Checkpoint,
    ModelParams,
    params_from_model,
    save_checkpoint,
)
from .losses import LOSS_KINDS, compute_loss
from .unet import UNetArch, build_model, images_to_tensor, masks_to_tensor


class NonFiniteLossError(RuntimeError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"non-finite loss {loss} at inner step {step}")
        self.step = step
        self.loss = loss


@dataclass
class MetaTrainConfig:
    meta_batch: int = 5
    inner_batch: int = 5
    inner_steps_train: int = 5
    inner_steps_val: int = 12
    inner_steps_test: int = 60
    inner_lr: float = 3e-4
    inner_optimizer: str = "adam"  # "adam" or "sgd"
    adam_beta1: float = 0.0
    adam_beta2: float = 0.999
    weight_decay: float = 1e-7
    meta_lr_start: float = 1.0
    meta_lr_end: float = 0.001
    meta_iterations: int = 2000
    meta_lr_schedule: str = "linear"  # "linear" or "cosine"
    loss_kind: str = "bce+dice"
    augment: bool = True
    augment_cfg: AugmentConfig = field(default_factory=AugmentConfig)
    image_size: tuple[int, int] = (128, 128)
    support_per_encounter: int = 5
    query_per_encounter: int = 4
    val_interval: int = 100
    arch: UNetArch = field(default_factory=UNetArch)
    seed: int = 0
    compile: bool = False

    def __post_init__(self):
        if self.inner_lr <= 0 or self.meta_lr_start <= 0 or self.meta_lr_end <= 0:
            raise ValueError("learning rates must be positive")
        if self.meta_lr_end > self.meta_lr_start:
            raise ValueError("meta_lr_end must not exceed meta_lr_start")
        if self.inner_optimizer not in ("adam", "sgd"):
            raise ValueError("inner_optimizer must be 'adam' or 'sgd'")
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"loss_kind must be one of {LOSS_KINDS}")
        if self.meta_lr_schedule not in ("linear", "cosine"):
            raise ValueError("meta_lr_schedule must be 'linear' or 'cosine'")

    def meta_lr_at(self, iteration: int) -> float:
        if self.meta_iterations <= 1:
            return self.meta_lr_start
        frac = iteration / (self.meta_iterations - 1)
        if self.meta_lr_schedule == "cosine":
            w = 0.5 * (1.0 + math.cos(math.pi * frac))
            return self.meta_lr_end + (self.meta_lr_start - self.meta_lr_end) * w
        return self.meta_lr_start + (self.meta_lr_end - self.meta_lr_start) * frac

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "meta_batch", "inner_batch", "inner_steps_train", "inner_steps_val",
            "inner_steps_test", "inner_lr", "inner_optimizer", "adam_beta1", "adam_beta2",
            "weight_decay", "meta_lr_start", "meta_lr_end", "meta_iterations",
            "meta_lr_schedule", "loss_kind", "augment", "support_per_encounter",
            "query_per_encounter", "val_interval", "seed", "compile")}
        d["image_size"] = list(self.image_size)
        d["augment_cfg"] = self.augment_cfg.to_dict()
        d["arch"] = self.arch.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetaTrainConfig":
        d = dict(d)
        d["image_size"] = tuple(d.get("image_size", (128, 128)))
        d["augment_cfg"] = AugmentConfig(**d.get("augment_cfg", {}))
        d["arch"] = UNetArch.from_dict(d.get("arch", UNetArch().to_dict()))
        return cls(**d)


class ModelRunner:
    """Caches a scratch module (and its compiled twin) per architecture so
    repeated adaptations skip module construction. A custom factory may be
    supplied for non-default architectures."""

    def __init__(self, factory=None):
        self._factory = factory or build_model
        self._models: dict = {}
        self._compiled: dict = {}

    def model_for(self, arch):
        if arch not in self._models:
            self._models[arch] = self._factory(arch)
        return self._models[arch]

    def forward_fn(self, arch, compile_enabled: bool):
        model = self.model_for(arch)
        if not compile_enabled:
            return model, model
        if arch not in self._compiled:
            self._compiled[arch] = torch.compile(model)
        return model, self._compiled[arch]


def _as_pair(sample) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(sample, TaskSample):
        return sample.image, sample.mask
    image, mask = sample
    return np.asarray(image), np.asarray(mask)


def support_tensors(support) -> tuple[torch.Tensor, torch.Tensor]:
    pairs = [_as_pair(s) for s in support]
    return (images_to_tensor([p[0] for p in pairs]),
            masks_to_tensor([p[1] for p in pairs]))


def _run_inner(params: ModelParams, support, steps: int, cfg: MetaTrainConfig,
               seed, runner: ModelRunner | None = None) -> tuple[ModelParams, list[float]]:
    if not support:
        raise ValueError("support set is empty")
    runner = runner or ModelRunner()
    model, fwd = runner.forward_fn(params.arch, cfg.compile)
    model.load_state_dict(params.tensors)
    if steps <= 0:
        return params.clone(), []
    model.train()
    if cfg.inner_optimizer == "sgd":
        opt = torch.optim.SGD(model.parameters(), lr=cfg.inner_lr,
                              weight_decay=cfg.weight_decay)
    else:
        opt = torch.optim.AdamW(model.parameters(), lr=cfg.inner_lr,
                                betas=(cfg.adam_beta1, cfg.adam_beta2),
                                weight_decay=cfg.weight_decay)
    images, masks = support_tensors(support)
    dtype = next(model.parameters()).dtype
    images, masks = images.to(dtype), masks.to(dtype)
    n = images.shape[0]
    bs = min(cfg.inner_batch, n)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    pos = 0
    losses = []
    for step in range(steps):
        if pos + bs > n:
            order = rng.permutation(n)
            pos = 0
        idx = torch.from_numpy(order[pos:pos + bs].copy())
        pos += bs
        logits = fwd(images[idx])
        loss = compute_loss(cfg.loss_kind, logits, masks[idx])
        value = float(loss.detach())
        if not math.isfinite(value):
            raise NonFiniteLossError(step, value)
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(value)
    return ModelParams(params.arch, {k: v.detach().clone()
                                     for k, v in model.state_dict().items()}), losses


def inner_adapt(params: ModelParams, support, steps: int, cfg: MetaTrainConfig,
                seed=0, runner: ModelRunner | None = None) -> ModelParams:
    """Adapt a copy of ``params`` on the support set; the input is never
    mutated and the optimizer state is fresh per call."""
    adapted, _ = _run_inner(params, support, steps, cfg, seed, runner)
    return adapted


def reptile_meta_step(params: ModelParams, task_batch, meta_lr: float,
                      cfg: MetaTrainConfig, seed=0,
                      runner: ModelRunner | None = None):
    """One meta-update over a batch of task support sets.

    Returns (new_params, info) where info carries the adapted per-task
    parameters and the mean support loss.
    """
    if not task_batch:
        raise ValueError("task batch is empty")
    runner = runner or ModelRunner()
    seeds = np.random.SeedSequence(seed).spawn(len(task_batch))
    adapted = []
    losses: list[float] = []
    for support, s in zip(task_batch, seeds):
        p, l = _run_inner(params, support, cfg.inner_steps_train, cfg, s, runner)
        adapted.append(p)
        losses.extend(l)
    new_tensors = apply_meta_update(params.tensors,
                                    [a.tensors for a in adapted],
                                    meta_lr, cfg.weight_decay)
    info = {"adapted": adapted,
            "mean_support_loss": float(np.mean(losses)) if losses else math.nan}
    return ModelParams(params.arch, new_tensors), info


def apply_meta_update(base_tensors: dict, adapted_tensors: list, meta_lr: float,
                      weight_decay: float = 0.0) -> dict:
    """The outer update: move each tensor toward the mean adapted value by
    meta_lr, then apply decoupled weight decay."""
    out = {}
    with torch.no_grad():
        for name, base in base_tensors.items():
            delta = torch.stack([a[name] - base for a in adapted_tensors]).mean(dim=0)
            updated = base + meta_lr * delta
            if weight_decay:
                updated = updated - meta_lr * weight_decay * base
            out[name] = updated
    return out


def meta_validate(params_or_ckpt, tasks, shots: int, steps: int,
                  cfg: MetaTrainConfig, seed=0, threshold: float = 0.5,
                  runner: ModelRunner | None = None):
    """Mean query IoU after adapting to each task's support set.

    Tasks without enough support or any query samples are reported as
    skipped. No augmentation is applied. The checkpoint is not modified.
    """
    from ..runtime.metrics import iou  # local import to avoid a cycle

    params = params_or_ckpt.params if isinstance(params_or_ckpt, Checkpoint) else params_or_ckpt
    runner = runner or ModelRunner()
    breakdown = []
    scores = []
    seeds = np.random.SeedSequence(seed).spawn(len(tasks))
    for task, s in zip(tasks, seeds):
        if len(task.support) < shots or not task.query:
            breakdown.append({"task_id": task.task_id, "skipped":
                              f"needs {shots} support + 1 query, has "
                              f"{len(task.support)}/{len(task.query)}"})
            continue
        adapted = inner_adapt(params, task.support[:shots], steps, cfg, s, runner)
        model = runner.model_for(params.arch)
        model.load_state_dict(adapted.tensors)
        model.eval()
        with torch.no_grad():
            logits = model(images_to_tensor([q.image for q in task.query]))
            pred = (torch.sigmoid(logits).squeeze(1) >= threshold).numpy()
        ious = [iou(pred[i], task.query[i].mask) for i in range(len(task.query))]
        mean_iou = float(np.mean(ious))
        breakdown.append({"task_id": task.task_id, "shots": shots,
                          "ious": ious, "mean_iou": mean_iou})
        scores.append(mean_iou)
    mean = float(np.mean(scores)) if scores else math.nan
    return mean, breakdown


def _encounter_split(task: FewShotTask, rng, n_support: int, n_query: int) -> FewShotTask:
    samples = task.samples
    perm = rng.permutation(len(samples))
    sup = [samples[i] for i in perm[:n_support]]
    qry = [samples[i] for i in perm[n_support:n_support + n_query]]
    return FewShotTask(task_id=task.task_id, support=sup, query=qry)


def meta_train(train_tasks, val_tasks, cfg: MetaTrainConfig, out_dir) -> Checkpoint:
    """Run the meta-training loop; writes train_log.jsonl plus
    checkpoint_best/ and checkpoint_last/ under out_dir."""
    too_small = [t.task_id for t in train_tasks
                 if len(t.samples) < cfg.support_per_encounter]
    if too_small:
        raise ValueError(f"tasks too small for {cfg.support_per_encounter}-shot "
                         f"encounters: {too_small[:5]}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    params = params_from_model(build_model(cfg.arch, init_seed=cfg.seed))
    runner = ModelRunner()
    val_history: list[list] = []
    best_params, best_miou, best_iter = params.clone(), -1.0, -1
    halted = False
    log_path = out_dir / "train_log.jsonl"

    def validate(iteration, current) -> float:
        vrng = np.random.default_rng([cfg.seed, 1 + iteration])
        views = [_encounter_split(t, vrng, cfg.support_per_encounter,
                                  cfg.query_per_encounter) for t in val_tasks]
        miou, _ = meta_validate(current, views, cfg.support_per_encounter,
                                cfg.inner_steps_val, cfg,
                                seed=[cfg.seed, 2 + iteration], runner=runner)
        return miou

    with open(log_path, "w") as log:
        for it in range(cfg.meta_iterations):
            meta_lr = cfg.meta_lr_at(it)
            replace = len(train_tasks) < cfg.meta_batch
            picks = rng.choice(len(train_tasks), size=cfg.meta_batch, replace=replace)
            batch = []
            for ti in picks:
                view = _encounter_split(train_tasks[int(ti)], rng,
                                        cfg.support_per_encounter, cfg.query_per_encounter)
                support = view.support
                if cfg.augment:
                    support = [TaskSample(*augment_sample(s.image, s.mask,
                                                          int(rng.integers(2 ** 62)),
                                                          cfg.augment_cfg),
                                          scene_id=s.scene_id, frame_id=s.frame_id)
                               for s in support]
                batch.append(support)
            try:
                params, info = reptile_meta_step(params, batch, meta_lr, cfg,
                                                 seed=int(rng.integers(2 ** 62)),
                                                 runner=runner)
            except NonFiniteLossError as exc:
                log.write(_jsonl({"iter": it, "meta_lr": meta_lr, "error": str(exc)}))
                halted = True
                break
            entry = {"iter": it, "meta_lr": meta_lr,
                     "mean_support_loss": info["mean_support_loss"]}
            if val_tasks and cfg.val_interval > 0 and (
                    (it + 1) % cfg.val_interval == 0 or it + 1 == cfg.meta_iterations):
                miou = validate(it, params)
                val_history.append([it, miou])
                entry["val_mIoU"] = miou
                if miou > best_miou:
                    best_miou, best_iter, best_params = miou, it, params.clone()
            log.write(_jsonl(entry))

    if best_iter < 0:  # no validation ran; the last parameters are the best known
        best_params, best_iter = params.clone(), cfg.meta_iterations - 1
    meta = {"config": cfg.to_dict(), "meta_iteration": best_iter,
            "val_miou_history": val_history, "best_val_miou": best_miou,
            "halted_nonfinite": halted}
    best = save_checkpoint(out_dir / "checkpoint_best", best_params, meta)
    save_checkpoint(out_dir / "checkpoint_last", params,
                    {**meta, "meta_iteration": cfg.meta_iterations - 1})
    return best


def _jsonl(obj: dict) -> str:
    import json

    return json.dumps(obj, sort_keys=True) + "\n"
