"""Command-line entry point: dataset building, synthetic generation,
splitting, meta-training, adaptation, prediction, evaluation, grasp
filtering, and the annotation service."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .data.build import BuildConfig, QualityCriteria, assemble_task_dataset
from .data.synth import SynthConfig, generate_synthetic_tasks
from .data.tasks import load_split_tasks, load_task, read_split, split_tasks
from .model.checkpoint import load_checkpoint, save_checkpoint
from .model.reptile import MetaTrainConfig, meta_train
from .model.unet import UNetArch
from .morphology import MorphConfig

# paper-scale preset pins the published protocol; desk is sized for CPU runs
PRESETS = {
    "paper": {"meta_iterations": 50000, "image_size": (288, 512),
              "arch": {"depth": 4, "base_width": 16, "convs_per_stage": 2},
              "loss_kind": "bce+dice", "augment": True, "compile": False},
    "desk": {"meta_iterations": 2000, "image_size": (128, 128),
             "arch": {"depth": 3, "base_width": 4, "convs_per_stage": 1},
             "loss_kind": "bce+dice", "augment": True, "compile": True},
}


def _parse_size(value: str) -> tuple[int, int]:
    h, _, w = value.partition("x")
    return int(h), int(w)


def _load_config_file(path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        import yaml

        return yaml.safe_load(text) or {}
    return json.loads(text)


def _layered(ctx: click.Context, flag_map: dict) -> dict:
    """defaults < preset < config file < explicit flags"""
    merged: dict = {}
    preset = ctx.obj.get("preset")
    if preset:
        merged.update(PRESETS[preset])
    if ctx.obj.get("config"):
        merged.update(_load_config_file(ctx.obj["config"]))
    for name, value in flag_map.items():
        src = ctx.get_parameter_source(name)
        if src is not None and src.name == "COMMANDLINE":
            merged[name] = value
        else:
            merged.setdefault(name, value)
    return merged


@click.group()
@click.option("--seed", type=int, default=0, show_default=True,
              help="Seed controlling all randomness.")
@click.option("--jobs", type=int, default=None, help="Worker/thread cap.")
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default=None,
              help="Named hyperparameter preset.")
@click.option("--config", type=click.Path(exists=True), default=None,
              help="JSON/YAML config layered between preset and flags.")
@click.pass_context
def main(ctx, seed, jobs, preset, config):
    ctx.ensure_object(dict)
    ctx.obj.update(seed=seed, jobs=jobs, preset=preset, config=config)
    if jobs:
        import torch

        torch.set_num_threads(jobs)


@main.command()
@click.option("--scenes", "scene_dirs", multiple=True, required=True,
              type=click.Path(exists=True), help="Scene sequence directory (repeatable).")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--frame-skip", default=20, show_default=True)
@click.option("--images-per-task", default=9, show_default=True)
@click.option("--min-area-px", default=400, show_default=True)
@click.option("--max-components", default=2, show_default=True)
@click.option("--min-largest-share", default=0.6, show_default=True)
@click.option("--threshold", default=0.1, show_default=True,
              help="Binarization threshold on the normalized morphology output.")
@click.pass_context
def gen(ctx, scene_dirs, out_dir, frame_skip, images_per_task, min_area_px,
        max_components, min_largest_share, threshold):
    """Build grasp-area tasks from annotated scene sequences."""
    cfg = BuildConfig(frame_skip=frame_skip, images_per_task=images_per_task,
                      morph=MorphConfig(threshold=threshold),
                      criteria=QualityCriteria(min_area_px=min_area_px,
                                               max_components=max_components,
                                               min_largest_share=min_largest_share),
                      seed=ctx.obj["seed"])
    manifest = assemble_task_dataset(scene_dirs, out_dir, cfg)
    click.echo(f"emitted {manifest['n_emitted']} tasks "
               f"({len(manifest['errors'])} scene errors) -> {out_dir}")
    if manifest["n_emitted"] == 0:
        raise click.ClickException("no tasks were accepted")


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--tasks", "n_tasks", required=True, type=int)
@click.option("--images-per-task", default=9, show_default=True)
@click.option("--size", default="128x128", show_default=True, help="HxW.")
@click.pass_context
def synth(ctx, out_dir, n_tasks, images_per_task, size):
    """Generate procedural cluttered-scene tasks."""
    cfg = SynthConfig(image_size=_parse_size(size), images_per_task=images_per_task)
    manifest = generate_synthetic_tasks(out_dir, ctx.obj["seed"], n_tasks, cfg)
    click.echo(f"generated {len(manifest['task_ids'])} tasks -> {out_dir}")


@main.command()
@click.option("--tasks", "task_dir", required=True, type=click.Path(exists=True))
@click.option("--train", "n_train", required=True, type=int)
@click.option("--val", "n_val", required=True, type=int)
@click.option("--test", "n_test", required=True, type=int)
@click.pass_context
def split(ctx, task_dir, n_train, n_val, n_test):
    """Write a deterministic train/val/test split manifest."""
    try:
        manifest = split_tasks(task_dir, n_train, n_val, n_test, ctx.obj["seed"])
    except ValueError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"split {len(manifest['train'])}/{len(manifest['val'])}/"
               f"{len(manifest['test'])} -> {task_dir}/splits.json")


@main.command()
@click.option("--tasks", "task_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--meta-iterations", default=MetaTrainConfig.meta_iterations, show_default=True)
@click.option("--meta-batch", default=MetaTrainConfig.meta_batch, show_default=True)
@click.option("--inner-batch", default=MetaTrainConfig.inner_batch, show_default=True)
@click.option("--inner-lr", default=MetaTrainConfig.inner_lr, show_default=True)
@click.option("--loss", "loss_kind", default=MetaTrainConfig.loss_kind, show_default=True,
              type=click.Choice(["bce", "dice", "bce+dice"]))
@click.option("--augment/--no-augment", default=MetaTrainConfig.augment, show_default=True)
@click.option("--image-size", default="128x128", show_default=True)
@click.option("--unet-depth", default=4, show_default=True)
@click.option("--unet-width", default=16, show_default=True)
@click.option("--unet-convs", default=2, show_default=True)
@click.option("--val-interval", default=MetaTrainConfig.val_interval, show_default=True)
@click.option("--compile/--no-compile", "compile_", default=False, show_default=True,
              help="Compile the training forward pass.")
@click.pass_context
def train(ctx, task_dir, out_dir, meta_iterations, meta_batch, inner_batch,
          inner_lr, loss_kind, augment, image_size, unet_depth, unet_width,
          unet_convs, val_interval, compile_):
    """Meta-train the segmentation network on a task directory.

    Uses the train/val parts of splits.json when present, otherwise all
    tasks are used for training with no validation.
    """
    merged = _layered(ctx, {
        "meta_iterations": meta_iterations, "meta_batch": meta_batch,
        "inner_batch": inner_batch, "inner_lr": inner_lr, "loss_kind": loss_kind,
        "augment": augment, "image_size": image_size, "val_interval": val_interval,
        "compile": compile_,
        "arch": {"depth": unet_depth, "base_width": unet_width,
                 "convs_per_stage": unet_convs}})
    if isinstance(merged["image_size"], str):
        merged["image_size"] = _parse_size(merged["image_size"])
    cfg = MetaTrainConfig(
        meta_iterations=merged["meta_iterations"], meta_batch=merged["meta_batch"],
        inner_batch=merged["inner_batch"], inner_lr=merged["inner_lr"],
        loss_kind=merged["loss_kind"], augment=merged["augment"],
        image_size=tuple(merged["image_size"]), val_interval=merged["val_interval"],
        compile=merged["compile"], arch=UNetArch.from_dict(merged["arch"]),
        seed=ctx.obj["seed"])
    task_root = Path(task_dir)
    if (task_root / "splits.json").exists():
        train_tasks = load_split_tasks(task_root, "train")
        val_tasks = load_split_tasks(task_root, "val")
    else:
        from .data.tasks import list_task_dirs

        train_tasks = [load_task(p) for p in list_task_dirs(task_root)]
        val_tasks = []
    if not train_tasks:
        raise click.ClickException(f"no training tasks found under {task_dir}")
    ckpt = meta_train(train_tasks, val_tasks, cfg, out_dir)
    if ckpt.meta.get("halted_nonfinite"):
        raise click.ClickException("training halted on non-finite loss "
                                   f"(last good checkpoint in {out_dir})")
    click.echo(f"best val mIoU {ckpt.meta.get('best_val_miou'):.4f} "
               f"@ iter {ckpt.meta.get('meta_iteration')} -> {out_dir}")


@main.command()
@click.option("--ckpt", "ckpt_dir", required=True, type=click.Path(exists=True))
@click.option("--task", "task_dir", required=True, type=click.Path(exists=True))
@click.option("--shots", default=None, type=int, help="Support samples to use (default: all).")
@click.option("--steps", default=60, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.pass_context
def adapt(ctx, ckpt_dir, task_dir, shots, steps, out_dir):
    """Adapt a checkpoint to one task's support samples."""
    from .runtime.adapt import adapt_few_shot

    ckpt = load_checkpoint(ckpt_dir)
    task = load_task(task_dir)
    support = task.support if shots is None else task.support[:shots]
    if not support:
        raise click.ClickException(f"task {task.task_id} has no support samples")
    model = adapt_few_shot(ckpt, support, steps, task_id=task.task_id,
                           seed=ctx.obj["seed"])
    save_checkpoint(out_dir, model.params,
                    {"adapted_from": ckpt.checkpoint_id, **model.provenance,
                     "config": ckpt.meta.get("config")})
    click.echo(f"adapted {task.task_id} ({len(support)} shots, {steps} steps) -> {out_dir}")


@main.command()
@click.option("--ckpt", "ckpt_dir", required=True, type=click.Path(exists=True))
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--outlier-elim", is_flag=True, default=False)
@click.pass_context
def predict(ctx, ckpt_dir, image_path, out_path, threshold, outlier_elim):
    """Predict a grasp-area mask for one image."""
    from . import pngio
    from .runtime.adapt import predict_mask
    from .runtime.outliers import remove_outliers

    ckpt = load_checkpoint(ckpt_dir)
    mask = predict_mask(ckpt.params, pngio.read_rgb(image_path), threshold)
    if outlier_elim:
        mask = remove_outliers(mask)
    pngio.write_mask(out_path, mask)
    click.echo(f"mask area {int(mask.sum())} px -> {out_path}")


@main.command("eval")
@click.option("--ckpt", "ckpt_dir", required=True, type=click.Path(exists=True))
@click.option("--tasks", "task_dir", required=True, type=click.Path(exists=True))
@click.option("--shots", required=True, type=int)
@click.option("--steps", default=60, show_default=True)
@click.option("--outlier-elim", is_flag=True, default=False)
@click.option("--split-part", default=None, type=click.Choice(["train", "val", "test"]),
              help="Restrict to one part of splits.json.")
@click.option("--out", "out_path", default=None, type=click.Path())
@click.pass_context
def eval_cmd(ctx, ckpt_dir, task_dir, shots, steps, outlier_elim, split_part, out_path):
    """Few-shot evaluation over a task directory; writes a JSON report
    plus an aligned text table."""
    import shutil
    import tempfile

    from .runtime.metrics import evaluate_suite, write_report

    ckpt = load_checkpoint(ckpt_dir)
    if split_part:
        # evaluate only the selected task ids via a directory of symlinks
        ids = read_split(task_dir)[split_part]
        staging = Path(tempfile.mkdtemp(prefix="gt_eval_"))
        try:
            for tid in ids:
                (staging / tid).symlink_to(Path(task_dir).resolve() / tid)
            report = evaluate_suite(ckpt, staging, shots, steps, outlier_elim)
        finally:
            shutil.rmtree(staging, ignore_errors=True)
    else:
        report = evaluate_suite(ckpt, task_dir, shots, steps, outlier_elim)
    click.echo(report.to_table())
    if out_path:
        write_report(report, out_path)
        click.echo(f"report -> {out_path}")


@main.command("filter-grasps")
@click.option("--grasps", "grasps_path", required=True, type=click.Path(exists=True))
@click.option("--camera", "camera_path", required=True, type=click.Path(exists=True))
@click.option("--mask", "mask_path", required=True, type=click.Path(exists=True))
@click.option("--margin", "margin_px", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_context
def filter_grasps(ctx, grasps_path, camera_path, mask_path, margin_px, out_path):
    """Keep only grasps whose projected center lies in the mask."""
    from . import pngio
    from .data.scenes import load_camera, load_grasps, save_grasps
    from .graspfilter import GraspCandidateSet, filter_grasps_by_mask, grasp_coverage

    candidates = GraspCandidateSet(grasps=load_grasps(grasps_path),
                                   camera=load_camera(camera_path))
    mask = pngio.read_mask(mask_path)
    stats = grasp_coverage(candidates, mask, margin_px)
    kept = filter_grasps_by_mask(candidates, mask, margin_px)
    save_grasps(out_path, kept.grasps,
                extra={"provenance": {"mask": str(mask_path), "margin_px": margin_px},
                       "coverage": stats.to_dict()})
    click.echo(f"kept {stats.n_kept}/{stats.n_total} grasps "
               f"({stats.n_in_view} in view) -> {out_path}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8008, show_default=True)
@click.option("--data-dir", default=None, type=click.Path(),
              help="Directory with scenes/ and tasks/ (env GT_DATA_DIR).")
@click.option("--checkpoint", "checkpoint_dir", default=None, type=click.Path(),
              help="Checkpoint for adaptation jobs (env GT_CHECKPOINT).")
@click.pass_context
def serve(ctx, host, port, data_dir, checkpoint_dir):
    """Run the interactive annotation service."""
    from .service.app import serve as run_server

    run_server(host, port, data_dir, checkpoint_dir)


def run_command(argv) -> int:
    """Programmatic entry; returns the process exit code."""
    try:
        main.main(args=list(argv), standalone_mode=False)
        return 0
    except click.exceptions.UsageError as exc:
        click.echo(exc.format_message(), err=True)
        return 2
    except click.ClickException as exc:
        click.echo(exc.format_message(), err=True)
        return 1
    except SystemExit as exc:
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
