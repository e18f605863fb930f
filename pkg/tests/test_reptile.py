import json
import math
from dataclasses import dataclass

import numpy as np
import pytest
import torch

from graspteach.data.tasks import FewShotTask, TaskSample
from graspteach.model.checkpoint import (
    load_checkpoint,
    params_bytes,
    params_from_model,
)
from graspteach.model.reptile import (
    MetaTrainConfig,
    ModelRunner,
    apply_meta_update,
    inner_adapt,
    meta_train,
    meta_validate,
    reptile_meta_step,
)
from graspteach.model.unet import UNetArch, build_model

TINY = UNetArch(depth=1, base_width=2, convs_per_stage=1)


def tiny_cfg(**kw):
    base = dict(image_size=(16, 16), arch=TINY, augment=False,
                support_per_encounter=2, query_per_encounter=1,
                meta_batch=2, inner_batch=2, val_interval=0, seed=0)
    base.update(kw)
    return MetaTrainConfig(**base)


def make_support(n=3, size=(16, 16), seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        image = rng.integers(0, 256, size=(*size, 3), dtype=np.uint8)
        mask = np.zeros(size, dtype=bool)
        mask[4:10, 3:12] = True
        out.append((image, mask))
    return out


def make_task(task_id="t", n_support=3, n_query=2, seed=0, full_masks=False):
    rng = np.random.default_rng(seed)

    def sample(i):
        image = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
        if full_masks:
            mask = np.ones((16, 16), dtype=bool)
        else:
            mask = np.zeros((16, 16), dtype=bool)
            mask[2:9, 4:12] = True
        return TaskSample(image=image, mask=mask, frame_id=str(i))

    return FewShotTask(task_id=task_id,
                       support=[sample(i) for i in range(n_support)],
                       query=[sample(100 + i) for i in range(n_query)])


def test_config_defaults_echo_protocol():
    cfg = MetaTrainConfig()
    assert (cfg.meta_batch, cfg.inner_batch) == (5, 5)
    assert (cfg.inner_steps_train, cfg.inner_steps_val, cfg.inner_steps_test) == (5, 12, 60)
    assert cfg.inner_lr == pytest.approx(3e-4)
    assert (cfg.adam_beta1, cfg.adam_beta2) == (0.0, 0.999)
    assert cfg.weight_decay == pytest.approx(1e-7)
    assert (cfg.meta_lr_start, cfg.meta_lr_end) == (1.0, 0.001)
    assert cfg.loss_kind == "bce+dice"
    round_trip = MetaTrainConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert round_trip.to_dict() == cfg.to_dict()


def test_config_validation():
    with pytest.raises(ValueError):
        MetaTrainConfig(inner_lr=0.0)
    with pytest.raises(ValueError):
        MetaTrainConfig(meta_lr_start=0.1, meta_lr_end=0.5)
    with pytest.raises(ValueError):
        MetaTrainConfig(loss_kind="huber")
    with pytest.raises(ValueError):
        MetaTrainConfig(inner_optimizer="rmsprop")


def test_meta_lr_schedule_endpoints():
    cfg = tiny_cfg(meta_iterations=101)
    assert cfg.meta_lr_at(0) == pytest.approx(1.0)
    assert cfg.meta_lr_at(100) == pytest.approx(0.001)
    cos = tiny_cfg(meta_iterations=101, meta_lr_schedule="cosine")
    assert cos.meta_lr_at(0) == pytest.approx(1.0)
    assert cos.meta_lr_at(100) == pytest.approx(0.001)
    assert cos.meta_lr_at(50) == pytest.approx(0.5005, abs=1e-6)


def test_inner_adapt_zero_steps_returns_equal_params():
    cfg = tiny_cfg()
    params = params_from_model(build_model(TINY, init_seed=1))
    out = inner_adapt(params, make_support(), 0, cfg)
    assert params_bytes(out) == params_bytes(params)
    assert out.tensors is not params.tensors


def test_inner_adapt_reduces_loss():
    from graspteach.model.losses import compute_loss
    from graspteach.model.reptile import support_tensors

    cfg = tiny_cfg(inner_lr=1e-2)
    params = params_from_model(build_model(TINY, init_seed=2))
    support = make_support(n=1)
    images, masks = support_tensors(support)
    model = build_model(TINY)

    def loss_of(p):
        model.load_state_dict(p.tensors)
        model.eval()
        with torch.no_grad():
            return float(compute_loss(cfg.loss_kind, model(images), masks))

    before = loss_of(params)
    after = loss_of(inner_adapt(params, support, 5, cfg, seed=3))
    assert after < before


def test_inner_adapt_deterministic_and_nonmutating():
    cfg = tiny_cfg()
    params = params_from_model(build_model(TINY, init_seed=4))
    frozen = params_bytes(params)
    a = inner_adapt(params, make_support(), 4, cfg, seed=11)
    b = inner_adapt(params, make_support(), 4, cfg, seed=11)
    c = inner_adapt(params, make_support(), 4, cfg, seed=12)
    assert params_bytes(a) == params_bytes(b)
    assert params_bytes(a) != params_bytes(c)
    assert params_bytes(params) == frozen


def test_inner_adapt_empty_support_rejected():
    cfg = tiny_cfg()
    params = params_from_model(build_model(TINY, init_seed=1))
    with pytest.raises(ValueError, match="empty"):
        inner_adapt(params, [], 1, cfg)


def test_meta_step_zero_pseudo_gradient():
    cfg = tiny_cfg(inner_steps_train=0, weight_decay=0.0)
    params = params_from_model(build_model(TINY, init_seed=5))
    new, info = reptile_meta_step(params, [make_support(2), make_support(2, seed=9)],
                                  meta_lr=0.7, cfg=cfg)
    assert params_bytes(new) == params_bytes(params)


def test_meta_step_zero_meta_lr():
    cfg = tiny_cfg(weight_decay=0.0)
    params = params_from_model(build_model(TINY, init_seed=5))
    new, _ = reptile_meta_step(params, [make_support(2)], meta_lr=0.0, cfg=cfg)
    assert params_bytes(new) == params_bytes(params)


def test_scalar_update_rule_fixture():
    base = {"w": torch.tensor(1.0, dtype=torch.float64)}
    adapted = [{"w": torch.tensor(1.2, dtype=torch.float64)},
               {"w": torch.tensor(1.4, dtype=torch.float64)}]
    out = apply_meta_update(base, adapted, meta_lr=0.5, weight_decay=0.0)
    assert float(out["w"]) == pytest.approx(1.15, abs=1e-12)


def test_update_identity_per_tensor():
    cfg = tiny_cfg(weight_decay=0.0)
    params = params_from_model(build_model(TINY, init_seed=6))
    batch = [make_support(2, seed=s) for s in range(3)]
    new, info = reptile_meta_step(params, batch, meta_lr=0.3, cfg=cfg, seed=8)
    for name, base in params.tensors.items():
        delta = torch.stack([a.tensors[name] - base for a in info["adapted"]]).mean(0)
        err = (new.tensors[name] - base - 0.3 * delta).abs().max()
        assert float(err) <= 1e-7, name


@dataclass(frozen=True)
class _ConvArch:
    pass


def _conv_factory(arch):
    torch.manual_seed(0)
    return torch.nn.Conv2d(3, 1, 1).double()


def test_single_sgd_step_equals_joint_gradient_descent():
    """One plain-GD inner step + the meta update = one GD step of size
    meta_lr * inner_lr on the mean task loss (checked by central FD)."""
    from graspteach.model.checkpoint import ModelParams
    from graspteach.model.losses import compute_loss
    from graspteach.model.reptile import support_tensors

    inner_lr, meta_lr = 1e-3, 0.7
    cfg = tiny_cfg(inner_optimizer="sgd", inner_steps_train=1, inner_lr=inner_lr,
                   weight_decay=0.0, loss_kind="bce")
    runner = ModelRunner(factory=_conv_factory)
    model = runner.model_for(_ConvArch())
    params = ModelParams(_ConvArch(), {k: v.detach().clone()
                                       for k, v in model.state_dict().items()})
    tasks = [make_support(1, seed=s) for s in (1, 2, 3)]
    new, _ = reptile_meta_step(params, tasks, meta_lr, cfg, seed=0, runner=runner)

    tensors = [support_tensors(t) for t in tasks]

    def mean_loss(p):
        model.load_state_dict(p)
        with torch.no_grad():
            vals = [float(compute_loss("bce", model(im.double()), mk.double()))
                    for im, mk in tensors]
        return sum(vals) / len(vals)

    eps = 1e-6
    for name, base in params.tensors.items():
        flat = base.reshape(-1)
        for idx in range(flat.numel()):
            plus = {k: v.clone() for k, v in params.tensors.items()}
            minus = {k: v.clone() for k, v in params.tensors.items()}
            plus[name].reshape(-1)[idx] += eps
            minus[name].reshape(-1)[idx] -= eps
            g = (mean_loss(plus) - mean_loss(minus)) / (2 * eps)
            expected = float(flat[idx]) - meta_lr * inner_lr * g
            got = float(new.tensors[name].reshape(-1)[idx])
            assert abs(got - expected) <= 1e-5, (name, idx)


def test_meta_validate_oracle_and_empty_stubs():
    cfg = tiny_cfg()
    full_tasks = [make_task(f"full{i}", full_masks=True, seed=i) for i in range(2)]
    some_tasks = [make_task(f"part{i}", seed=i) for i in range(2)]

    model = build_model(TINY, init_seed=7)
    with torch.no_grad():
        model.head.bias.fill_(100.0)
    miou, breakdown = meta_validate(params_from_model(model), full_tasks,
                                    shots=2, steps=0, cfg=cfg)
    assert miou == pytest.approx(1.0)
    assert all(b["mean_iou"] == 1.0 for b in breakdown)

    with torch.no_grad():
        model.head.bias.fill_(-100.0)
    miou0, _ = meta_validate(params_from_model(model), some_tasks,
                             shots=2, steps=0, cfg=cfg)
    assert miou0 == pytest.approx(0.0)


def test_meta_validate_skips_undersized_tasks():
    cfg = tiny_cfg()
    params = params_from_model(build_model(TINY, init_seed=1))
    tasks = [make_task("ok", n_support=2, n_query=1),
             make_task("small", n_support=1, n_query=0)]
    _, breakdown = meta_validate(params, tasks, shots=2, steps=0, cfg=cfg)
    assert "skipped" in breakdown[1]
    assert breakdown[0]["task_id"] == "ok"


def test_meta_train_zero_iterations_equals_init(tmp_path):
    cfg = tiny_cfg(meta_iterations=0)
    tasks = [make_task(f"t{i}", seed=i) for i in range(3)]
    ckpt = meta_train(tasks, [], cfg, tmp_path)
    init = params_from_model(build_model(cfg.arch, init_seed=cfg.seed))
    assert params_bytes(ckpt.params) == params_bytes(init)


def test_meta_train_reproducible(tmp_path):
    tasks = [make_task(f"t{i}", seed=i) for i in range(4)]
    val = [make_task(f"v{i}", seed=10 + i) for i in range(2)]
    outs = []
    for name in ("a", "b"):
        cfg = tiny_cfg(meta_iterations=4, val_interval=2, augment=True, seed=3)
        meta_train(tasks, val, cfg, tmp_path / name)
        outs.append(((tmp_path / name / "train_log.jsonl").read_bytes(),
                     (tmp_path / name / "checkpoint_best" / "params.bin").read_bytes(),
                     (tmp_path / name / "checkpoint_last" / "params.bin").read_bytes()))
    assert outs[0] == outs[1]
    log = outs[0][0].decode().strip().splitlines()
    assert len(log) == 4
    assert "val_mIoU" in log[1] and "val_mIoU" in log[3]


def test_meta_train_halts_on_nonfinite(tmp_path, monkeypatch):
    import graspteach.model.reptile as reptile_mod

    calls = {"n": 0}
    real = reptile_mod.compute_loss

    def poisoned(kind, logits, target):
        calls["n"] += 1
        if calls["n"] > 6:
            return real(kind, logits, target) * float("nan")
        return real(kind, logits, target)

    monkeypatch.setattr(reptile_mod, "compute_loss", poisoned)
    cfg = tiny_cfg(meta_iterations=10)
    tasks = [make_task(f"t{i}", seed=i) for i in range(3)]
    ckpt = meta_train(tasks, [], cfg, tmp_path)
    assert ckpt.meta["halted_nonfinite"] is True
    saved = load_checkpoint(tmp_path / "checkpoint_last")
    assert all(torch.isfinite(t).all() for t in saved.params.tensors.values())
    log_lines = (tmp_path / "train_log.jsonl").read_text().strip().splitlines()
    assert "error" in log_lines[-1]


def test_checkpoint_roundtrip_bitwise(tmp_path):
    from graspteach.model.checkpoint import save_checkpoint

    params = params_from_model(build_model(TINY, init_seed=9))
    save_checkpoint(tmp_path / "ck", params, {"config": tiny_cfg().to_dict()})
    loaded = load_checkpoint(tmp_path / "ck")
    assert params_bytes(loaded.params) == params_bytes(params)
    assert loaded.checkpoint_id
    model = build_model(TINY)
    model.load_state_dict(loaded.params.tensors)
    x = torch.rand(1, 3, 16, 16, generator=torch.Generator().manual_seed(0))
    model.eval()
    ref = build_model(TINY)
    ref.load_state_dict(params.tensors)
    ref.eval()
    with torch.no_grad():
        assert torch.equal(model(x), ref(x))
