import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from graspteach.model.checkpoint import (
    params_bytes,
    params_from_model,
    save_checkpoint,
)
from graspteach.model.reptile import MetaTrainConfig
from graspteach.model.unet import UNetArch, build_model
from graspteach.runtime.adapt import adapt_few_shot, predict_mask
from graspteach.runtime.metrics import evaluate_suite, iou, write_report
from graspteach.runtime.outliers import remove_outliers

from .conftest import make_task_dir
from .test_reptile import TINY, make_support, tiny_cfg


@pytest.fixture(scope="module")
def tiny_ckpt(tmp_path_factory):
    params = params_from_model(build_model(TINY, init_seed=0))
    return save_checkpoint(tmp_path_factory.mktemp("ck"), params,
                           {"config": tiny_cfg().to_dict()})


# --- adapt_few_shot ---------------------------------------------------------

def test_adapt_zero_steps_keeps_params(tiny_ckpt):
    model = adapt_few_shot(tiny_ckpt, make_support(2), steps=0)
    assert params_bytes(model.params) == params_bytes(tiny_ckpt.params)


def test_adapt_default_steps_echo(tiny_ckpt):
    model = adapt_few_shot(tiny_ckpt, make_support(2))
    assert model.provenance["steps"] == 60
    assert model.provenance["shots"] == 2
    assert model.provenance["checkpoint_id"] == tiny_ckpt.checkpoint_id


def test_adapt_reduces_support_loss(tiny_ckpt):
    from graspteach.model.losses import compute_loss
    from graspteach.model.reptile import support_tensors

    support = make_support(10, seed=5)
    images, masks = support_tensors(support)
    net = build_model(TINY)

    def loss_of(params):
        net.load_state_dict(params.tensors)
        net.eval()
        with torch.no_grad():
            return float(compute_loss("bce+dice", net(images), masks))

    cfg = tiny_cfg(inner_lr=1e-2)
    adapted = adapt_few_shot(tiny_ckpt, support, steps=60, cfg=cfg, seed=1)
    assert loss_of(adapted.params) < loss_of(tiny_ckpt.params)


def test_adapt_leaves_checkpoint_bitwise_identical(tiny_ckpt):
    before = params_bytes(tiny_ckpt.params)
    adapt_few_shot(tiny_ckpt, make_support(3), steps=5)
    assert params_bytes(tiny_ckpt.params) == before


# --- predict_mask -----------------------------------------------------------

def _stub_params(bias: float):
    model = build_model(TINY, init_seed=3)
    with torch.no_grad():
        model.head.weight.zero_()
        model.head.bias.fill_(bias)
    return params_from_model(model)


def test_predict_extreme_logits_give_empty_and_full():
    image = np.random.default_rng(0).integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
    assert not predict_mask(_stub_params(-100.0), image).any()
    assert predict_mask(_stub_params(100.0), image).all()


def test_predict_threshold_zero_full_mask(tiny_ckpt):
    image = np.random.default_rng(1).integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
    assert predict_mask(tiny_ckpt.params, image, threshold=0.0).all()


def test_predict_resizes_odd_input(tiny_ckpt):
    image = np.random.default_rng(2).integers(0, 256, size=(50, 70, 3), dtype=np.uint8)
    mask = predict_mask(tiny_ckpt.params, image)
    assert mask.shape == (50, 70) and mask.dtype == bool


def test_predict_deterministic(tiny_ckpt):
    image = np.random.default_rng(3).integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
    np.testing.assert_array_equal(predict_mask(tiny_ckpt.params, image),
                                  predict_mask(tiny_ckpt.params, image))


# --- remove_outliers --------------------------------------------------------

def _two_components(b_rows: int, b_cols: int):
    """100-px component plus a b_rows x b_cols component, well separated."""
    mask = np.zeros((40, 80), dtype=bool)
    mask[2:12, 2:12] = True
    mask[20:20 + b_rows, 50:50 + b_cols] = True
    return mask


def test_outlier_boundary_strictly_less_than():
    mask49 = _two_components(7, 7)
    out49 = remove_outliers(mask49, ratio=0.5)
    assert out49.sum() == 100  # 49 < 50 -> removed
    mask50 = _two_components(5, 10)
    out50 = remove_outliers(mask50, ratio=0.5)
    assert out50.sum() == 150  # 50 >= 50 -> kept


def test_outlier_single_component_unchanged():
    mask = np.zeros((20, 20), dtype=bool)
    mask[3:9, 4:11] = True
    np.testing.assert_array_equal(remove_outliers(mask), mask)


def test_outlier_empty_mask():
    mask = np.zeros((10, 10), dtype=bool)
    out = remove_outliers(mask)
    assert not out.any()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 9))
def test_outlier_idempotent_subset_largest_kept(seed):
    rng = np.random.default_rng(seed)
    mask = rng.random((24, 24)) < 0.3
    out = remove_outliers(mask)
    assert not (out & ~mask).any()  # subset
    np.testing.assert_array_equal(remove_outliers(out), out)  # idempotent
    if mask.any():
        from graspteach import kernels

        labels, count = kernels.label_components(mask.astype(np.uint8), 8)
        areas = np.bincount(labels.ravel())[1:]
        largest = int(np.argmax(areas)) + 1
        assert out[labels == largest].all()  # largest component retained


def test_outlier_connectivity_choice():
    mask = np.zeros((8, 8), dtype=bool)
    mask[0:3, 0:3] = True
    mask[3, 3] = True  # diagonal touch only
    assert remove_outliers(mask, connectivity=8).sum() == 10
    assert remove_outliers(mask, connectivity=4).sum() == 9


def test_outlier_param_validation():
    with pytest.raises(ValueError):
        remove_outliers(np.zeros((4, 4), dtype=bool), ratio=1.5)
    with pytest.raises(ValueError):
        remove_outliers(np.zeros((4, 4), dtype=bool), connectivity=6)


# --- iou --------------------------------------------------------------------

def test_iou_examples():
    a = np.zeros((10, 10), dtype=bool)
    a[0:2, 0:5] = True
    assert iou(a, a) == 1.0
    b = np.zeros((10, 10), dtype=bool)
    b[5:7, 0:5] = True
    assert iou(a, b) == 0.0
    c = np.zeros((10, 10), dtype=bool)
    c[1:3, 0:5] = True  # overlap rows 1..2 -> 5 px; union 15
    assert iou(a, c) == pytest.approx(5 / 15)


def test_iou_both_empty_is_one():
    empty = np.zeros((4, 4), dtype=bool)
    assert iou(empty, empty) == 1.0


def test_iou_dim_mismatch():
    with pytest.raises(ValueError):
        iou(np.zeros((4, 4), dtype=bool), np.zeros((4, 5), dtype=bool))


def test_iou_matches_bruteforce_counting():
    rng = np.random.default_rng(7)
    for _ in range(100):
        a = rng.random((12, 12)) < 0.4
        b = rng.random((12, 12)) < 0.4
        inter = sum(1 for i in range(12) for j in range(12) if a[i, j] and b[i, j])
        union = sum(1 for i in range(12) for j in range(12) if a[i, j] or b[i, j])
        expected = 1.0 if union == 0 else inter / union
        assert iou(a, b) == expected
        assert iou(b, a) == iou(a, b)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 9))
def test_iou_non_increasing_under_disjoint_growth(seed):
    rng = np.random.default_rng(seed)
    a = rng.random((10, 10)) < 0.4
    b = a.copy()
    before = iou(a, b)
    free = np.flatnonzero(~(a | b))
    if free.size:
        grown = b.ravel().copy()
        grown[rng.choice(free, size=min(5, free.size), replace=False)] = True
        assert iou(a, grown.reshape(b.shape)) <= before


# --- evaluate_suite ---------------------------------------------------------

def test_evaluate_oracle_model_scores_one(tmp_path):
    for i in range(3):
        make_task_dir(tmp_path, f"task{i}", n_samples=9, full_masks=True, seed=i)
    ckpt = save_checkpoint(tmp_path / "ck", _stub_params(100.0),
                           {"config": tiny_cfg().to_dict()})
    report = evaluate_suite(ckpt, tmp_path, shots=8, steps=0)
    assert report.global_miou == pytest.approx(1.0)
    assert all(len(t.ious) == 1 for t in report.tasks)  # 9 samples, 8 shots -> 1 query


def test_evaluate_custom_protocol_split(tmp_path):
    make_task_dir(tmp_path, "custom", n_samples=12, seed=0)
    ckpt = save_checkpoint(tmp_path / "ck", _stub_params(-100.0),
                           {"config": tiny_cfg().to_dict()})
    report = evaluate_suite(ckpt, tmp_path, shots=10, steps=0)
    assert len(report.tasks[0].ious) == 2  # 12 samples, 10 shots -> 2 queries
    assert report.global_miou == pytest.approx(0.0)  # empty preds vs nonempty masks


def test_evaluate_global_mean_is_mean_of_task_means(tmp_path):
    for i in range(4):
        make_task_dir(tmp_path, f"t{i}", n_samples=5, seed=i)
    ckpt = save_checkpoint(tmp_path / "ck", params_from_model(build_model(TINY, 1)),
                           {"config": tiny_cfg().to_dict()})
    report = evaluate_suite(ckpt, tmp_path, shots=3, steps=1)
    hand = np.mean([t.mean for t in report.tasks if not t.skipped])
    assert abs(report.global_miou - hand) <= 1e-9
    for t in report.tasks:
        assert t.mean == pytest.approx(float(np.mean(t.ious)))
        assert all(0.0 <= v <= 1.0 for v in t.ious)


def test_evaluate_skips_undersized(tmp_path):
    make_task_dir(tmp_path, "big", n_samples=6, seed=0)
    make_task_dir(tmp_path, "small", n_samples=2, seed=1)
    ckpt = save_checkpoint(tmp_path / "ck", params_from_model(build_model(TINY, 1)),
                           {"config": tiny_cfg().to_dict()})
    report = evaluate_suite(ckpt, tmp_path, shots=5, steps=0)
    skipped = [t for t in report.tasks if t.skipped]
    assert len(skipped) == 1 and skipped[0].task_id == "small"
    assert math.isfinite(report.global_miou)


def test_evaluate_n_query_pins_test_images(tmp_path):
    make_task_dir(tmp_path, "t", n_samples=12, seed=0)
    ckpt = save_checkpoint(tmp_path / "ck", params_from_model(build_model(TINY, 1)),
                           {"config": tiny_cfg().to_dict()})
    r1 = evaluate_suite(ckpt, tmp_path, shots=1, steps=0, n_query=2)
    r10 = evaluate_suite(ckpt, tmp_path, shots=10, steps=0, n_query=2)
    assert len(r1.tasks[0].ious) == len(r10.tasks[0].ious) == 2
    # steps=0 -> same model; same pinned queries -> identical scores
    assert r1.tasks[0].ious == r10.tasks[0].ious


def test_outlier_elim_improves_on_spurious_component(tmp_path):
    # ground truth = one block; prediction = same block + far small blob
    gt = np.zeros((32, 32), dtype=bool)
    gt[4:14, 4:14] = True
    pred = gt.copy()
    pred[24:27, 24:27] = True
    assert iou(remove_outliers(pred), gt) > iou(pred, gt)


def test_report_serialization(tmp_path):
    make_task_dir(tmp_path, "t", n_samples=5, seed=0)
    ckpt = save_checkpoint(tmp_path / "ck", params_from_model(build_model(TINY, 1)),
                           {"config": tiny_cfg().to_dict()})
    report = evaluate_suite(ckpt, tmp_path, shots=3, steps=0)
    write_report(report, tmp_path / "out" / "report.json")
    assert (tmp_path / "out" / "report.json").exists()
    table = (tmp_path / "out" / "report.txt").read_text()
    assert "Average (all tasks)" in table and "t" in table
    import json as json_mod

    payload = json_mod.loads((tmp_path / "out" / "report.json").read_text())
    assert set(payload) == {"global_miou", "tasks", "config"}
