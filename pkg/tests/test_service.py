import base64
import io
import threading
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from graspteach import pngio
from graspteach.data.tasks import load_task
from graspteach.model.checkpoint import params_from_model, save_checkpoint
from graspteach.model.unet import build_model
from graspteach.service.app import create_app
from graspteach.service.jobs import JobExists, JobManager
from graspteach.service.sessions import AnnotationSession, ClickEvent

from .conftest import make_task_dir
from .test_reptile import TINY, tiny_cfg


def _scene_image():
    image = np.full((48, 64, 3), 40, dtype=np.uint8)
    image[10:30, 20:44] = (200, 60, 60)  # color-isolated blob
    return image


def _decode_mask(payload: dict) -> np.ndarray:
    raw = base64.b64decode(payload["mask"])
    return np.asarray(Image.open(io.BytesIO(raw)).convert("L")) >= 128


@pytest.fixture()
def service(tmp_path):
    data_dir = tmp_path / "data"
    (data_dir / "scenes").mkdir(parents=True)
    pngio.write_rgb(data_dir / "scenes" / "bench.png", _scene_image())
    params = params_from_model(build_model(TINY, init_seed=0))
    save_checkpoint(tmp_path / "ckpt", params, {"config": tiny_cfg().to_dict()})
    app = create_app(data_dir, tmp_path / "ckpt")
    return TestClient(app), data_dir


def _start_session(client) -> str:
    resp = client.post("/sessions", json={"scene_id": "bench"})
    assert resp.status_code == 201
    return resp.json()["session_id"]


def test_scene_listing_and_image(service):
    client, _ = service
    assert client.get("/scenes").json() == {"scenes": ["bench"]}
    resp = client.get("/scenes/bench/image")
    assert resp.status_code == 200
    img = np.asarray(Image.open(io.BytesIO(resp.content)).convert("RGB"))
    np.testing.assert_array_equal(img, _scene_image())
    assert client.get("/scenes/nope/image").status_code == 404


def test_click_returns_mask_containing_pixel(service):
    client, _ = service
    sid = _start_session(client)
    resp = client.post(f"/sessions/{sid}/clicks",
                       json={"x": 30, "y": 20, "polarity": "positive"})
    assert resp.status_code == 200
    mask = _decode_mask(resp.json())
    assert mask[20, 30]
    assert resp.json()["click_count"] == 1
    assert resp.json()["mask_area"] == int(mask.sum()) > 0


def test_negative_click_excludes_pixel(service):
    client, _ = service
    sid = _start_session(client)
    client.post(f"/sessions/{sid}/clicks", json={"x": 30, "y": 20, "polarity": "positive"})
    resp = client.post(f"/sessions/{sid}/clicks",
                       json={"x": 40, "y": 25, "polarity": "negative"})
    mask = _decode_mask(resp.json())
    assert not mask[25, 40]


def test_undo_restores_previous_mask_exactly(service):
    client, _ = service
    sid = _start_session(client)
    first = client.post(f"/sessions/{sid}/clicks",
                        json={"x": 30, "y": 20, "polarity": "positive"}).json()
    client.post(f"/sessions/{sid}/clicks", json={"x": 25, "y": 15, "polarity": "negative"})
    undone = client.post(f"/sessions/{sid}/undo").json()
    np.testing.assert_array_equal(_decode_mask(undone), _decode_mask(first))
    assert undone["click_count"] == 1
    # undo to empty, then undo again is a no-op
    empty = client.post(f"/sessions/{sid}/undo").json()
    assert empty["mask_area"] == 0 and empty["click_count"] == 0
    again = client.post(f"/sessions/{sid}/undo").json()
    assert again["mask_area"] == 0 and again["click_count"] == 0


def test_out_of_bounds_click_rejected_session_unchanged(service):
    client, _ = service
    sid = _start_session(client)
    resp = client.post(f"/sessions/{sid}/clicks",
                       json={"x": 200, "y": 10, "polarity": "positive"})
    assert resp.status_code == 400
    follow = client.post(f"/sessions/{sid}/undo").json()
    assert follow["click_count"] == 0


def test_unknown_session_404(service):
    client, _ = service
    assert client.post("/sessions/deadbeef/undo").status_code == 404


def test_commit_roundtrip_and_shot_indices(service):
    client, data_dir = service
    sid = _start_session(client)
    click = client.post(f"/sessions/{sid}/clicks",
                        json={"x": 30, "y": 20, "polarity": "positive"}).json()
    records = [client.post(f"/sessions/{sid}/commit",
                           json={"task_id": "grip"}).json() for _ in range(3)]
    assert [r["shot_index"] for r in records] == [0, 1, 2]
    task = load_task(data_dir / "tasks" / "grip")
    assert len(task.support) == 3
    np.testing.assert_array_equal(task.support[0].mask, _decode_mask(click))
    np.testing.assert_array_equal(task.support[0].image, _scene_image())
    listing = client.get("/tasks").json()
    assert listing == {"tasks": [{"task_id": "grip", "n_samples": 3}]}
    detail = client.get("/tasks/grip").json()
    assert len(detail["samples"]) == 3


def test_commit_empty_mask_rejected(service):
    client, _ = service
    sid = _start_session(client)
    resp = client.post(f"/sessions/{sid}/commit", json={"task_id": "grip"})
    assert resp.status_code == 400
    assert "empty demonstration" in resp.json()["detail"]


def test_ten_commits_form_custom_protocol_task(service):
    client, data_dir = service
    sid = _start_session(client)
    client.post(f"/sessions/{sid}/clicks", json={"x": 30, "y": 20, "polarity": "positive"})
    for _ in range(10):
        client.post(f"/sessions/{sid}/commit", json={"task_id": "grip"})
    assert len(load_task(data_dir / "tasks" / "grip").support) == 10


def test_adapt_job_lifecycle_and_prediction(service):
    client, _ = service
    sid = _start_session(client)
    client.post(f"/sessions/{sid}/clicks", json={"x": 30, "y": 20, "polarity": "positive"})
    client.post(f"/sessions/{sid}/commit", json={"task_id": "grip"})

    resp = client.post("/tasks/grip/adapt", json={"steps": 2})
    assert resp.status_code == 202
    job_id = resp.json()["job_id"]
    for _ in range(200):
        state = client.get(f"/jobs/{job_id}").json()["state"]
        if state in ("done", "failed"):
            break
        time.sleep(0.05)
    assert state == "done"

    pred = client.get("/tasks/grip/predict", params={"scene": "bench"})
    assert pred.status_code == 200
    assert pred.headers["content-type"] == "image/png"
    assert pred.headers["x-job-id"] == job_id
    assert pred.headers["x-steps"] == "2"
    again = client.get("/tasks/grip/predict", params={"scene": "bench"})
    assert again.content == pred.content  # stateless inference


def test_adapt_unknown_task_and_not_adapted(service):
    client, _ = service
    assert client.post("/tasks/nope/adapt", json={}).status_code == 404
    resp = client.get("/tasks/nope/predict", params={"scene": "bench"})
    assert resp.status_code == 409
    assert "not adapted" in resp.json()["detail"]


def test_outlier_toggle_changes_served_mask(service, monkeypatch):
    client, _ = service
    sid = _start_session(client)
    client.post(f"/sessions/{sid}/clicks", json={"x": 30, "y": 20, "polarity": "positive"})
    client.post(f"/sessions/{sid}/commit", json={"task_id": "grip"})
    client.post("/tasks/grip/adapt", json={"steps": 0})
    for _ in range(100):
        if client.get("/tasks/grip").status_code == 200 and \
           client.get("/tasks/grip/predict", params={"scene": "bench"}).status_code == 200:
            break
        time.sleep(0.05)

    two_comp = np.zeros((48, 64), dtype=bool)
    two_comp[10:30, 20:40] = True  # 400 px main region
    two_comp[40:43, 55:58] = True  # 9 px outlier

    import graspteach.service.app as app_mod

    monkeypatch.setattr(app_mod, "predict_mask",
                        lambda model, image, threshold=0.5, runner=None: two_comp.copy())
    raw = client.get("/tasks/grip/predict",
                     params={"scene": "bench", "outlier_elim": "false"})
    cleaned = client.get("/tasks/grip/predict",
                         params={"scene": "bench", "outlier_elim": "true"})
    mask_raw = np.asarray(Image.open(io.BytesIO(raw.content)).convert("L")) >= 128
    mask_clean = np.asarray(Image.open(io.BytesIO(cleaned.content)).convert("L")) >= 128
    np.testing.assert_array_equal(mask_raw, two_comp)
    diff = mask_raw & ~mask_clean
    assert diff.sum() == 9 and mask_clean.sum() == 400
    assert cleaned.headers["x-outlier-elim"] == "true"


def test_session_mask_stack_invariant_under_interleaving():
    rng = np.random.default_rng(0)
    session = AnnotationSession(session_id="s", scene_id="x", image=_scene_image())
    for step in range(40):
        if session.clicks and rng.random() < 0.4:
            session.undo_click()
        else:
            session.apply_click(ClickEvent(x=int(rng.integers(64)),
                                           y=int(rng.integers(48)),
                                           polarity=str(rng.choice(["positive", "negative"]))))
        assert len(session.mask_stack) == len(session.clicks) + 1


def test_conflicting_clicks_latest_polarity_wins():
    session = AnnotationSession(session_id="s", scene_id="x", image=_scene_image())
    session.apply_click(ClickEvent(x=30, y=20, polarity="positive"))
    mask_neg = session.apply_click(ClickEvent(x=30, y=20, polarity="negative"))
    assert not mask_neg.any()  # no positive seeds remain
    mask_pos = session.apply_click(ClickEvent(x=30, y=20, polarity="positive"))
    assert mask_pos[20, 30]


def test_job_manager_mutual_exclusion(tmp_path, monkeypatch):
    data_dir = tmp_path / "tasks"
    make_task_dir(data_dir, "grip", n_samples=2)
    params = params_from_model(build_model(TINY, init_seed=0))
    ckpt = save_checkpoint(tmp_path / "ck", params, {"config": tiny_cfg().to_dict()})

    gate = threading.Event()

    def slow_adapt(ckpt, support, steps, cfg, task_id="", seed=0, runner=None):
        gate.wait(5.0)
        from graspteach.runtime.adapt import AdaptedModel

        return AdaptedModel(params=ckpt.params.clone(),
                            provenance={"task_id": task_id, "steps": steps,
                                        "shots": len(support), "checkpoint_id": ""})

    import graspteach.service.jobs as jobs_mod

    monkeypatch.setattr(jobs_mod, "adapt_few_shot", slow_adapt)
    manager = JobManager(ckpt, data_dir)
    first = manager.start("grip", steps=1)
    with pytest.raises(JobExists) as exc:
        manager.start("grip", steps=1)
    assert exc.value.job.job_id == first.job_id
    gate.set()
    assert manager.wait(first.job_id).state == "done"
    # terminal job frees the slot
    second = manager.start("grip", steps=1)
    assert second.job_id != first.job_id
    assert manager.wait(second.job_id).state == "done"


def test_job_rejects_task_without_supports(tmp_path):
    data_dir = tmp_path / "tasks"
    (data_dir / "empty").mkdir(parents=True)
    import json

    (data_dir / "empty" / "task.json").write_text(
        json.dumps({"task_id": "empty", "samples": []}))
    params = params_from_model(build_model(TINY, init_seed=0))
    ckpt = save_checkpoint(tmp_path / "ck", params, {"config": tiny_cfg().to_dict()})
    manager = JobManager(ckpt, data_dir)
    with pytest.raises(ValueError, match="no support samples"):
        manager.start("empty")
    with pytest.raises(FileNotFoundError):
        manager.start("missing")


def test_committed_task_loads_into_runtime_unchanged(service):
    """Commits must produce task dirs the evaluation stack reads directly."""
    client, data_dir = service
    sid = _start_session(client)
    click = client.post(f"/sessions/{sid}/clicks",
                        json={"x": 30, "y": 20, "polarity": "positive"}).json()
    client.post(f"/sessions/{sid}/commit", json={"task_id": "grip"})
    task = load_task(data_dir / "tasks" / "grip")
    assert task.task_id == "grip"
    np.testing.assert_array_equal(task.support[0].mask, _decode_mask(click))
