"""HTTP API for the interactive teaching loop.

Sessions map clicks to masks, commits append demonstration shots to task
directories, adaptation jobs run in the background against the configured
checkpoint, and predictions are served as PNG masks.
"""

from __future__ import annotations

import base64
import json
import os
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel

from .. import pngio
from ..data.tasks import list_task_dirs
from ..model.checkpoint import load_checkpoint
from ..runtime.adapt import predict_mask
from ..runtime.outliers import remove_outliers
from .jobs import JobExists, JobManager
from .segmenter import GeodesicParams
from .sessions import ClickEvent, SessionStore


class SessionRequest(BaseModel):
    scene_id: str
    segmenter: str = "geodesic"


class ClickRequest(BaseModel):
    x: int
    y: int
    polarity: str


class CommitRequest(BaseModel):
    task_id: str


class AdaptRequest(BaseModel):
    steps: int | None = None


def _mask_payload(mask: np.ndarray, session) -> dict:
    return {"mask": base64.b64encode(pngio.encode_png(mask)).decode(),
            "click_count": len(session.clicks),
            "mask_area": int(mask.sum())}


def create_app(data_dir=None, checkpoint_dir=None,
               segmenter_params: GeodesicParams | None = None) -> FastAPI:
    data_dir = Path(data_dir or os.environ.get("GT_DATA_DIR", "."))
    checkpoint_dir = checkpoint_dir or os.environ.get("GT_CHECKPOINT")
    tasks_dir = data_dir / "tasks"
    scenes_dir = data_dir / "scenes"
    params = segmenter_params or GeodesicParams()

    app = FastAPI(title="graspteach annotation service")
    sessions = SessionStore()
    jobs: JobManager | None = None
    if checkpoint_dir:
        jobs = JobManager(load_checkpoint(checkpoint_dir), tasks_dir)
    app.state.sessions = sessions
    app.state.jobs = jobs

    def load_scene(scene_id: str) -> np.ndarray:
        for candidate in (scenes_dir / f"{scene_id}.png", scenes_dir / scene_id / "rgb.png"):
            if candidate.exists():
                return pngio.read_rgb(candidate)
        raise HTTPException(404, f"unknown scene {scene_id}")

    def get_session(session_id: str):
        try:
            return sessions.get(session_id)
        except KeyError:
            raise HTTPException(404, f"unknown session {session_id}")

    def get_jobs() -> JobManager:
        if jobs is None:
            raise HTTPException(503, "no checkpoint configured; adaptation disabled")
        return jobs

    @app.get("/scenes")
    def list_scenes():
        ids = sorted({p.stem for p in scenes_dir.glob("*.png")} |
                     {p.parent.name for p in scenes_dir.glob("*/rgb.png")})
        return {"scenes": ids}

    @app.get("/scenes/{scene_id}/image")
    def scene_image(scene_id: str):
        return Response(pngio.encode_png(load_scene(scene_id)), media_type="image/png")

    @app.post("/sessions", status_code=201)
    def create_session(req: SessionRequest):
        image = load_scene(req.scene_id)
        session = sessions.create(req.scene_id, image, segmenter=req.segmenter,
                                  params=params)
        return {"session_id": session.session_id, "scene_id": req.scene_id,
                "width": image.shape[1], "height": image.shape[0]}

    @app.post("/sessions/{session_id}/clicks")
    def add_click(session_id: str, req: ClickRequest):
        session = get_session(session_id)
        try:
            mask = session.apply_click(ClickEvent(x=req.x, y=req.y, polarity=req.polarity))
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        return _mask_payload(mask, session)

    @app.post("/sessions/{session_id}/undo")
    def undo(session_id: str):
        session = get_session(session_id)
        return _mask_payload(session.undo_click(), session)

    @app.post("/sessions/{session_id}/commit")
    def commit(session_id: str, req: CommitRequest):
        session = get_session(session_id)
        try:
            return session.commit_demonstration(req.task_id, tasks_dir)
        except ValueError as exc:
            raise HTTPException(400, str(exc))

    @app.get("/tasks")
    def list_tasks():
        out = []
        for tdir in list_task_dirs(tasks_dir) if tasks_dir.exists() else []:
            with open(tdir / "task.json") as f:
                manifest = json.load(f)
            out.append({"task_id": manifest["task_id"],
                        "n_samples": len(manifest["samples"])})
        return {"tasks": out}

    @app.get("/tasks/{task_id}")
    def task_detail(task_id: str):
        manifest_path = tasks_dir / task_id / "task.json"
        if not manifest_path.exists():
            raise HTTPException(404, f"unknown task {task_id}")
        with open(manifest_path) as f:
            return json.load(f)

    @app.post("/tasks/{task_id}/adapt", status_code=202)
    def adapt(task_id: str, req: AdaptRequest):
        manager = get_jobs()
        try:
            job = manager.start(task_id, steps=req.steps)
        except FileNotFoundError as exc:
            raise HTTPException(404, str(exc))
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        except JobExists as exc:
            raise HTTPException(409, detail={"error": str(exc),
                                             "job_id": exc.job.job_id})
        return job.to_dict()

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        try:
            return get_jobs().get(job_id).to_dict()
        except KeyError as exc:
            raise HTTPException(404, str(exc))

    @app.get("/tasks/{task_id}/predict")
    def predict(task_id: str, scene: str, outlier_elim: bool = False,
                threshold: float = 0.5):
        manager = get_jobs()
        model = manager.model_for(task_id)
        if model is None:
            raise HTTPException(409, f"task {task_id} is not adapted")
        image = load_scene(scene)
        mask = predict_mask(model, image, threshold=threshold)
        if outlier_elim:
            mask = remove_outliers(mask)
        job = manager.job_for_task(task_id)
        headers = {"X-Job-Id": job.job_id if job else "",
                   "X-Steps": str(model.provenance.get("steps", "")),
                   "X-Threshold": str(threshold),
                   "X-Outlier-Elim": str(outlier_elim).lower()}
        return Response(pngio.encode_png(mask), media_type="image/png",
                        headers=headers)

    return app


def serve(host: str, port: int, data_dir, checkpoint_dir,
          segmenter_params: GeodesicParams | None = None) -> None:
    import uvicorn

    app = create_app(data_dir, checkpoint_dir, segmenter_params)
    uvicorn.run(app, host=host, port=port)
