"""Background adaptation jobs, one non-terminal job per task."""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from ..data.tasks import load_task
from ..model.checkpoint import Checkpoint
from ..model.reptile import MetaTrainConfig
from ..runtime.adapt import AdaptedModel, adapt_few_shot, config_from_checkpoint

TERMINAL_STATES = ("done", "failed")


@dataclass
class AdaptationJob:
    job_id: str
    task_id: str
    state: str = "queued"  # queued -> running -> done | failed
    shots: int = 0
    steps: int = 60
    error: str | None = None
    checkpoint_id: str = ""

    def to_dict(self) -> dict:
        d = {"job_id": self.job_id, "task_id": self.task_id, "state": self.state,
             "shots": self.shots, "steps": self.steps, "checkpoint_id": self.checkpoint_id}
        if self.error:
            d["error"] = self.error
        return d


class JobExists(RuntimeError):
    def __init__(self, job: AdaptationJob):
        super().__init__(f"task {job.task_id} already has job {job.job_id} ({job.state})")
        self.job = job


class JobManager:
    def __init__(self, checkpoint: Checkpoint, tasks_dir,
                 cfg: MetaTrainConfig | None = None):
        self.checkpoint = checkpoint
        self.tasks_dir = Path(tasks_dir)
        self.cfg = cfg or config_from_checkpoint(checkpoint)
        self._jobs: dict[str, AdaptationJob] = {}
        self._threads: dict[str, threading.Thread] = {}
        self._models: dict[str, AdaptedModel] = {}
        self._lock = threading.Lock()

    def start(self, task_id: str, steps: int | None = None) -> AdaptationJob:
        task_dir = self.tasks_dir / task_id
        if not (task_dir / "task.json").exists():
            raise FileNotFoundError(f"unknown task {task_id}")
        task = load_task(task_dir)
        if not task.support:
            raise ValueError(f"task {task_id} has no support samples")
        steps = self.cfg.inner_steps_test if steps is None else steps
        with self._lock:
            existing = next((j for j in self._jobs.values()
                             if j.task_id == task_id and j.state not in TERMINAL_STATES), None)
            if existing is not None:
                raise JobExists(existing)
            job = AdaptationJob(job_id=uuid.uuid4().hex[:12], task_id=task_id,
                                shots=len(task.support), steps=steps,
                                checkpoint_id=self.checkpoint.checkpoint_id)
            self._jobs[job.job_id] = job
            thread = threading.Thread(target=self._run, args=(job, task.support),
                                      daemon=True)
            self._threads[job.job_id] = thread
        thread.start()
        return job

    def _run(self, job: AdaptationJob, support) -> None:
        job.state = "running"
        try:
            model = adapt_few_shot(self.checkpoint, support, job.steps, self.cfg,
                                   task_id=job.task_id)
            with self._lock:
                self._models[job.task_id] = model
            job.state = "done"
        except Exception as exc:
            job.error = f"{type(exc).__name__}: {exc}"
            job.state = "failed"

    def get(self, job_id: str) -> AdaptationJob:
        with self._lock:
            if job_id not in self._jobs:
                raise KeyError(f"unknown job {job_id}")
            return self._jobs[job_id]

    def job_for_task(self, task_id: str) -> AdaptationJob | None:
        with self._lock:
            jobs = [j for j in self._jobs.values() if j.task_id == task_id]
            return jobs[-1] if jobs else None

    def model_for(self, task_id: str) -> AdaptedModel | None:
        with self._lock:
            return self._models.get(task_id)

    def wait(self, job_id: str, timeout: float = 60.0) -> AdaptationJob:
        thread = self._threads.get(job_id)
        if thread is not None:
            thread.join(timeout)
        return self.get(job_id)
