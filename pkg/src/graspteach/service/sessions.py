"""Server-side annotation sessions.

A session owns the click history and a mask stack with one entry per
click state (index 0 is the empty mask), so undo is a pop. The mask is
recomputed from the full history on every click; when the same pixel was
clicked more than once, the latest click's polarity wins.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field

import numpy as np

from ..data.tasks import TaskSample, append_sample
from .segmenter import GeodesicParams, get_segmenter

POLARITIES = ("positive", "negative")


@dataclass
class ClickEvent:
    x: int
    y: int
    polarity: str

    def __post_init__(self):
        if self.polarity not in POLARITIES:
            raise ValueError(f"polarity must be one of {POLARITIES}")


@dataclass
class AnnotationSession:
    session_id: str
    scene_id: str
    image: np.ndarray
    segmenter: str = "geodesic"
    params: GeodesicParams = field(default_factory=GeodesicParams)
    clicks: list[ClickEvent] = field(default_factory=list)
    mask_stack: list[np.ndarray] = field(default_factory=list)
    commit_count: int = 0

    def __post_init__(self):
        if not self.mask_stack:
            self.mask_stack.append(self._empty_mask())
        self._lock = threading.Lock()

    def _empty_mask(self) -> np.ndarray:
        return np.zeros(self.image.shape[:2], dtype=bool)

    @property
    def current_mask(self) -> np.ndarray:
        return self.mask_stack[-1]

    def _recompute(self) -> np.ndarray:
        # latest click per pixel decides that pixel's seed polarity
        last: dict[tuple[int, int], str] = {}
        for c in self.clicks:
            last[(c.x, c.y)] = c.polarity
        positives = [p for p, pol in last.items() if pol == "positive"]
        negatives = [p for p, pol in last.items() if pol == "negative"]
        if not positives:
            return self._empty_mask()
        segment = get_segmenter(self.segmenter)
        return segment(self.image, positives, negatives, self.params)

    def apply_click(self, click: ClickEvent) -> np.ndarray:
        h, w = self.image.shape[:2]
        if not (0 <= click.x < w and 0 <= click.y < h):
            raise ValueError(f"click ({click.x}, {click.y}) outside image {w}x{h}")
        with self._lock:
            self.clicks.append(click)
            try:
                mask = self._recompute()
            except BaseException:
                self.clicks.pop()
                raise
            self.mask_stack.append(mask)
            return mask

    def undo_click(self) -> np.ndarray:
        with self._lock:
            if self.clicks:
                self.clicks.pop()
                self.mask_stack.pop()
            return self.current_mask

    def commit_demonstration(self, task_id: str, tasks_dir) -> dict:
        with self._lock:
            mask = self.current_mask
            if not mask.any():
                raise ValueError("empty demonstration")
            record = append_sample(tasks_dir / task_id, task_id,
                                   TaskSample(image=self.image, mask=mask,
                                              scene_id=self.scene_id,
                                              frame_id=f"commit_{self.commit_count:03d}"))
            self.commit_count += 1
            return record


class SessionStore:
    def __init__(self):
        self._sessions: dict[str, AnnotationSession] = {}
        self._lock = threading.Lock()

    def create(self, scene_id: str, image: np.ndarray, segmenter: str = "geodesic",
               params: GeodesicParams | None = None) -> AnnotationSession:
        session = AnnotationSession(session_id=uuid.uuid4().hex[:12], scene_id=scene_id,
                                    image=image, segmenter=segmenter,
                                    params=params or GeodesicParams())
        with self._lock:
            self._sessions[session.session_id] = session
        return session

    def get(self, session_id: str) -> AnnotationSession:
        with self._lock:
            if session_id not in self._sessions:
                raise KeyError(f"unknown session {session_id}")
            return self._sessions[session_id]
