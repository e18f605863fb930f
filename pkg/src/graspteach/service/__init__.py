from .jobs import AdaptationJob, JobManager
from .segmenter import GeodesicParams, default_click_segment, get_segmenter, register_segmenter
from .sessions import AnnotationSession, ClickEvent, SessionStore

__all__ = [
    "AdaptationJob",
    "JobManager",
    "GeodesicParams",
    "default_click_segment",
    "get_segmenter",
    "register_segmenter",
    "AnnotationSession",
    "ClickEvent",
    "SessionStore",
]
