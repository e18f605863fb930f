from .scenes import SceneBundle, load_scene_bundle, load_scene_sequence
from .tasks import FewShotTask, TaskSample, load_task, read_split, split_tasks, write_task

__all__ = [
    "SceneBundle",
    "load_scene_bundle",
    "load_scene_sequence",
    "FewShotTask",
    "TaskSample",
    "load_task",
    "write_task",
    "split_tasks",
    "read_split",
]
