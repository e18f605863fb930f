from .adapt import AdaptedModel, adapt_few_shot, predict_mask
from .metrics import EvalReport, evaluate_suite, iou
from .outliers import remove_outliers

__all__ = [
    "AdaptedModel",
    "adapt_few_shot",
    "predict_mask",
    "remove_outliers",
    "iou",
    "evaluate_suite",
    "EvalReport",
]
