"""Confusion-matrix segmentation metrics."""
from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

import numpy as np

from ._types import IGNORE
from .core import LabelMap, require_same_shape
from .exceptions import EmptySplitError
from .model import LinearSegModel, predict_labels


@dataclass(frozen=True)
class IoUResult:
    """Per-class IoU and their mean

    ``per_class[c]`` is ``None`` for classes absent from both prediction and ground truth;
    those classes are left out of ``miou``.
    """
    per_class: Tuple[Optional[float], ...]
    miou: float

    def as_row(self) -> List[Optional[float]]:
        return list(self.per_class)


def confusion_matrix(prediction: LabelMap, truth: LabelMap, num_classes: int) -> np.ndarray:
    """``C × C`` counts, rows are ground truth, columns predictions. Ignore pixels are skipped."""
    require_same_shape("prediction", truth.shape, prediction.shape)
    truth.validate(num_classes)
    valid = truth.data != IGNORE
    pred = np.clip(prediction.data[valid], 0, num_classes - 1)
    codes = truth.data[valid] * num_classes + pred
    return np.bincount(codes, minlength=num_classes * num_classes).reshape(num_classes, num_classes)


def iou_from_confusion(matrix: np.ndarray) -> IoUResult:
    """``TP / (TP + FP + FN)`` per class

    :param np.ndarray matrix: Accumulated confusion matrix
    :return IoUResult:
    """
    tp = np.diag(matrix).astype(np.float64)
    union = matrix.sum(axis=0) + matrix.sum(axis=1) - np.diag(matrix)
    per_class = tuple(float(t / u) if u > 0 else None for t, u in zip(tp, union))
    scored = [v for v in per_class if v is not None]
    return IoUResult(per_class, float(np.mean(scored)) if scored else 0.0)


def miou_from_predictions(pairs: Iterable[Tuple[LabelMap, LabelMap]], num_classes: int) -> IoUResult:
    """IoU over every ``(prediction, truth)`` pair, accumulated before dividing

    :raises EmptySplitError: ``pairs`` is empty
    """
    matrix = np.zeros((num_classes, num_classes), dtype=np.int64)
    seen = 0
    for prediction, truth in pairs:
        matrix += confusion_matrix(prediction, truth, num_classes)
        seen += 1
    if seen == 0:
        raise EmptySplitError("Cannot evaluate an empty split")
    return iou_from_confusion(matrix)


def evaluate_miou(model: LinearSegModel, scenes) -> IoUResult:
    """Evaluates ``model`` on a labelled split (any iterable of scenes with ``image`` and ``labels``)

    :param LinearSegModel model:
    :param scenes: :class:`scmixlab.synth.Split` or a sequence of scene samples
    :raises EmptySplitError:
    :return IoUResult:
    """
    return miou_from_predictions(
        ((predict_labels(model, scene.image), scene.labels) for scene in scenes), model.num_classes
    )
