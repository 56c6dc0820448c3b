import numpy as np
import pytest

from scmixlab._types import IGNORE
from scmixlab.core import ImageTensor, LabelMap
from scmixlab.exceptions import EmptySplitError
from scmixlab.metrics import confusion_matrix, evaluate_miou, iou_from_confusion, miou_from_predictions
from scmixlab.model import LinearSegModel
from scmixlab.synth import SceneSample


def half_and_half():
    data = np.zeros((4, 4), dtype=np.int64)
    data[:, 2:] = 1
    return LabelMap(data)


def test_confusion_counts():
    truth = LabelMap(np.array([[0, 1, 1, IGNORE]]))
    prediction = LabelMap(np.array([[0, 0, 1, 1]]))
    assert confusion_matrix(prediction, truth, 2).tolist() == [[1, 0], [1, 1]]


def test_perfect_prediction():
    truth = LabelMap(np.random.default_rng(0).integers(0, 3, size=(6, 6)))
    result = miou_from_predictions([(truth, truth)], 3)
    assert result.miou == 1.0
    assert result.per_class == (1.0, 1.0, 1.0)


def test_constant_prediction():
    prediction = LabelMap(np.zeros((4, 4), dtype=np.int64))
    result = miou_from_predictions([(prediction, half_and_half())], 2)
    assert result.per_class == (0.5, 0.0)
    assert result.miou == 0.25


def test_zero_model_predicts_background():
    scene = SceneSample(ImageTensor(np.full((4, 4, 3), 0.3)), half_and_half(), 1)
    result = evaluate_miou(LinearSegModel.zeros(2), [scene])
    assert result.per_class == (0.5, 0.0)


def test_absent_class_is_skipped():
    truth = LabelMap(np.array([[0, 0], [2, 2]]))
    result = miou_from_predictions([(truth, truth)], 3)
    assert result.per_class == (1.0, None, 1.0)
    assert result.miou == 1.0
    assert result.as_row() == [1.0, None, 1.0]


def test_ignore_pixels_do_not_count():
    truth = LabelMap(np.array([[0, IGNORE], [1, IGNORE]]))
    prediction = LabelMap(np.array([[0, 0], [1, 0]]))
    assert miou_from_predictions([(prediction, truth)], 2).miou == 1.0


def test_order_does_not_matter():
    rng = np.random.default_rng(4)
    pairs = [
        (LabelMap(rng.integers(0, 3, size=(5, 5))), LabelMap(rng.integers(0, 3, size=(5, 5))))
        for _ in range(6)
    ]
    forward = miou_from_predictions(pairs, 3)
    backward = miou_from_predictions(reversed(pairs), 3)
    assert forward == backward


def test_accumulates_before_dividing():
    a = LabelMap(np.array([[0, 0, 0, 1]]))
    b = LabelMap(np.array([[1, 1, 1, 1]]))
    pooled = miou_from_predictions([(a, a), (a, b)], 2)
    matrix = confusion_matrix(a, a, 2) + confusion_matrix(a, b, 2)
    assert pooled == iou_from_confusion(matrix)
    assert pooled.per_class[1] == pytest.approx(2 / 5)


def test_empty_split():
    with pytest.raises(EmptySplitError):
        miou_from_predictions([], 2)
