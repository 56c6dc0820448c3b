from math import e, log

import numpy as np
import pytest

from scmixlab._types import IGNORE, LossKind
from scmixlab.core import ImageTensor, LabelMap, ProbabilityMap, WeightMap, one_hot_encode
from scmixlab.exceptions import NonFiniteGradientError, ShapeMismatchError
from scmixlab.model import (
    FEATURE_DIM,
    LinearSegModel,
    LossTerm,
    ModelGradient,
    apply_step,
    batch_loss,
    ce_loss,
    confidence_weight,
    ema_update,
    featurize,
    load_model,
    loss_and_gradient,
    loss_gradient,
    predict_labels,
    predict_probs,
    pseudo_label,
    save_model,
    wce_loss,
)


def random_probs(rng, height, width, num_classes):
    raw = rng.random((height, width, num_classes)) + 1e-3
    return ProbabilityMap(raw / raw.sum(axis=2, keepdims=True))


def random_batch(rng, size=6, num_classes=3):
    terms = []
    for kind, weighted in ((LossKind.SOURCE_CE, False), (LossKind.TARGET_WCE, True)):
        image = ImageTensor(rng.random((size, size, 3)))
        labels = rng.integers(0, num_classes, size=(size, size))
        labels[0, :2] = IGNORE
        weights = WeightMap(rng.random((size, size))) if weighted else None
        terms.append(LossTerm(featurize(image), one_hot_encode(LabelMap(labels), num_classes), weights, kind, 0.5))
    return terms


def random_model(rng, num_classes=3):
    return LinearSegModel(rng.normal(scale=0.5, size=(num_classes, FEATURE_DIM)), rng.normal(scale=0.5, size=num_classes))


def total_loss(model, terms):
    return sum(batch_loss(model, terms).values())


@pytest.fixture()
def rng():
    return np.random.default_rng(17)


# Test featurize


def test_feature_layout(rng):
    image = ImageTensor(rng.random((5, 4, 3)))
    features = featurize(image)
    assert features.shape == (5, 4, FEATURE_DIM)
    assert features.dtype == np.float64
    assert np.array_equal(features[..., :3], image.data.astype(np.float64))
    assert features[2, 3, 9] == pytest.approx(3 / 4)
    assert features[2, 3, 10] == pytest.approx(2 / 5)


def test_local_statistics_on_constant_image():
    features = featurize(ImageTensor(np.full((4, 4, 3), 0.25)))
    assert np.allclose(features[..., 3:6], 0.25)
    assert np.allclose(features[..., 6:9], 0.0)


def test_local_mean_uses_clamped_border():
    data = np.zeros((3, 3, 3))
    data[0, 0] = 0.9
    features = featurize(ImageTensor(data))
    # the corner window repeats the corner pixel into four of its nine cells
    assert features[0, 0, 3] == pytest.approx(4 * np.float32(0.9) / 9)


# Test predict_probs and pseudo_label


def test_zero_model_is_uniform(rng):
    probs = predict_probs(LinearSegModel.zeros(4), ImageTensor(rng.random((3, 3, 3))))
    assert np.allclose(probs.data, 0.25)


def test_probabilities_normalized(rng):
    probs = predict_probs(random_model(rng, 5), ImageTensor(rng.random((8, 8, 3))))
    assert np.all(np.abs(probs.data.sum(axis=2) - 1.0) <= 1e-6)


def test_hand_set_logits():
    model = LinearSegModel(np.zeros((2, FEATURE_DIM)), np.array([1.0, 0.0]))
    probs = predict_probs(model, ImageTensor(np.zeros((1, 1, 3))))
    assert probs.data[0, 0, 0] == pytest.approx(e / (e + 1), abs=1e-6)
    assert probs.data[0, 0, 1] == pytest.approx(1 / (e + 1), abs=1e-6)


def test_predict_labels_ties_go_low():
    labels = predict_labels(LinearSegModel.zeros(3), ImageTensor(np.zeros((2, 2, 3))))
    assert np.all(labels.data == 0)


@pytest.mark.parametrize("row,expected", [((0.2, 0.8), 1), ((0.5, 0.5), 0)])
def test_pseudo_label(row, expected):
    labels = pseudo_label(ProbabilityMap(np.array([[row]])))
    assert labels.to_label_map().data[0, 0] == expected


def test_pseudo_label_matches_scan(rng):
    probs = random_probs(rng, 16, 16, 4)
    labels = pseudo_label(probs).to_label_map()
    for r in range(16):
        for c in range(16):
            row = list(probs.data[r, c])
            assert labels.data[r, c] == row.index(max(row))


# Test confidence_weight


def test_confidence_all_and_none():
    confident = ProbabilityMap(np.tile([0.99, 0.01], (2, 2, 1)))
    unsure = ProbabilityMap(np.tile([0.6, 0.4], (2, 2, 1)))
    assert confidence_weight(confident, 0.968) == 1.0
    assert confidence_weight(unsure, 0.968) == 0.0


def test_confidence_manual_count():
    maxima = np.array([[0.99, 0.5], [0.97, 0.9]])
    probs = ProbabilityMap(np.stack([maxima, 1 - maxima], axis=2))
    assert confidence_weight(probs, 0.968) == 0.5


def test_confidence_matches_pixel_count(rng):
    for _ in range(100):
        probs = random_probs(rng, 6, 5, 2)
        count = sum(1 for r in range(6) for c in range(5) if max(probs.data[r, c]) > 0.968)
        assert confidence_weight(probs, 0.968) == count / 30


def test_confidence_threshold_range():
    with pytest.raises(ValueError):
        confidence_weight(ProbabilityMap(np.full((1, 1, 2), 0.5)), 1.5)


# Test losses


def test_ce_of_exact_match_is_zero():
    labels = one_hot_encode(LabelMap(np.array([[0, 1], [1, 0]])), 2)
    assert ce_loss(labels.data.astype(np.float64), labels) == pytest.approx(0.0, abs=1e-9)


def test_ce_uniform_two_classes():
    labels = one_hot_encode(LabelMap(np.array([[0, 1, IGNORE]])), 2)
    assert ce_loss(ProbabilityMap(np.full((1, 3, 2), 0.5)), labels) == pytest.approx(log(2), abs=1e-6)


def test_losses_match_scalar_loop(rng):
    probs = random_probs(rng, 5, 6, 3)
    data = rng.integers(0, 3, size=(5, 6))
    data[1, 1] = IGNORE
    labels = one_hot_encode(LabelMap(data), 3)
    weights = WeightMap(rng.random((5, 6)))
    ce_total, wce_total, count = 0.0, 0.0, 0
    for r in range(5):
        for c in range(6):
            if data[r, c] == IGNORE:
                continue
            term = -log(max(float(probs.data[r, c, data[r, c]]), 1e-7))
            ce_total += term
            wce_total += float(weights.data[r, c]) * term
            count += 1
    assert ce_loss(probs, labels) == pytest.approx(ce_total / count, abs=1e-6)
    assert wce_loss(probs, labels, weights) == pytest.approx(wce_total / count, abs=1e-6)


def test_wce_reductions(rng):
    probs = random_probs(rng, 4, 4, 3)
    labels = one_hot_encode(LabelMap(rng.integers(0, 3, size=(4, 4))), 3)
    assert wce_loss(probs, labels, WeightMap.constant((4, 4), 0.0)) == 0.0
    assert abs(wce_loss(probs, labels, WeightMap.constant((4, 4), 1.0)) - ce_loss(probs, labels)) <= 1e-9


def test_all_ignore_loss_is_zero():
    labels = one_hot_encode(LabelMap(np.full((2, 2), IGNORE)), 2)
    assert ce_loss(ProbabilityMap(np.full((2, 2, 2), 0.5)), labels) == 0.0


def test_loss_shape_mismatch(rng):
    labels = one_hot_encode(LabelMap(np.zeros((2, 2), dtype=np.int64)), 2)
    with pytest.raises(ShapeMismatchError):
        ce_loss(random_probs(rng, 2, 3, 2), labels)


# Test gradients


@pytest.mark.parametrize("seed", range(20))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng)
    terms = random_batch(rng)
    grad = loss_gradient(model, terms)
    h = 1e-4
    numeric_w = np.zeros_like(model.weights)
    for index in np.ndindex(model.weights.shape):
        step = np.zeros_like(model.weights)
        step[index] = h
        plus = total_loss(LinearSegModel(model.weights + step, model.bias), terms)
        minus = total_loss(LinearSegModel(model.weights - step, model.bias), terms)
        numeric_w[index] = (plus - minus) / (2 * h)
    numeric_b = np.zeros_like(model.bias)
    for index in range(model.num_classes):
        step = np.zeros_like(model.bias)
        step[index] = h
        plus = total_loss(LinearSegModel(model.weights, model.bias + step), terms)
        minus = total_loss(LinearSegModel(model.weights, model.bias - step), terms)
        numeric_b[index] = (plus - minus) / (2 * h)
    analytic = np.concatenate([grad.weights.ravel(), grad.bias])
    numeric = np.concatenate([numeric_w.ravel(), numeric_b])
    assert np.max(np.abs(analytic - numeric)) / np.max(np.abs(numeric)) <= 1e-4


def test_loss_and_gradient_reports_kinds(rng):
    model = random_model(rng)
    terms = random_batch(rng)
    losses, _ = loss_and_gradient(model, terms)
    assert losses == pytest.approx(batch_loss(model, terms))
    assert losses[LossKind.SOURCE_CE] > 0 and losses[LossKind.TARGET_WCE] > 0


def test_zero_learning_rate_keeps_model(rng):
    model = random_model(rng)
    assert apply_step(model, loss_gradient(model, random_batch(rng)), 0.0) == model


def test_descent_is_monotone(rng):
    model = LinearSegModel.zeros(3)
    terms = random_batch(rng)
    losses = []
    for _ in range(50):
        losses.append(total_loss(model, terms))
        model = apply_step(model, loss_gradient(model, terms), 0.1)
    assert all(b <= a + 1e-12 for a, b in zip(losses[1:], losses[2:]))
    assert losses[-1] < losses[0]


def test_non_finite_gradient():
    model = LinearSegModel.zeros(2)
    bad = ModelGradient(np.full((2, FEATURE_DIM), np.nan), np.zeros(2))
    with pytest.raises(NonFiniteGradientError):
        apply_step(model, bad, 0.1)


# Test ema_update


def test_ema_extremes(rng):
    teacher, student = random_model(rng), random_model(rng)
    assert ema_update(teacher, student, 1.0) == teacher
    assert ema_update(teacher, student, 0.0) == student


@pytest.mark.parametrize("steps", [1, 10, 100])
def test_ema_closed_form(steps):
    teacher = LinearSegModel.zeros(2)
    student = LinearSegModel(np.ones((2, FEATURE_DIM)), np.ones(2))
    for _ in range(steps):
        teacher = ema_update(teacher, student, 0.999)
    expected = 1 - 0.999 ** steps
    assert np.all(np.abs(teacher.weights - expected) <= 1e-9)
    assert np.all(np.abs(teacher.bias - expected) <= 1e-9)


def test_ema_stays_between(rng):
    teacher, student = random_model(rng), random_model(rng)
    updated = ema_update(teacher, student, 0.7)
    low = np.minimum(teacher.weights, student.weights)
    high = np.maximum(teacher.weights, student.weights)
    assert np.all((low <= updated.weights) & (updated.weights <= high))


def test_ema_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        ema_update(LinearSegModel.zeros(2), LinearSegModel.zeros(3), 0.9)


# Test persistence


def test_model_file_roundtrip(rng, tmp_path):
    model = random_model(rng)
    save_model(model, tmp_path / "model.json")
    assert load_model(tmp_path / "model.json") == model
    first = (tmp_path / "model.json").read_bytes()
    save_model(load_model(tmp_path / "model.json"), tmp_path / "model.json")
    assert (tmp_path / "model.json").read_bytes() == first


def test_model_rejects_non_finite():
    with pytest.raises(ValueError):
        LinearSegModel(np.full((2, FEATURE_DIM), np.inf), np.zeros(2))
