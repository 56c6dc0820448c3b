"""Per-pixel linear softmax segmentation model.

Losses are normalized by the number of non-ignore pixels and clamp probabilities at
:data:`EPS` inside the logarithm. Everything internal runs in float64; only
:func:`predict_probs` hands out float32 probability maps.
"""
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.ndimage import uniform_filter

from ._types import LossKind
from .core import ImageTensor, LabelMap, OneHotLabel, ProbabilityMap, WeightMap, require_same_shape
from .exceptions import NonFiniteGradientError, ShapeMismatchError

EPS = 1e-7
FEATURE_DIM = 11


class PixelFeaturizer:
    """Fixed 11 feature recipe per pixel

    RGB (3), 3×3 local mean (3) and standard deviation (3) per channel with clamped borders,
    then the normalized coordinates ``x / W`` and ``y / H``.
    """
    dim = FEATURE_DIM

    def __call__(self, image: ImageTensor) -> np.ndarray:
        """:return np.ndarray: ``(H, W, 11)`` float64 features"""
        rgb = image.data.astype(np.float64)
        mean = uniform_filter(rgb, size=(3, 3, 1), mode="nearest")
        square = uniform_filter(rgb * rgb, size=(3, 3, 1), mode="nearest")
        std = np.sqrt(np.maximum(square - mean * mean, 0.0))
        rows, cols = np.indices(image.shape, dtype=np.float64)
        return np.concatenate(
            [rgb, mean, std, (cols / image.width)[..., None], (rows / image.height)[..., None]], axis=2
        )


featurize = PixelFeaturizer()


@dataclass(frozen=True, eq=False)
class LinearSegModel:
    """``C × D`` weights and ``C`` biases applied to every pixel's features

    :param np.ndarray weights:
    :param np.ndarray bias:
    """
    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64)
        bias = np.array(self.bias, dtype=np.float64)
        if weights.ndim != 2:
            raise ShapeMismatchError("model weights dimensions", (2,), (weights.ndim,))
        if bias.shape != (weights.shape[0],):
            raise ShapeMismatchError("model bias", (weights.shape[0],), bias.shape)
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(bias))):
            raise ValueError("Model parameters must be finite")
        weights.setflags(write=False)
        bias.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bias", bias)

    @classmethod
    def zeros(cls, num_classes: int, dim: int = FEATURE_DIM) -> "LinearSegModel":
        return cls(np.zeros((num_classes, dim)), np.zeros(num_classes))

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "LinearSegModel":
        return LinearSegModel(self.weights.copy(), self.bias.copy())

    def __eq__(self, other) -> bool:
        if not isinstance(other, LinearSegModel):
            return NotImplemented
        return np.array_equal(self.weights, other.weights) and np.array_equal(self.bias, other.bias)

    __hash__ = None  # type: ignore[assignment]

    def to_dict(self) -> Dict[str, object]:
        return {
            "num_classes": self.num_classes,
            "dim": self.dim,
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, object]) -> "LinearSegModel":
        model = cls(np.array(payload["weights"], dtype=np.float64), np.array(payload["bias"], dtype=np.float64))
        if model.num_classes != payload["num_classes"] or model.dim != payload["dim"]:
            raise ShapeMismatchError("stored model", (payload["num_classes"], payload["dim"]),
                                     (model.num_classes, model.dim))
        return model


class ModelGradient(NamedTuple):
    weights: np.ndarray
    bias: np.ndarray


class LossTerm(NamedTuple):
    """One image's contribution to the objective

    :param np.ndarray features: ``(H, W, D)`` pixel features
    :param OneHotLabel labels:
    :param Optional[WeightMap] weights: ``None`` means all-one weights
    :param LossKind kind:
    :param float scale: Multiplier of this term, ``1 / batch size`` in training
    """
    features: np.ndarray
    labels: OneHotLabel
    weights: Optional[WeightMap]
    kind: LossKind
    scale: float = 1.0


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def logits(model: LinearSegModel, features: np.ndarray) -> np.ndarray:
    if features.shape[-1] != model.dim:
        raise ShapeMismatchError("feature dimension", (model.dim,), (features.shape[-1],))
    return features @ model.weights.T + model.bias


def probabilities(model: LinearSegModel, features: np.ndarray) -> np.ndarray:
    """Float64 softmax probabilities for precomputed features"""
    return _softmax(logits(model, features))


def predict_probs(model: LinearSegModel, image: ImageTensor) -> ProbabilityMap:
    """Per-pixel softmax over the ``C`` logits ``W·φ(p) + b``

    :param LinearSegModel model:
    :param ImageTensor image:
    :return ProbabilityMap:
    """
    return ProbabilityMap(probabilities(model, featurize(image)).astype(np.float32))


def predict_labels(model: LinearSegModel, image: ImageTensor) -> LabelMap:
    return LabelMap(np.argmax(logits(model, featurize(image)), axis=2))


def pseudo_label(probs: ProbabilityMap) -> OneHotLabel:
    """One-hot at the per-pixel argmax, ties going to the lowest class index"""
    winners = np.argmax(probs.data, axis=2)
    return OneHotLabel(np.eye(probs.num_classes, dtype=np.float32)[winners])


def confidence_weight(probs: ProbabilityMap, tau: float) -> float:
    """Fraction of pixels whose largest class probability exceeds ``tau``

    :param ProbabilityMap probs:
    :param float tau: Threshold in ``[0, 1]``
    :return float:
    """
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"Confidence threshold must lie in [0, 1], got {tau}")
    height, width = probs.shape
    return int(np.count_nonzero(probs.data.max(axis=2) > tau)) / (height * width)


def _as_array(probs: Union[ProbabilityMap, np.ndarray]) -> np.ndarray:
    return probs.data if isinstance(probs, ProbabilityMap) else np.asarray(probs)


def _weighted_ce(probs: np.ndarray, labels: np.ndarray, weights: np.ndarray) -> float:
    valid = labels.sum(axis=2) > 0
    count = int(np.count_nonzero(valid))
    if count == 0:
        return 0.0
    per_pixel = -(labels * np.log(np.maximum(probs.astype(np.float64), EPS))).sum(axis=2)
    return float((weights * per_pixel)[valid].sum() / count)


def ce_loss(probs: Union[ProbabilityMap, np.ndarray], labels: OneHotLabel) -> float:
    """Cross-entropy averaged over non-ignore pixels"""
    array = _as_array(probs)
    require_same_shape("probabilities", labels.data.shape, array.shape)
    return _weighted_ce(array, labels.data, np.ones(labels.shape))


def wce_loss(probs: Union[ProbabilityMap, np.ndarray], labels: OneHotLabel, weights: WeightMap) -> float:
    """Cross-entropy with every pixel term scaled by its weight, averaged over non-ignore pixels"""
    array = _as_array(probs)
    require_same_shape("probabilities", labels.data.shape, array.shape)
    require_same_shape("weights", labels.shape, weights.shape)
    return _weighted_ce(array, labels.data, weights.data.astype(np.float64))


def _term_weights(term: LossTerm) -> np.ndarray:
    if term.weights is None:
        return np.ones(term.labels.shape)
    return term.weights.data.astype(np.float64)


def batch_loss(model: LinearSegModel, terms: Sequence[LossTerm]) -> Dict[LossKind, float]:
    """Scaled loss summed per kind"""
    totals = {kind: 0.0 for kind in LossKind}
    for term in terms:
        probs = probabilities(model, term.features)
        totals[term.kind] += term.scale * _weighted_ce(probs, term.labels.data, _term_weights(term))
    return totals


def loss_and_gradient(model: LinearSegModel, terms: Sequence[LossTerm]) -> Tuple[Dict[LossKind, float], ModelGradient]:
    """Per-kind losses and the analytic gradient of their sum

    Per term the logit gradient is ``scale · w(p) · (P(p) − y(p)) / n_valid`` on non-ignore
    pixels, accumulated into ``W`` through the features and into ``b`` directly.

    :param LinearSegModel model:
    :param Sequence[LossTerm] terms:
    :raises NonFiniteGradientError:
    :return Tuple[Dict[LossKind, float], ModelGradient]:
    """
    totals = {kind: 0.0 for kind in LossKind}
    grad_w = np.zeros_like(model.weights)
    grad_b = np.zeros_like(model.bias)
    for term in terms:
        labels = term.labels.data.astype(np.float64)
        valid = labels.sum(axis=2) > 0
        count = int(np.count_nonzero(valid))
        if count == 0:
            continue
        probs = probabilities(model, term.features)
        weights = _term_weights(term)
        totals[term.kind] += term.scale * _weighted_ce(probs, labels, weights)
        delta = (term.scale * weights * valid / count)[..., None] * (probs - labels)
        flat = delta.reshape(-1, model.num_classes)
        grad_w += flat.T @ term.features.reshape(-1, model.dim)
        grad_b += flat.sum(axis=0)
    if not (np.all(np.isfinite(grad_w)) and np.all(np.isfinite(grad_b))):
        raise NonFiniteGradientError("loss gradient")
    return totals, ModelGradient(grad_w, grad_b)


def loss_gradient(model: LinearSegModel, terms: Sequence[LossTerm]) -> ModelGradient:
    return loss_and_gradient(model, terms)[1]


def apply_step(model: LinearSegModel, gradient: ModelGradient, lr: float) -> LinearSegModel:
    """Plain gradient descent step

    :raises NonFiniteGradientError: Gradient or updated parameters are not finite
    """
    if not (np.all(np.isfinite(gradient.weights)) and np.all(np.isfinite(gradient.bias))):
        raise NonFiniteGradientError("gradient")
    weights = model.weights - lr * gradient.weights
    bias = model.bias - lr * gradient.bias
    if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(bias))):
        raise NonFiniteGradientError("updated parameters")
    return LinearSegModel(weights, bias)


def ema_update(teacher: LinearSegModel, student: LinearSegModel, momentum: float) -> LinearSegModel:
    """``θ_te ← m·θ_te + (1 − m)·θ_f`` elementwise

    :param LinearSegModel teacher:
    :param LinearSegModel student:
    :param float momentum: ``m`` in ``[0, 1]``
    :raises ShapeMismatchError:
    :return LinearSegModel: The new teacher
    """
    if not 0.0 <= momentum <= 1.0:
        raise ValueError(f"EMA momentum must lie in [0, 1], got {momentum}")
    require_same_shape("student weights", teacher.weights.shape, student.weights.shape)
    return LinearSegModel(
        momentum * teacher.weights + (1.0 - momentum) * student.weights,
        momentum * teacher.bias + (1.0 - momentum) * student.bias,
    )


def save_model(model: LinearSegModel, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), sort_keys=True) + "\n", encoding="utf-8")


def load_model(path: Union[str, Path]) -> LinearSegModel:
    return LinearSegModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
