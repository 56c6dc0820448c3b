"""Per-pixel grid types shared by every other module.

All grids wrap a read-only numpy array in ``data`` and validate shape and value range on
construction. Images, weights, one-hot labels and probabilities are float32, label and
index maps are integer valued.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ._types import IGNORE
from .exceptions import InvalidLabelError, ShapeMismatchError


class _Grid:
    """Equality is exact: same type, dtype, shape and bytes"""
    data: np.ndarray

    def __eq__(self, other) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        return self.data.dtype == other.data.dtype and np.array_equal(self.data, other.data)

    __hash__ = None  # type: ignore[assignment]


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, order="C", copy=True)
    array.setflags(write=False)
    return array


def _require_hw(name: str, array: np.ndarray, ndim: int) -> None:
    if array.ndim != ndim:
        raise ShapeMismatchError(f"{name} dimensions", (ndim,), (array.ndim,))
    if array.shape[0] < 1 or array.shape[1] < 1:
        raise ShapeMismatchError(f"{name} must be at least 1x1", (1, 1), array.shape[:2])


@dataclass(frozen=True, eq=False)
class ImageTensor(_Grid):
    """H×W×3 image with values in ``[0, 1]``

    :param np.ndarray data: Array of shape ``(H, W, 3)``
    """
    data: np.ndarray

    def __post_init__(self):
        array = np.asarray(self.data, dtype=np.float32)
        _require_hw("ImageTensor", array, 3)
        if array.shape[2] != 3:
            raise ShapeMismatchError("ImageTensor channels", (3,), (array.shape[2],))
        if not np.all(np.isfinite(array)) or array.min() < 0.0 or array.max() > 1.0:
            raise ValueError("ImageTensor values must lie in [0, 1]")
        object.__setattr__(self, "data", _frozen(array))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)

    @classmethod
    def from_uint8(cls, array: np.ndarray) -> "ImageTensor":
        """Converts an 8-bit RGB array with ``v / 255``"""
        return cls(np.asarray(array, dtype=np.uint8).astype(np.float32) / np.float32(255.0))

    def to_uint8(self) -> np.ndarray:
        return np.round(self.data * 255.0).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class LabelMap(_Grid):
    """H×W class indices, each in ``[0, C)`` or :data:`IGNORE`"""
    data: np.ndarray

    def __post_init__(self):
        array = np.asarray(self.data)
        if not np.issubdtype(array.dtype, np.integer):
            raise ValueError(f"LabelMap requires integer values, got {array.dtype}")
        _require_hw("LabelMap", array, 2)
        if array.min() < 0 or array.max() > IGNORE:
            raise ValueError(f"LabelMap values must lie in [0, {IGNORE}]")
        object.__setattr__(self, "data", _frozen(array.astype(np.int64)))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.data.shape

    def classes_present(self) -> Tuple[int, ...]:
        """Sorted distinct non-ignore classes"""
        values = np.unique(self.data)
        return tuple(int(v) for v in values if v != IGNORE)

    def validate(self, num_classes: int) -> None:
        """Raises :class:`InvalidLabelError` naming the first offending pixel"""
        bad = np.argwhere((self.data != IGNORE) & (self.data >= num_classes))
        if len(bad):
            row, col = (int(v) for v in bad[0])
            raise InvalidLabelError((row, col), int(self.data[row, col]), num_classes)


@dataclass(frozen=True, eq=False)
class OneHotLabel(_Grid):
    """H×W×C one-hot labels. Rows of ignore pixels are all zero."""
    data: np.ndarray

    def __post_init__(self):
        array = np.asarray(self.data, dtype=np.float32)
        _require_hw("OneHotLabel", array, 3)
        if not np.all((array == 0.0) | (array == 1.0)):
            raise ValueError("OneHotLabel entries must be 0 or 1")
        sums = array.sum(axis=2)
        if not np.all((sums == 0.0) | (sums == 1.0)):
            raise ValueError("OneHotLabel rows must sum to 0 or 1")
        object.__setattr__(self, "data", _frozen(array))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.data.shape[:2]

    @property
    def num_classes(self) -> int:
        return self.data.shape[2]

    def valid_mask(self) -> np.ndarray:
        return self.data.sum(axis=2) > 0

    def to_label_map(self) -> LabelMap:
        labels = np.argmax(self.data, axis=2)
        return LabelMap(np.where(self.valid_mask(), labels, IGNORE))


@dataclass(frozen=True, eq=False)
class WeightMap(_Grid):
    """H×W per-pixel loss weights in ``[0, 1]``"""
    data: np.ndarray

    def __post_init__(self):
        array = np.asarray(self.data, dtype=np.float32)
        _require_hw("WeightMap", array, 2)
        if not np.all(np.isfinite(array)) or array.min() < 0.0 or array.max() > 1.0:
            raise ValueError("WeightMap values must lie in [0, 1]")
        object.__setattr__(self, "data", _frozen(array))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.data.shape

    @classmethod
    def constant(cls, shape: Tuple[int, int], value: float) -> "WeightMap":
        return cls(np.full(shape, value, dtype=np.float32))


@dataclass(frozen=True, eq=False)
class IndexMap(_Grid):
    """H×W non-negative integers: grid masks, binary class masks and provenance maps"""
    data: np.ndarray

    def __post_init__(self):
        array = np.asarray(self.data)
        if array.dtype == bool:
            array = array.astype(np.int64)
        if not np.issubdtype(array.dtype, np.integer):
            raise ValueError(f"IndexMap requires integer values, got {array.dtype}")
        _require_hw("IndexMap", array, 2)
        if array.min() < 0 or array.max() > np.iinfo(np.uint16).max:
            raise ValueError("IndexMap values must fit in an unsigned 16-bit integer")
        object.__setattr__(self, "data", _frozen(array.astype(np.int64)))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True, eq=False)
class ProbabilityMap(_Grid):
    """H×W×C per-pixel class probabilities, each row summing to 1"""
    data: np.ndarray

    def __post_init__(self):
        array = np.asarray(self.data, dtype=np.float32)
        _require_hw("ProbabilityMap", array, 3)
        if not np.all(np.isfinite(array)) or array.min() < 0.0:
            raise ValueError("ProbabilityMap values must be finite and non-negative")
        if not np.allclose(array.sum(axis=2), 1.0, atol=1e-5):
            raise ValueError("ProbabilityMap rows must sum to 1")
        object.__setattr__(self, "data", _frozen(array))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.data.shape[:2]

    @property
    def num_classes(self) -> int:
        return self.data.shape[2]


def one_hot_encode(labels: LabelMap, num_classes: int) -> OneHotLabel:
    """Encodes class indices as one-hot rows, ignore pixels become all-zero rows

    :param LabelMap labels:
    :param int num_classes: Class count ``C``
    :raises InvalidLabelError: A non-ignore label is ``>= C``
    :return OneHotLabel:
    """
    labels.validate(num_classes)
    valid = labels.data != IGNORE
    encoded = np.zeros(labels.shape + (num_classes,), dtype=np.float32)
    rows, cols = np.nonzero(valid)
    encoded[rows, cols, labels.data[rows, cols]] = 1.0
    return OneHotLabel(encoded)


def require_same_shape(what: str, expected: Tuple[int, ...], got: Tuple[int, ...]) -> None:
    if tuple(expected) != tuple(got):
        raise ShapeMismatchError(what, expected, got)
