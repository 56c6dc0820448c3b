"""Grid and class masks of the two mixing stages.

Cells tile the image with boundaries from :func:`scmixlab.geometry.cell_boundaries` and are
visited in row-major order (top row first, left to right) by every operation here.
"""
from dataclasses import dataclass
from math import ceil
from typing import Iterator, NamedTuple, Sequence, Tuple

import numpy as np

from ._types import IGNORE
from .core import IndexMap, LabelMap
from .exceptions import ConfigurationError, MaskRangeError
from .geometry import cell_boundaries, expand_cells
from .rng import RngStream


class GridGeometry(NamedTuple):
    """``g_h`` columns by ``g_v`` rows of cells"""
    g_h: int
    g_v: int

    def check(self, height: int, width: int) -> None:
        """:raises ConfigurationError: Cell counts outside ``[1, W]`` / ``[1, H]``"""
        if not 1 <= self.g_h <= width:
            raise ConfigurationError("g_h", f"must lie in [1, {width}], got {self.g_h}")
        if not 1 <= self.g_v <= height:
            raise ConfigurationError("g_v", f"must lie in [1, {height}], got {self.g_v}")

    def clamped(self, height: int, width: int) -> "GridGeometry":
        """Same geometry with counts capped at the image extent"""
        return GridGeometry(min(self.g_h, width), min(self.g_v, height))

    @property
    def cells(self) -> int:
        return self.g_h * self.g_v

    def cell_slices(self, height: int, width: int) -> Iterator[Tuple[slice, slice]]:
        """Row-major ``(rows, cols)`` slices of every cell"""
        self.check(height, width)
        rows = cell_boundaries(self.g_v, height)
        cols = cell_boundaries(self.g_h, width)
        for top, bottom in zip(rows, rows[1:]):
            for left, right in zip(cols, cols[1:]):
                yield slice(top, bottom), slice(left, right)


@dataclass(frozen=True)
class GridMask:
    """Target index (``1..n_c``) per pixel, constant within each cell"""
    index: IndexMap
    geometry: GridGeometry
    n_c: int

    def __post_init__(self):
        data = self.index.data
        if data.min() < 1 or data.max() > self.n_c:
            bad = int(data.min()) if data.min() < 1 else int(data.max())
            raise MaskRangeError(bad, self.n_c)

    @property
    def data(self) -> np.ndarray:
        return self.index.data

    @property
    def shape(self) -> Tuple[int, int]:
        return self.index.shape


@dataclass(frozen=True)
class ClassMask:
    """Binary class mixing mask. ``selections[k]`` holds the classes picked in row-major cell ``k``."""
    data: np.ndarray
    geometry: GridGeometry
    selections: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        array = np.array(self.data, dtype=bool, order="C")
        array.setflags(write=False)
        object.__setattr__(self, "data", array)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.data.shape

    def to_index_map(self) -> IndexMap:
        return IndexMap(self.data)


def sample_grid_dims(candidates: Sequence[int], stream: RngStream) -> GridGeometry:
    """Draws ``g_h`` then ``g_v`` independently and uniformly from ``candidates``

    :param Sequence[int] candidates: Candidate cell counts ``G``
    :param RngStream stream:
    :raises ConfigurationError: ``G`` is empty or holds a count below 1
    :return GridGeometry:
    """
    if len(candidates) == 0:
        raise ConfigurationError("grid_sizes", "candidate set must not be empty")
    if min(candidates) < 1:
        raise ConfigurationError("grid_sizes", "every candidate must be at least 1")
    g_h = candidates[stream.uniform_int(0, len(candidates) - 1)]
    g_v = candidates[stream.uniform_int(0, len(candidates) - 1)]
    return GridGeometry(int(g_h), int(g_v))


def make_grid_mask(height: int, width: int, geom: GridGeometry, n_c: int, stream: RngStream) -> GridMask:
    """One uniform draw from ``[1, n_c]`` per cell, row-major, broadcast over the cell

    :param int height:
    :param int width:
    :param GridGeometry geom:
    :param int n_c: Number of target images being fused
    :param RngStream stream:
    :raises ConfigurationError: ``n_c < 1`` or geometry exceeds the image
    :return GridMask:
    """
    if n_c < 1:
        raise ConfigurationError("n_c", f"must be at least 1, got {n_c}")
    geom.check(height, width)
    values = stream.generator.integers(1, n_c, size=(geom.g_v, geom.g_h), endpoint=True)
    return GridMask(IndexMap(expand_cells(values, height, width)), geom, n_c)


def classes_to_select(present: int, n_c: int) -> int:
    """``ceil(c_s / n_c)``, or ``ceil(c_s / 2)`` when ``n_c == 1``"""
    return ceil(present / (2 if n_c == 1 else n_c))


def select_class_subset(present: Sequence[int], k: int, stream: RngStream) -> Tuple[int, ...]:
    """``k`` of the ``present`` classes uniformly without replacement, returned sorted"""
    return tuple(present[i] for i in stream.subset(len(present), k))


def build_class_mask(source_labels: LabelMap, geom: GridGeometry, n_c: int, stream: RngStream) -> ClassMask:
    """Per-cell class mixing mask

    For each cell (row-major) the distinct non-ignore classes ``c_s`` of the source labels in
    that cell are counted and :func:`classes_to_select` of them are drawn; the mask is set on
    the pixels of those classes inside the cell. Cells holding only ignore pixels make no
    draw and stay zero.

    :param LabelMap source_labels:
    :param GridGeometry geom:
    :param int n_c:
    :param RngStream stream:
    :return ClassMask:
    """
    if n_c < 1:
        raise ConfigurationError("n_c", f"must be at least 1, got {n_c}")
    height, width = source_labels.shape
    labels = source_labels.data
    mask = np.zeros((height, width), dtype=bool)
    selections = []
    for rows, cols in geom.cell_slices(height, width):
        cell = labels[rows, cols]
        present = [int(c) for c in np.unique(cell) if c != IGNORE]
        if not present:
            selections.append(())
            continue
        chosen = select_class_subset(present, classes_to_select(len(present), n_c), stream)
        mask[rows, cols] = np.isin(cell, chosen)
        selections.append(chosen)
    return ClassMask(mask, geom, tuple(selections))


def image_class_mask(source_labels: LabelMap, chosen: Sequence[int]) -> ClassMask:
    """Single-cell mask covering every pixel of the ``chosen`` classes"""
    return ClassMask(np.isin(source_labels.data, list(chosen)), GridGeometry(1, 1), (tuple(chosen),))
