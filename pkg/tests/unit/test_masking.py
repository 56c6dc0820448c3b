import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scmixlab._types import IGNORE, PurposeTag
from scmixlab.core import IndexMap, LabelMap
from scmixlab.exceptions import ConfigurationError, MaskRangeError
from scmixlab.masking import (
    ClassMask,
    GridGeometry,
    GridMask,
    build_class_mask,
    classes_to_select,
    image_class_mask,
    make_grid_mask,
    sample_grid_dims,
)
from scmixlab.rng import RngStream


def stream(seed=0, iteration=0):
    return RngStream(seed, iteration=iteration, purpose=PurposeTag.GRID_VALUES)


# Test sample_grid_dims


def test_singleton_candidates():
    s = stream()
    assert all(sample_grid_dims([2], s) == (2, 2) for _ in range(20))


def test_default_candidates():
    s = stream()
    for _ in range(50):
        geom = sample_grid_dims([2, 4, 8], s)
        assert geom.g_h in (2, 4, 8) and geom.g_v in (2, 4, 8)


def test_candidate_frequencies():
    s = stream(3)
    values = []
    for _ in range(15_000):
        values.extend(sample_grid_dims([2, 4, 8], s))
    counts = np.array([values.count(v) for v in (2, 4, 8)]) / len(values)
    assert np.all(np.abs(counts - 1 / 3) <= 0.02)


@pytest.mark.parametrize("candidates", [[], [0, 2]])
def test_invalid_candidates(candidates):
    with pytest.raises(ConfigurationError):
        sample_grid_dims(candidates, stream())


# Test GridGeometry


def test_geometry_check():
    GridGeometry(4, 3).check(3, 4)
    with pytest.raises(ConfigurationError, match="g_h"):
        GridGeometry(5, 1).check(8, 4)
    with pytest.raises(ConfigurationError, match="g_v"):
        GridGeometry(1, 0).check(8, 4)


def test_geometry_clamped():
    assert GridGeometry(8, 16).clamped(4, 6) == (6, 4)
    assert GridGeometry(8, 16).cells == 128


def test_cell_slices_tile_image():
    covered = np.zeros((7, 10), dtype=int)
    for rows, cols in GridGeometry(3, 2).cell_slices(7, 10):
        covered[rows, cols] += 1
    assert np.all(covered == 1)


# Test make_grid_mask


def test_single_target_mask_is_ones():
    mask = make_grid_mask(6, 6, GridGeometry(2, 3), 1, stream())
    assert np.all(mask.data == 1)


def test_one_cell_is_constant():
    mask = make_grid_mask(6, 5, GridGeometry(1, 1), 4, stream())
    assert len(np.unique(mask.data)) == 1
    assert 1 <= mask.data[0, 0] <= 4


def test_blocks_are_constant():
    mask = make_grid_mask(8, 8, GridGeometry(2, 2), 3, stream(7))
    blocks = set()
    for r in range(8):
        for c in range(8):
            assert mask.data[r, c] == mask.data[(r // 4) * 4, (c // 4) * 4]
            blocks.add((r // 4, c // 4))
    assert len(blocks) == 4


def test_grid_mask_needs_targets():
    with pytest.raises(ConfigurationError):
        make_grid_mask(4, 4, GridGeometry(1, 1), 0, stream())


def test_grid_mask_range():
    with pytest.raises(MaskRangeError):
        GridMask(IndexMap(np.full((2, 2), 3)), GridGeometry(1, 1), 2)
    with pytest.raises(MaskRangeError):
        GridMask(IndexMap(np.zeros((2, 2), dtype=np.int64)), GridGeometry(1, 1), 2)


@settings(max_examples=60, deadline=None)
@given(
    height=st.integers(1, 12),
    width=st.integers(1, 12),
    g_h=st.integers(1, 12),
    g_v=st.integers(1, 12),
    n_c=st.integers(1, 5),
    seed=st.integers(0, 2**32),
)
def test_partition_law(height, width, g_h, g_v, n_c, seed):
    geom = GridGeometry(g_h, g_v).clamped(height, width)
    mask = make_grid_mask(height, width, geom, n_c, stream(seed))
    regions = [(mask.data == k) for k in range(1, n_c + 1)]
    assert sum(int(r.sum()) for r in regions) == height * width
    assert np.all(np.sum(regions, axis=0) == 1)


def test_grid_mask_deterministic():
    a = make_grid_mask(8, 8, GridGeometry(4, 2), 3, stream(5))
    b = make_grid_mask(8, 8, GridGeometry(4, 2), 3, stream(5))
    assert a.index == b.index


# Test build_class_mask


@pytest.mark.parametrize("present,n_c,expected", [
    (1, 3, 1),
    (4, 2, 2),
    (4, 3, 2),
    (4, 1, 2),
    (3, 1, 2),
    (0, 3, 0),
])
def test_classes_to_select(present, n_c, expected):
    assert classes_to_select(present, n_c) == expected


def test_single_class_cell_fully_selected():
    labels = LabelMap(np.full((4, 4), 2))
    mask = build_class_mask(labels, GridGeometry(1, 1), 3, stream())
    assert mask.data.all()
    assert mask.selections == ((2,),)


def test_four_class_cell_selects_two():
    data = np.repeat(np.arange(4), 4).reshape(4, 4)
    labels = LabelMap(data)
    for seed in range(10):
        mask = build_class_mask(labels, GridGeometry(1, 1), 2, stream(seed))
        chosen = mask.selections[0]
        assert len(chosen) == 2
        assert mask.data.sum() == sum(int((data == c).sum()) for c in chosen)


def test_single_target_fallback_selects_half():
    labels = LabelMap(np.arange(16).reshape(4, 4) % 4)
    mask = build_class_mask(labels, GridGeometry(1, 1), 1, stream())
    assert len(mask.selections[0]) == 2


def test_ignore_only_cell_stays_zero():
    data = np.zeros((4, 4), dtype=np.int64)
    data[:, :2] = IGNORE
    mask = build_class_mask(LabelMap(data), GridGeometry(2, 1), 2, stream())
    assert mask.selections[0] == ()
    assert not mask.data[:, :2].any()
    assert mask.data[:, 2:].all()


@settings(max_examples=60, deadline=None)
@given(
    size=st.integers(2, 10),
    g=st.integers(1, 4),
    n_c=st.integers(1, 4),
    seed=st.integers(0, 2**32),
)
def test_class_consistency(size, g, n_c, seed):
    data = np.random.default_rng(seed).integers(0, 5, size=(size, size))
    data[data == 4] = IGNORE
    labels = LabelMap(data)
    geom = GridGeometry(g, g).clamped(size, size)
    mask = build_class_mask(labels, geom, n_c, stream(seed))
    for (rows, cols), chosen in zip(geom.cell_slices(size, size), mask.selections):
        cell = data[rows, cols]
        assert np.array_equal(mask.data[rows, cols], np.isin(cell, chosen))
        assert IGNORE not in chosen


def test_image_class_mask():
    labels = LabelMap(np.array([[0, 1], [2, IGNORE]]))
    mask = image_class_mask(labels, (1, 2))
    assert mask.data.tolist() == [[False, True], [True, False]]
    assert mask.to_index_map().data.tolist() == [[0, 1], [1, 0]]


def test_class_mask_leaves_caller_array_writeable():
    data = np.zeros((4, 4), dtype=bool)
    mask = ClassMask(data, GridGeometry(1, 1), ((),))
    data[0, 0] = True
    assert data.flags.writeable
    assert not mask.data[0, 0]
    with pytest.raises(ValueError):
        mask.data[0, 0] = True
