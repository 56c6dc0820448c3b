import numpy as np
import pytest
from scipy import stats

from scmixlab._types import PurposeTag
from scmixlab.rng import RngStream, rng_uniform_int


def draws(stream, count, lo=0, hi=1000):
    return [rng_uniform_int(stream, lo, hi) for _ in range(count)]


def test_degenerate_range():
    assert rng_uniform_int(RngStream(1), 5, 5) == 5


def test_empty_range_rejected():
    with pytest.raises(ValueError):
        rng_uniform_int(RngStream(1), 4, 3)


@pytest.mark.parametrize("seed", [0, 7, 2**64 - 1])
def test_same_identifier_same_sequence(seed):
    a = RngStream(seed, iteration=3, purpose=PurposeTag.GRID_VALUES, lane=1)
    b = RngStream(seed, iteration=3, purpose=PurposeTag.GRID_VALUES, lane=1)
    assert draws(a, 50) == draws(b, 50)


@pytest.mark.parametrize("other", [
    RngStream(1, iteration=1),
    RngStream(1, purpose=PurposeTag.BLUR),
    RngStream(1, lane=1),
    RngStream(2),
])
def test_distinct_identifiers_differ(other):
    assert draws(RngStream(1), 20) != draws(other, 20)


def test_seed_out_of_range():
    with pytest.raises(ValueError):
        RngStream(2**64)
    with pytest.raises(ValueError):
        RngStream(-1)


def test_uniformity_chi_square():
    stream = RngStream(11, purpose=PurposeTag.DATA_SAMPLING)
    counts = np.bincount(draws(stream, 10_000, 1, 3), minlength=4)[1:]
    assert stats.chisquare(counts).pvalue > 0.001


def test_fork_keeps_seed_and_changes_purpose():
    stream = RngStream(4, iteration=9, lane=2)
    fork = stream.fork(PurposeTag.JITTER)
    assert fork.seed == 4
    assert fork.stream_id == (9, PurposeTag.JITTER, 2)
    assert stream.fork(PurposeTag.JITTER, lane=0).stream_id == (9, PurposeTag.JITTER, 0)


def test_fork_does_not_depend_on_position():
    a = RngStream(4)
    b = RngStream(4)
    draws(b, 10)
    assert draws(a.fork(PurposeTag.BLUR), 5) == draws(b.fork(PurposeTag.BLUR), 5)


def test_copy_continues_from_position():
    stream = RngStream(8)
    draws(stream, 3)
    clone = stream.copy()
    assert draws(stream, 10) == draws(clone, 10)


def test_counter_skips_blocks():
    assert draws(RngStream(3, counter=1), 5) != draws(RngStream(3), 5)
    assert draws(RngStream(3, counter=1), 5) == draws(RngStream(3, counter=1), 5)


def test_subset():
    stream = RngStream(5)
    chosen = stream.subset(10, 4)
    assert len(chosen) == 4
    assert list(chosen) == sorted(set(chosen))
    assert all(0 <= i < 10 for i in chosen)
    assert stream.subset(3, 0) == ()
    with pytest.raises(ValueError):
        stream.subset(3, 4)
