import numpy as np
import pytest

from scmixlab.discrepancy import (
    DomainSampleSet,
    bound_term_pairs,
    image_descriptor,
    join_subdomains,
    ocda_bound_terms,
    proxy_hdh_distance,
)
from scmixlab.exceptions import InsufficientSamplesError, ShapeMismatchError
from scmixlab.core import ImageTensor
from scmixlab.rng import RngStream


def gaussian_set(seed, n=200, dim=5, shift=0.0, tag="set"):
    rng = np.random.default_rng(seed)
    return DomainSampleSet(rng.normal(loc=shift, size=(n, dim)), tag)


@pytest.fixture()
def subdomains():
    return [gaussian_set(10 + k, n=60, shift=0.5 * k, tag=f"t{k}") for k in range(3)]


def test_descriptor_size():
    image = ImageTensor(np.random.default_rng(0).random((6, 6, 3)))
    assert image_descriptor(image).shape == (22,)


def test_term_pairs():
    assert bound_term_pairs(3) == [(1, 1), (2, 2), (3, 3), (1, 2), (2, 3), (1, 3)]
    assert len(bound_term_pairs(5)) == 15


def test_join_is_balanced():
    joint = join_subdomains([gaussian_set(1, n=50, tag="a"), gaussian_set(2, n=70, tag="b")])
    assert len(joint) == 100
    assert joint.tag == "a+b"


def test_join_single_set_unchanged():
    only = gaussian_set(1, tag="a")
    assert join_subdomains([only]) is only


def test_join_order_invariant():
    a, b = gaussian_set(1, n=100, tag="a"), gaussian_set(2, n=60, tag="b")
    ab, ba = join_subdomains([a, b]), join_subdomains([b, a])
    assert len(ab) == 120
    assert sorted(map(tuple, ab.features)) == sorted(map(tuple, ba.features))


def test_join_checks_dimensions():
    with pytest.raises(ShapeMismatchError):
        join_subdomains([gaussian_set(1, dim=5), gaussian_set(2, dim=4)])


def test_same_distribution_is_close():
    estimate = proxy_hdh_distance(gaussian_set(1, n=400, tag="a"), gaussian_set(2, n=400, tag="b"), RngStream(0))
    assert 0.0 <= estimate <= 0.3


def test_separated_distributions_are_far():
    estimate = proxy_hdh_distance(gaussian_set(1), gaussian_set(2, shift=10.0), RngStream(0))
    assert 1.6 <= estimate <= 2.0


def test_distance_is_symmetric():
    a, b = gaussian_set(1), gaussian_set(2, shift=0.3)
    assert proxy_hdh_distance(a, b, RngStream(5)) == proxy_hdh_distance(b, a, RngStream(5))


def test_distance_is_deterministic():
    a, b = gaussian_set(1), gaussian_set(2, shift=0.3)
    assert proxy_hdh_distance(a, b, RngStream(5)) == proxy_hdh_distance(a, b, RngStream(5))


@pytest.mark.parametrize("n,raises", [(39, True), (40, False)])
def test_minimum_sample_count(n, raises):
    small = gaussian_set(1, n=n, tag="small")
    if raises:
        with pytest.raises(InsufficientSamplesError, match="small"):
            proxy_hdh_distance(small, gaussian_set(2), RngStream(0))
    else:
        proxy_hdh_distance(small, gaussian_set(2), RngStream(0))


def test_bound_terms(subdomains):
    report = ocda_bound_terms(gaussian_set(0, shift=-0.5, tag="source"), subdomains, RngStream(1))
    assert [(t.i, t.j) for t in report.terms] == bound_term_pairs(3)
    assert report.full_sum >= report.conventional_sum
    assert report.conventional_sum == pytest.approx(sum(t.estimate for t in report.terms[:3]))
    assert all(0.0 <= t.estimate <= 2.0 for t in report.terms)
    assert report.open_distance is None
    assert report.summary()["terms"] == 6


def test_bound_terms_with_open_set(subdomains):
    report = ocda_bound_terms(gaussian_set(0, tag="source"), subdomains, RngStream(1),
                              open_set=gaussian_set(9, shift=8.0, tag="open"))
    assert report.open_distance >= 1.6
    assert report.full_sum == pytest.approx(sum(t.estimate for t in report.terms))


def test_parallel_terms_match_serial(subdomains):
    source = gaussian_set(0, tag="source")
    serial = ocda_bound_terms(source, subdomains, RngStream(2))
    parallel = ocda_bound_terms(source, subdomains, RngStream(2), workers=3)
    assert serial == parallel


def test_empty_sample_set():
    with pytest.raises(InsufficientSamplesError):
        DomainSampleSet.from_images([], "empty")
