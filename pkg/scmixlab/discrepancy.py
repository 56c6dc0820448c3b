"""Domain discrepancy terms of the compound-target risk bound.

The distance between two sample sets is the proxy A-distance of a linear domain classifier,
an approximation of the H∆H distance over linear hypotheses.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.linear_model import LogisticRegression
from sklearn.preprocessing import StandardScaler

from ._types import PurposeTag
from .core import ImageTensor
from .exceptions import ConfigurationError, InsufficientSamplesError, ShapeMismatchError
from .model import featurize
from .rng import RngStream
from .synth import CompoundBenchmark, Split

logger = logging.getLogger(__name__)

MIN_SAMPLES = 40
ESTIMATOR = "linear proxy domain classifier (approximates the H-delta-H distance)"


def image_descriptor(image: ImageTensor) -> np.ndarray:
    """Per-image mean and standard deviation of every pixel feature, ``2 * 11`` values"""
    features = featurize(image).reshape(-1, featurize.dim)
    return np.concatenate([features.mean(axis=0), features.std(axis=0)])


@dataclass(frozen=True, eq=False)
class DomainSampleSet:
    """Descriptors of one domain, one row per sample

    :param np.ndarray features: ``(n, d)`` array
    :param str tag: Domain name used in messages and reports
    """
    features: np.ndarray
    tag: str

    def __post_init__(self):
        array = np.array(self.features, dtype=np.float64)
        if array.ndim != 2:
            raise ShapeMismatchError(f"sample set '{self.tag}' dimensions", (2,), (array.ndim,))
        if array.shape[0] == 0:
            raise InsufficientSamplesError(self.tag, 0, 1)
        array.setflags(write=False)
        object.__setattr__(self, "features", array)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @classmethod
    def from_images(cls, images: Iterable[ImageTensor], tag: str) -> "DomainSampleSet":
        rows = [image_descriptor(image) for image in images]
        if not rows:
            raise InsufficientSamplesError(tag, 0, 1)
        return cls(np.stack(rows), tag)

    @classmethod
    def from_split(cls, split: Split) -> "DomainSampleSet":
        return cls.from_images(split.images, split.name)


def _require_same_dim(sets: Sequence[DomainSampleSet]) -> None:
    for other in sets[1:]:
        if other.dim != sets[0].dim:
            raise ShapeMismatchError(f"sample set '{other.tag}' dimension", (sets[0].dim,), (other.dim,))


def join_subdomains(sets: Sequence[DomainSampleSet]) -> DomainSampleSet:
    """Balanced union: the first ``min size`` samples of every set, concatenated

    :param Sequence[DomainSampleSet] sets:
    :raises ShapeMismatchError: Sets differ in dimensionality
    :return DomainSampleSet:
    """
    if not sets:
        raise ConfigurationError("sets", "at least one sample set is required")
    _require_same_dim(sets)
    if len(sets) == 1:
        return sets[0]
    size = min(len(s) for s in sets)
    return DomainSampleSet(np.concatenate([s.features[:size] for s in sets]), "+".join(s.tag for s in sets))


def _stratified_split(labels: np.ndarray, stream: RngStream, train_fraction: float) -> Tuple[np.ndarray, np.ndarray]:
    train, test = [], []
    for value in (0, 1):
        members = stream.generator.permutation(np.flatnonzero(labels == value))
        cut = int(round(train_fraction * len(members)))
        train.append(members[:cut])
        test.append(members[cut:])
    return np.concatenate(train), np.concatenate(test)


def proxy_hdh_distance(a: DomainSampleSet, b: DomainSampleSet, stream: RngStream, repeats: int = 5,
                       train_fraction: float = 0.7, minimum: int = MIN_SAMPLES) -> float:
    """Proxy A-distance ``clamp(2(1 − 2ε), 0, 2)`` averaged over resampled splits

    Each repeat ``r`` splits both sets 70/30 with the ``DOMAIN_SPLIT`` fork of lane ``r``,
    standardizes on the training part and fits a logistic regression domain classifier;
    ``ε`` is its test error. The pair is put into a canonical order first, so swapping the
    arguments returns the same value.

    :param DomainSampleSet a:
    :param DomainSampleSet b:
    :param RngStream stream:
    :param int repeats: defaults to 5
    :param float train_fraction: defaults to 0.7
    :param int minimum: Smallest accepted set size, defaults to 40
    :raises InsufficientSamplesError: A set has fewer than ``minimum`` samples
    :raises ShapeMismatchError: Sets differ in dimensionality
    :return float: Estimate in ``[0, 2]``
    """
    for s in (a, b):
        if len(s) < minimum:
            raise InsufficientSamplesError(s.tag, len(s), minimum)
    _require_same_dim([a, b])
    if b.features.tobytes() < a.features.tobytes():
        a, b = b, a
    features = np.concatenate([a.features, b.features])
    labels = np.concatenate([np.zeros(len(a), dtype=np.int64), np.ones(len(b), dtype=np.int64)])
    estimates = []
    for repeat in range(repeats):
        train, test = _stratified_split(labels, stream.fork(PurposeTag.DOMAIN_SPLIT, lane=repeat), train_fraction)
        scaler = StandardScaler().fit(features[train])
        classifier = LogisticRegression(max_iter=1000).fit(scaler.transform(features[train]), labels[train])
        error = float(np.mean(classifier.predict(scaler.transform(features[test])) != labels[test]))
        estimates.append(min(max(2.0 * (1.0 - 2.0 * error), 0.0), 2.0))
    return float(np.mean(estimates))


@dataclass(frozen=True)
class BoundTerm:
    i: int
    j: int
    estimate: float

    @property
    def diagonal(self) -> bool:
        return self.i == self.j


@dataclass(frozen=True)
class BoundReport:
    """Source-to-joint-subdomain distances for every ``1 <= i <= j <= N``

    ``conventional_sum`` covers the diagonal terms only, ``full_sum`` every term.
    ``open_distance`` is the source-to-open estimate and enters neither sum.
    """
    terms: Tuple[BoundTerm, ...]
    conventional_sum: float
    full_sum: float
    open_distance: Optional[float] = None

    def rows(self) -> List[list]:
        return [[t.i, t.j, t.estimate] for t in self.terms]

    def summary(self) -> Dict[str, object]:
        return {
            "estimator": ESTIMATOR,
            "terms": len(self.terms),
            "conventional_sum": self.conventional_sum,
            "full_sum": self.full_sum,
            "open_distance": self.open_distance,
        }


def bound_term_pairs(count: int) -> List[Tuple[int, int]]:
    """``(i, j)`` pairs, diagonal first, then by span and start"""
    return [(i, i + span) for span in range(count) for i in range(1, count - span + 1)]


def ocda_bound_terms(source: DomainSampleSet, subdomains: Sequence[DomainSampleSet], stream: RngStream,
                     open_set: Optional[DomainSampleSet] = None, workers: int = 1) -> BoundReport:
    """Distances between the source and every joint subdomain ``i..j``

    Term ``k`` (in :func:`bound_term_pairs` order) draws from ``stream`` forked to
    ``DOMAIN_SPLIT`` at iteration ``k``; the open distance uses iteration ``N(N+1)/2``.

    :param DomainSampleSet source:
    :param Sequence[DomainSampleSet] subdomains: The ``N`` seen subdomains
    :param RngStream stream:
    :param Optional[DomainSampleSet] open_set: defaults to None
    :param int workers: Threads estimating terms, defaults to 1
    :return BoundReport:
    """
    if not subdomains:
        raise ConfigurationError("subdomains", "at least one subdomain is required")
    pairs = bound_term_pairs(len(subdomains))

    def estimate(job: Tuple[int, Tuple[int, int]]) -> float:
        index, (i, j) = job
        joint = join_subdomains(subdomains[i - 1:j])
        return proxy_hdh_distance(source, joint, stream.fork(PurposeTag.DOMAIN_SPLIT, iteration=index))

    jobs = list(enumerate(pairs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            estimates = list(pool.map(estimate, jobs))
    else:
        estimates = [estimate(job) for job in jobs]
    terms = tuple(BoundTerm(i, j, e) for (i, j), e in zip(pairs, estimates))
    for term in terms:
        logger.debug("Bound term (%d, %d): %.4f", term.i, term.j, term.estimate)
    open_distance = None
    if open_set is not None:
        open_distance = proxy_hdh_distance(source, open_set,
                                           stream.fork(PurposeTag.DOMAIN_SPLIT, iteration=len(pairs)))
    return BoundReport(
        terms=terms,
        conventional_sum=float(sum(t.estimate for t in terms if t.diagonal)),
        full_sum=float(sum(t.estimate for t in terms)),
        open_distance=open_distance,
    )


def benchmark_sample_sets(benchmark: CompoundBenchmark) -> Tuple[DomainSampleSet, List[DomainSampleSet], DomainSampleSet]:
    """Descriptor sets of the source, every seen subdomain and the open split"""
    return (
        DomainSampleSet.from_split(benchmark.source),
        [DomainSampleSet.from_split(split) for split in benchmark.targets],
        DomainSampleSet.from_split(benchmark.open),
    )
