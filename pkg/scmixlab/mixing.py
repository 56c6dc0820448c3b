"""Sample mixers: compound grid fusion, class mixing with the source, the single-target
baselines, post-mix photometric augmentation and exhaustive reachable-set enumeration.

Fusion is exact selection (``np.where`` / fancy indexing), so mixed pixels are bit-for-bit
copies of an input pixel.

Draw order of :func:`scmix`, each from its own fork of the caller's stream:

1. ``GRID_DIMS``: ``g_h`` then ``g_v``
2. ``GRID_VALUES``: one target index per cell, row-major
3. ``CLASS_SUBSET``: one class subset per cell, row-major
"""
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import comb, sqrt
from typing import FrozenSet, List, NamedTuple, Optional, Sequence, Set, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, field_validator
from scipy.ndimage import gaussian_filter

from ._types import MixerKind, PurposeTag, Rect
from .core import ImageTensor, IndexMap, LabelMap, OneHotLabel, WeightMap, one_hot_encode, require_same_shape
from .exceptions import (
    CombinatorialExplosionError,
    ConfigurationError,
    DegenerateRectangleError,
    MaskRangeError,
    ShapeMismatchError,
)
from .geometry import expand_cells, rect_mask
from .masking import (
    ClassMask,
    GridGeometry,
    GridMask,
    build_class_mask,
    classes_to_select,
    image_class_mask,
    make_grid_mask,
    sample_grid_dims,
    select_class_subset,
)
from .rng import RngStream
from .tensor_io import serialize_tensor

logger = logging.getLogger(__name__)

ENUMERATION_LIMIT = 10**6


class MixParams(BaseModel):
    """Mixing hyperparameters

    :param int n_c: Number of target images fused per sample
    :param Tuple[int, ...] grid_sizes: Candidate cell counts ``G``
    :param MixerKind mixer: Mixing strategy used by the trainer
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    n_c: int = Field(3, ge=1)
    grid_sizes: Tuple[PositiveInt, ...] = Field((2, 4, 8), min_length=1)
    mixer: MixerKind = MixerKind.SCMIX


class AugmentParams(BaseModel):
    """Post-mix colour jitter and blur"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    jitter: float = Field(0.2, ge=0, le=1)
    """Per-channel scale drawn from ``[1 - jitter, 1 + jitter]``."""
    brightness: float = Field(0.1, ge=0, le=1)
    """Offset drawn from ``[-brightness, brightness]``."""
    blur_prob: float = Field(0.5, ge=0, le=1)
    sigma_range: Tuple[float, float] = (0.15, 1.15)
    blur_radius: Optional[PositiveInt] = None
    """Kernel radius in pixels. ``None`` keeps the truncation at four sigma."""

    @field_validator("sigma_range")
    @classmethod
    def _ordered(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        low, high = value
        if not 0 < low <= high:
            raise ValueError("sigma_range must satisfy 0 < low <= high")
        return value

    @classmethod
    def identity(cls) -> "AugmentParams":
        return cls(jitter=0.0, brightness=0.0, blur_prob=0.0)


@dataclass(frozen=True)
class TargetTriple:
    """Target image with teacher pseudo-labels and its scalar confidence weight"""
    image: ImageTensor
    pseudo_labels: OneHotLabel
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"Confidence must lie in [0, 1], got {self.confidence}")
        require_same_shape("pseudo labels", self.image.shape, self.pseudo_labels.shape)


@dataclass(frozen=True)
class SourcePair:
    """Labelled source image with both label encodings"""
    image: ImageTensor
    labels: LabelMap
    one_hot: OneHotLabel

    def __post_init__(self):
        require_same_shape("source labels", self.image.shape, self.labels.shape)
        require_same_shape("source one-hot labels", self.image.shape, self.one_hot.shape)

    @classmethod
    def from_labels(cls, image: ImageTensor, labels: LabelMap, num_classes: int) -> "SourcePair":
        return cls(image, labels, one_hot_encode(labels, num_classes))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.image.shape


class CompoundTriple(NamedTuple):
    """Output of the grid fusion stage. ``index`` is the grid mask that produced it."""
    image: ImageTensor
    labels: OneHotLabel
    weights: WeightMap
    index: Optional[IndexMap] = None


@dataclass(frozen=True)
class MixedSample:
    """Mixed image, labels and loss weights. ``provenance`` is 0 on source pixels and ``k`` on
    pixels copied from target ``k``.
    """
    image: ImageTensor
    labels: OneHotLabel
    weights: WeightMap
    provenance: IndexMap

    def __post_init__(self):
        require_same_shape("mixed labels", self.image.shape, self.labels.shape)
        require_same_shape("mixed weights", self.image.shape, self.weights.shape)
        require_same_shape("provenance", self.image.shape, self.provenance.shape)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.image.shape

    def canonical_bytes(self) -> bytes:
        """Exact encoding of image, labels and weights, used for set comparisons"""
        return serialize_tensor(self.image) + serialize_tensor(self.labels) + serialize_tensor(self.weights)

    def provenance_counts(self, n_c: int) -> np.ndarray:
        """Pixel count per provenance value ``0..n_c``"""
        return np.bincount(self.provenance.data.ravel(), minlength=n_c + 1)


def single_target_compound(target: TargetTriple) -> CompoundTriple:
    shape = target.image.shape
    return CompoundTriple(target.image, target.pseudo_labels, WeightMap.constant(shape, target.confidence),
                          IndexMap(np.ones(shape, dtype=np.int64)))


def fuse_compound_targets(targets: Sequence[TargetTriple], mask: GridMask) -> CompoundTriple:
    """Gathers every pixel from the target its grid mask value selects

    :param Sequence[TargetTriple] targets: Targets ``1..N_c``
    :param GridMask mask:
    :raises ShapeMismatchError: Targets or mask disagree in shape or class count
    :raises MaskRangeError: A mask value has no matching target
    :return CompoundTriple:
    """
    if not targets:
        raise ConfigurationError("targets", "at least one target is required")
    shape = targets[0].image.shape
    num_classes = targets[0].pseudo_labels.num_classes
    for target in targets[1:]:
        require_same_shape("target image", shape, target.image.shape)
        if target.pseudo_labels.num_classes != num_classes:
            raise ShapeMismatchError("target class count", (num_classes,), (target.pseudo_labels.num_classes,))
    require_same_shape("grid mask", shape, mask.shape)
    if mask.data.max() > len(targets):
        raise MaskRangeError(int(mask.data.max()), len(targets))

    choice = mask.data - 1
    rows, cols = np.indices(shape)
    images = np.stack([t.image.data for t in targets])
    labels = np.stack([t.pseudo_labels.data for t in targets])
    confidences = np.array([t.confidence for t in targets], dtype=np.float32)
    return CompoundTriple(
        ImageTensor(images[choice, rows, cols]),
        OneHotLabel(labels[choice, rows, cols]),
        WeightMap(confidences[choice]),
        mask.index,
    )


def class_mix_fuse(source: ImageTensor, source_labels: OneHotLabel, compound: CompoundTriple,
                   mask: ClassMask) -> MixedSample:
    """Pastes the masked source pixels over the compound sample

    Source pixels carry weight 1. Provenance is 0 where the mask is set and the compound grid
    index elsewhere (1 when the compound carries no index).

    :param ImageTensor source:
    :param OneHotLabel source_labels:
    :param CompoundTriple compound:
    :param ClassMask mask:
    :raises ShapeMismatchError:
    :return MixedSample:
    """
    shape = source.shape
    for what, got in (("source labels", source_labels.shape), ("compound image", compound.image.shape),
                      ("compound labels", compound.labels.shape), ("compound weights", compound.weights.shape),
                      ("class mask", mask.shape)):
        require_same_shape(what, shape, got)
    if source_labels.num_classes != compound.labels.num_classes:
        raise ShapeMismatchError("class count", (source_labels.num_classes,), (compound.labels.num_classes,))
    index = np.ones(shape, dtype=np.int64) if compound.index is None else compound.index.data
    m = mask.data
    return MixedSample(
        ImageTensor(np.where(m[..., None], source.data, compound.image.data)),
        OneHotLabel(np.where(m[..., None], source_labels.data, compound.labels.data)),
        WeightMap(np.where(m, np.float32(1.0), compound.weights.data)),
        IndexMap(np.where(m, 0, index)),
    )


def _require_target_count(targets: Sequence[TargetTriple], n_c: int) -> None:
    if len(targets) != n_c:
        raise ConfigurationError("mixing.n_c", f"expected {n_c} target samples, got {len(targets)}")


def scmix(source: SourcePair, targets: Sequence[TargetTriple], params: MixParams, stream: RngStream) -> MixedSample:
    """Grid fusion of ``n_c`` targets followed by per-cell class mixing with the source

    Sampled cell counts are capped at the image extent.

    :param SourcePair source:
    :param Sequence[TargetTriple] targets: Exactly ``params.n_c`` targets
    :param MixParams params:
    :param RngStream stream:
    :return MixedSample:
    """
    _require_target_count(targets, params.n_c)
    height, width = source.shape
    geom = sample_grid_dims(params.grid_sizes, stream.fork(PurposeTag.GRID_DIMS)).clamped(height, width)
    grid = make_grid_mask(height, width, geom, params.n_c, stream.fork(PurposeTag.GRID_VALUES))
    compound = fuse_compound_targets(targets, grid)
    mask = build_class_mask(source.labels, geom, params.n_c, stream.fork(PurposeTag.CLASS_SUBSET))
    return class_mix_fuse(source.image, source.one_hot, compound, mask)


def classmix_single(source: SourcePair, target: TargetTriple, stream: RngStream) -> MixedSample:
    """Pastes ``ceil(c_s / 2)`` of the source image's classes onto one target

    The subset is drawn from the ``CLASS_SUBSET`` fork exactly as :func:`scmix` draws the
    subset of a single cell, so ``scmix`` with ``n_c=1`` and ``G=[1]`` reproduces it.

    :param SourcePair source:
    :param TargetTriple target:
    :param RngStream stream:
    :return MixedSample:
    """
    present = source.labels.classes_present()
    chosen = select_class_subset(present, classes_to_select(len(present), 1), stream.fork(PurposeTag.CLASS_SUBSET))
    return class_mix_fuse(source.image, source.one_hot, single_target_compound(target),
                          image_class_mask(source.labels, chosen))


def sample_cut_rectangle(height: int, width: int, stream: RngStream, area_range: Tuple[float, float] = (0.25, 0.5),
                         max_redraws: int = 16) -> Rect:
    """Random axis aligned rectangle covering a uniform fraction of the image area

    Draw order per attempt: area fraction, top, left. Empty rectangles are redrawn.

    :param int height:
    :param int width:
    :param RngStream stream:
    :param Tuple[float, float] area_range: defaults to ``(0.25, 0.5)``
    :param int max_redraws: defaults to 16
    :raises DegenerateRectangleError: Every attempt produced an empty rectangle
    :return Rect:
    """
    low, high = area_range
    if not 0.0 <= low <= high <= 1.0:
        raise ConfigurationError("area_range", "must satisfy 0 <= low <= high <= 1")
    for _ in range(max_redraws):
        fraction = float(stream.uniform(low, high))
        rect_h = round(height * sqrt(fraction))
        rect_w = round(width * sqrt(fraction))
        top = stream.uniform_int(0, height - rect_h)
        left = stream.uniform_int(0, width - rect_w)
        rect = Rect(top, left, rect_h, rect_w)
        if not rect.is_empty():
            return rect
    raise DegenerateRectangleError(max_redraws)


def paste_rectangle(source: SourcePair, target: TargetTriple, rect: Rect) -> MixedSample:
    mask = ClassMask(rect_mask(*source.shape, rect), GridGeometry(1, 1), ())
    return class_mix_fuse(source.image, source.one_hot, single_target_compound(target), mask)


def cutmix_single(source: SourcePair, target: TargetTriple, stream: RngStream,
                  area_range: Tuple[float, float] = (0.25, 0.5), max_redraws: int = 16) -> MixedSample:
    """Pastes a random source rectangle onto one target, drawing from the ``CUTMIX`` fork"""
    require_same_shape("cutmix target", source.shape, target.image.shape)
    rect = sample_cut_rectangle(*source.shape, stream.fork(PurposeTag.CUTMIX), area_range, max_redraws)
    return paste_rectangle(source, target, rect)


def target_only(target: TargetTriple) -> MixedSample:
    """The pseudo-labelled target without source pixels"""
    compound = single_target_compound(target)
    return MixedSample(compound.image, compound.labels, compound.weights, compound.index)


def mix_sample(mixer: MixerKind, source: SourcePair, targets: Sequence[TargetTriple], params: MixParams,
               stream: RngStream) -> MixedSample:
    """Dispatches to the mixer. Single-target mixers use the first target."""
    if mixer is MixerKind.SCMIX:
        return scmix(source, targets, params, stream)
    if mixer is MixerKind.CLASSMIX:
        return classmix_single(source, targets[0], stream)
    if mixer is MixerKind.CUTMIX:
        return cutmix_single(source, targets[0], stream)
    return target_only(targets[0])


def gaussian_blur(image: ImageTensor, sigma: float, radius: Optional[int] = None) -> ImageTensor:
    """Separable Gaussian blur of each channel with clamped borders

    :param ImageTensor image:
    :param float sigma:
    :param Optional[int] radius: Kernel half width, defaults to ``round(4 * sigma)``
    :return ImageTensor:
    """
    return ImageTensor(np.clip(_blur(image.data.astype(np.float64), sigma, radius), 0.0, 1.0))


def _blur(data: np.ndarray, sigma: float, radius: Optional[int]) -> np.ndarray:
    if radius is None:
        return gaussian_filter(data, sigma=(sigma, sigma, 0.0), mode="nearest")
    return gaussian_filter(data, sigma=(sigma, sigma, 0.0), mode="nearest", radius=(radius, radius, 0))


def post_augment(image: ImageTensor, stream: RngStream, params: AugmentParams = AugmentParams()) -> ImageTensor:
    """Colour jitter then random Gaussian blur, clipped to ``[0, 1]``

    ``JITTER`` fork: three channel scales, then the brightness offset. ``BLUR`` fork: the
    blur coin, then sigma when the coin lands.

    :param ImageTensor image:
    :param RngStream stream:
    :param AugmentParams params: defaults to :class:`AugmentParams`
    :return ImageTensor:
    """
    jitter = stream.fork(PurposeTag.JITTER)
    scales = jitter.uniform(1.0 - params.jitter, 1.0 + params.jitter, size=3)
    offset = jitter.uniform(-params.brightness, params.brightness)
    data = image.data.astype(np.float64) * scales + offset

    blur = stream.fork(PurposeTag.BLUR)
    if blur.random() < params.blur_prob:
        sigma = float(blur.uniform(*params.sigma_range))
        data = _blur(data, sigma, params.blur_radius)
    return ImageTensor(np.clip(data, 0.0, 1.0).astype(np.float32))


class _CellChoices(NamedTuple):
    slices: List[Tuple[slice, slice]]
    subsets: List[List[Tuple[int, ...]]]


def _cell_choices(labels: LabelMap, geom: GridGeometry, n_c: int) -> _CellChoices:
    height, width = labels.shape
    slices = list(geom.cell_slices(height, width))
    subsets = []
    for rows, cols in slices:
        present = LabelMap(labels.data[rows, cols]).classes_present()
        if not present:
            subsets.append([()])
        else:
            subsets.append(list(itertools.combinations(present, classes_to_select(len(present), n_c))))
    return _CellChoices(slices, subsets)


def _scmix_geometries(params: MixParams, height: int, width: int) -> List[GridGeometry]:
    seen = []
    for g_h, g_v in itertools.product(params.grid_sizes, repeat=2):
        geom = GridGeometry(g_h, g_v).clamped(height, width)
        if geom not in seen:
            seen.append(geom)
    return seen


def count_reachable_draws(source: SourcePair, targets: Sequence[TargetTriple], params: MixParams,
                          mixer: MixerKind) -> int:
    """Number of draw combinations :func:`enumerate_reachable` visits"""
    if mixer is MixerKind.CLASSMIX:
        present = len(source.labels.classes_present())
        return len(targets) * comb(present, classes_to_select(present, 1)) if present else len(targets)
    if mixer is not MixerKind.SCMIX:
        raise ConfigurationError("mixer", f"enumeration supports scmix and classmix, got {mixer.value}")
    height, width = source.shape
    total = 0
    for geom in _scmix_geometries(params, height, width):
        choices = _cell_choices(source.labels, geom, params.n_c)
        total += params.n_c ** geom.cells * int(np.prod([len(s) for s in choices.subsets], dtype=object))
    return total


def _enumerate_geometry(source: SourcePair, targets: Sequence[TargetTriple], n_c: int,
                        geom: GridGeometry) -> Set[bytes]:
    height, width = source.shape
    choices = _cell_choices(source.labels, geom, n_c)
    masks = []
    for picks in itertools.product(*choices.subsets):
        mask = np.zeros((height, width), dtype=bool)
        for (rows, cols), chosen in zip(choices.slices, picks):
            mask[rows, cols] = np.isin(source.labels.data[rows, cols], chosen)
        masks.append(ClassMask(mask, geom, tuple(picks)))
    outputs = set()
    for assignment in itertools.product(range(1, n_c + 1), repeat=geom.cells):
        values = np.array(assignment, dtype=np.int64).reshape(geom.g_v, geom.g_h)
        grid = GridMask(IndexMap(expand_cells(values, height, width)), geom, n_c)
        compound = fuse_compound_targets(targets, grid)
        for mask in masks:
            outputs.add(class_mix_fuse(source.image, source.one_hot, compound, mask).canonical_bytes())
    return outputs


def enumerate_reachable(source: SourcePair, targets: Sequence[TargetTriple], params: MixParams,
                        mixer: MixerKind = MixerKind.SCMIX, limit: int = ENUMERATION_LIMIT,
                        workers: int = 1) -> FrozenSet[bytes]:
    """Every output a mixer can produce on fixed inputs, over all of its random draws

    ``scmix`` visits every grid geometry from ``G`` (capped at the image extent), every
    per-cell target assignment and every per-cell class subset. ``classmix`` visits every
    target of the pool with every half-class subset. Outputs are deduplicated by
    :meth:`MixedSample.canonical_bytes`.

    :param SourcePair source:
    :param Sequence[TargetTriple] targets: ``n_c`` targets for ``scmix``, the pool for ``classmix``
    :param MixParams params:
    :param MixerKind mixer: defaults to ``SCMIX``
    :param int limit: Largest number of draw combinations allowed, defaults to ``10**6``
    :param int workers: Threads sharing the geometries, defaults to 1
    :raises CombinatorialExplosionError: The draw space exceeds ``limit``
    :raises ConfigurationError: Unsupported mixer
    :return FrozenSet[bytes]:
    """
    count = count_reachable_draws(source, targets, params, mixer)
    logger.debug("Enumerating %d %s draw combinations", count, mixer.value)
    if count > limit:
        raise CombinatorialExplosionError(count, limit)

    if mixer is MixerKind.CLASSMIX:
        present = source.labels.classes_present()
        subsets = list(itertools.combinations(present, classes_to_select(len(present), 1))) if present else [()]
        return frozenset(
            class_mix_fuse(source.image, source.one_hot, single_target_compound(target),
                           image_class_mask(source.labels, chosen)).canonical_bytes()
            for target in targets for chosen in subsets
        )

    _require_target_count(targets, params.n_c)
    geometries = _scmix_geometries(params, *source.shape)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda g: _enumerate_geometry(source, targets, params.n_c, g), geometries))
    else:
        parts = [_enumerate_geometry(source, targets, params.n_c, g) for g in geometries]
    return frozenset().union(*parts)
