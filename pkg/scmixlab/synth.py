"""Procedural compound-domain benchmark.

A labelled source domain, ``N`` photometrically shifted target subdomains and one held out
open subdomain. Labels are rasterized first and never touched by the photometric shift.
"""
import logging
from dataclasses import dataclass
from math import cos, pi, radians, sin, sqrt
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image, ImageDraw
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import linprog

from ._types import CLASS_PALETTE, Coord, PurposeTag, ShapeKind
from .core import ImageTensor, LabelMap
from .exceptions import ConfigurationError, EmptySplitError, TensorFormatError
from .geometry import band_polygon, triangle_polygon
from .rng import RngStream
from .tensor_io import load_image_png, load_label_png, save_image_png, save_label_png
from .utils import read_json, write_json

logger = logging.getLogger(__name__)

SHAPE_ORDER: Tuple[ShapeKind, ...] = (ShapeKind.DISC, ShapeKind.RECTANGLE, ShapeKind.STRIPE, ShapeKind.TRIANGLE)
MANIFEST = "manifest.json"
TINT_RANGE = 0.06
"""Half width of the uniform per-scene, per-channel color tint."""


class DomainSpec(BaseModel):
    """Photometric parameters of one domain

    .. code-block:: python

        rainy = DomainSpec(brightness_shift=-0.25)

    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    brightness_shift: float = Field(0.0, ge=-0.5, le=0.5)
    hue_rotation: float = 0.0
    """Rotation around the grey axis in degrees."""
    contrast_scale: float = Field(1.0, gt=0)
    noise_sigma: float = Field(0.0, ge=0)
    texture_frequency: float = Field(3.0, gt=0)
    """Cycles of the sinusoidal texture across the image width."""
    texture_amplitude: float = Field(0.05, ge=0, le=0.5)

    def as_vector(self) -> np.ndarray:
        return np.array([self.brightness_shift, self.hue_rotation, self.contrast_scale, self.noise_sigma,
                         self.texture_frequency, self.texture_amplitude], dtype=np.float64)


def _default_targets() -> Tuple[DomainSpec, ...]:
    return (
        DomainSpec(brightness_shift=-0.25),
        DomainSpec(hue_rotation=40.0),
        DomainSpec(noise_sigma=0.08),
    )


def inside_convex_hull(point: np.ndarray, vertices: Sequence[np.ndarray]) -> bool:
    """Whether ``point`` is a convex combination of ``vertices`` (linear feasibility problem)"""
    hull = np.stack(vertices, axis=1)
    count = hull.shape[1]
    result = linprog(
        np.zeros(count),
        A_eq=np.vstack([hull, np.ones((1, count))]),
        b_eq=np.append(point, 1.0),
        bounds=[(0, None)] * count,
        method="highs",
    )
    return result.status == 0


class BenchmarkConfig(BaseModel):
    """Layout of the synthetic compound benchmark. Defaults give three seen subdomains
    (darkened, hue rotated, noisy) and an open subdomain blending hue rotation with noise.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    height: int = Field(48, ge=8)
    width: int = Field(48, ge=8)
    num_classes: int = Field(4, ge=2)
    source: DomainSpec = DomainSpec()
    targets: Tuple[DomainSpec, ...] = Field(default_factory=_default_targets, min_length=1)
    open_domain: DomainSpec = DomainSpec(hue_rotation=20.0, noise_sigma=0.05)
    samples_per_split: int = Field(100, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def _check_domains(self) -> "BenchmarkConfig":
        if self.num_classes > len(CLASS_PALETTE):
            raise ValueError(f"num_classes must be at most {len(CLASS_PALETTE)}, the palette size")
        if inside_convex_hull(self.open_domain.as_vector(), [t.as_vector() for t in self.targets]):
            raise ValueError("open_domain must lie outside the convex hull of the target subdomain specs")
        return self

    @property
    def num_targets(self) -> int:
        return len(self.targets)


@dataclass(frozen=True)
class SceneSample:
    image: ImageTensor
    labels: LabelMap
    domain_id: int

    def __post_init__(self):
        if self.image.shape != self.labels.shape:
            raise ConfigurationError("scene", f"image {self.image.shape} and labels {self.labels.shape} differ in size")


@dataclass(frozen=True)
class Split:
    """Ordered scenes of one domain. Training code reads target splits through :attr:`images` only."""
    name: str
    domain_id: int
    scenes: Tuple[SceneSample, ...]
    spec: Optional[DomainSpec] = None

    def __len__(self) -> int:
        return len(self.scenes)

    def __iter__(self) -> Iterator[SceneSample]:
        return iter(self.scenes)

    @property
    def images(self) -> Tuple[ImageTensor, ...]:
        return tuple(s.image for s in self.scenes)


@dataclass(frozen=True)
class CompoundBenchmark:
    config: BenchmarkConfig
    source: Split
    targets: Tuple[Split, ...]
    open: Split

    @property
    def num_classes(self) -> int:
        return self.config.num_classes

    def target_images(self) -> Tuple[ImageTensor, ...]:
        """Unlabelled pool of every seen subdomain, in split order"""
        return tuple(img for split in self.targets for img in split.images)

    def compound_split(self) -> Split:
        """Pooled seen subdomains with labels, for evaluation only"""
        return Split("compound", -1, tuple(s for split in self.targets for s in split.scenes))

    def splits(self) -> Tuple[Split, ...]:
        return (self.source,) + self.targets + (self.open,)


def _hue_matrix(degrees: float) -> np.ndarray:
    a = radians(degrees)
    c, s = cos(a), sin(a)
    third = (1.0 - c) / 3.0
    root = sqrt(1.0 / 3.0) * s
    return np.array([
        [c + third, third - root, third + root],
        [third + root, c + third, third - root],
        [third - root, third + root, c + third],
    ])


def _draw_shape(draw: ImageDraw.ImageDraw, kind: ShapeKind, label: int, center: Coord, size: float,
                angle: float, extent: float) -> None:
    cx, cy = center
    if kind is ShapeKind.DISC:
        draw.ellipse([cx - size, cy - size, cx + size, cy + size], fill=label)
    elif kind is ShapeKind.RECTANGLE:
        draw.rectangle([cx - size, cy - 0.7 * size, cx + size, cy + 0.7 * size], fill=label)
    elif kind is ShapeKind.STRIPE:
        draw.polygon(band_polygon(center, 2.0 * extent, 0.6 * size, angle), fill=label)
    else:
        draw.polygon(triangle_polygon(center, 1.3 * size, angle), fill=label)


def generate_scene(spec: DomainSpec, num_classes: int, height: int, width: int, stream: RngStream,
                   domain_id: int = 0) -> SceneSample:
    """Renders one labelled scene

    Class 0 is the background, every other class gets one region (disc, rectangle, stripe
    band, triangle, in turn). The photometric pipeline then applies texture, hue rotation,
    contrast, brightness and additive noise, clips to ``[0, 1]`` and quantizes to 8 bits.

    Draw order: per foreground class (centre x, centre y, size, angle), colour tint (3),
    texture angle, texture phase, noise (H×W×3 standard normals).

    :param DomainSpec spec:
    :param int num_classes: ``C >= 2``
    :param int height: ``H >= 8``
    :param int width: ``W >= 8``
    :param RngStream stream:
    :param int domain_id: Recorded on the sample, defaults to 0
    :raises ConfigurationError: ``C`` exceeds the palette or the image is too small
    :return SceneSample:
    """
    if num_classes > len(CLASS_PALETTE):
        raise ConfigurationError("num_classes", f"at most {len(CLASS_PALETTE)} classes are supported")
    if num_classes < 2:
        raise ConfigurationError("num_classes", "at least 2 classes are required")
    if height < 8 or width < 8:
        raise ConfigurationError("height/width", "scenes must be at least 8x8")

    short = min(height, width)
    shapes = []
    for label in range(1, num_classes):
        center = Coord(stream.uniform(0.15 * width, 0.85 * width), stream.uniform(0.15 * height, 0.85 * height))
        size = stream.uniform(0.14 * short, 0.26 * short)
        angle = stream.uniform(0.0, pi)
        shapes.append((SHAPE_ORDER[(label - 1) % len(SHAPE_ORDER)], label, center, size, angle))

    canvas = Image.new("L", (width, height), 0)
    draw = ImageDraw.Draw(canvas)
    for shape in shapes:
        _draw_shape(draw, *shape, extent=max(height, width))
    labels = np.asarray(canvas)
    missing = set(range(1, num_classes)) - set(np.unique(labels).tolist())
    for shape in shapes:
        if shape[1] in missing:  # fully occluded, stamp again on top
            _draw_shape(draw, *shape, extent=max(height, width))
    labels = np.asarray(canvas).astype(np.int64)

    palette = np.asarray(CLASS_PALETTE[:num_classes], dtype=np.float64) / 255.0
    tint = stream.uniform(-TINT_RANGE, TINT_RANGE, size=3)
    image = palette[labels] + tint

    texture_angle = stream.uniform(0.0, pi)
    phase = stream.uniform(0.0, 2 * pi)
    ys, xs = np.mgrid[0:height, 0:width]
    wave = np.sin(2 * pi * spec.texture_frequency * (xs * cos(texture_angle) + ys * sin(texture_angle)) / width + phase)
    image = image * (1.0 + spec.texture_amplitude * wave)[..., None]

    image = image @ _hue_matrix(spec.hue_rotation).T
    image = (image - 0.5) * spec.contrast_scale + 0.5
    image = image + spec.brightness_shift
    image = image + spec.noise_sigma * stream.generator.standard_normal((height, width, 3))
    image = np.clip(image, 0.0, 1.0)
    quantized = np.round(image * 255.0).astype(np.uint8)
    return SceneSample(ImageTensor.from_uint8(quantized), LabelMap(labels), domain_id)


def _generate_split(name: str, domain_id: int, spec: DomainSpec, cfg: BenchmarkConfig) -> Split:
    scenes = tuple(
        generate_scene(spec, cfg.num_classes, cfg.height, cfg.width,
                       RngStream(cfg.seed, iteration=i, purpose=PurposeTag.SCENE, lane=domain_id), domain_id)
        for i in range(cfg.samples_per_split)
    )
    return Split(name, domain_id, scenes, spec)


def make_compound_benchmark(cfg: BenchmarkConfig) -> CompoundBenchmark:
    """Generates the source, seen target and open splits

    Sample ``i`` of domain ``d`` is drawn from the stream ``(seed, i, SCENE, d)``, so splits
    never share draws. Domain ids: source 0, targets ``1..N``, open ``N + 1``.

    :param BenchmarkConfig cfg:
    :raises EmptySplitError: ``samples_per_split`` is zero
    :return CompoundBenchmark:
    """
    if cfg.samples_per_split < 1:
        raise EmptySplitError("samples_per_split must be at least 1")
    seen = []
    for index, spec in enumerate(cfg.targets, start=1):
        if spec in seen:
            logger.warning("Target subdomain %d duplicates an earlier subdomain spec", index)
        seen.append(spec)
    logger.info("Generating benchmark: %d targets, %d samples per split, %dx%d, C=%d",
                cfg.num_targets, cfg.samples_per_split, cfg.height, cfg.width, cfg.num_classes)
    return CompoundBenchmark(
        config=cfg,
        source=_generate_split("source", 0, cfg.source, cfg),
        targets=tuple(_generate_split(f"target_{k}", k, spec, cfg) for k, spec in enumerate(cfg.targets, start=1)),
        open=_generate_split("open", cfg.num_targets + 1, cfg.open_domain, cfg),
    )


def save_split(split: Split, directory: Union[str, Path]) -> None:
    """Writes ``NNNN_image.png`` / ``NNNN_label.png`` pairs"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for index, scene in enumerate(split.scenes):
        save_image_png(scene.image, directory / f"{index:04d}_image.png")
        save_label_png(scene.labels, directory / f"{index:04d}_label.png")


def load_paired_pngs(directory: Union[str, Path], domain_id: int = 0, name: Optional[str] = None) -> Split:
    """Loads a directory of ``*_image.png`` files with matching ``*_label.png`` files

    :param directory:
    :param int domain_id: defaults to 0
    :param Optional[str] name: defaults to the directory name
    :raises TensorFormatError: An image has no label partner
    :raises EmptySplitError: The directory holds no pairs
    :return Split:
    """
    directory = Path(directory)
    scenes: List[SceneSample] = []
    for image_path in sorted(directory.glob("*_image.png")):
        label_path = image_path.with_name(image_path.name[:-len("_image.png")] + "_label.png")
        if not label_path.exists():
            raise TensorFormatError(f"Missing label file {label_path.name} for {image_path.name}")
        scenes.append(SceneSample(load_image_png(image_path), load_label_png(label_path), domain_id))
    if not scenes:
        raise EmptySplitError(f"No image/label pairs in {directory}")
    return Split(name or directory.name, domain_id, tuple(scenes))


def write_benchmark(benchmark: CompoundBenchmark, directory: Union[str, Path]) -> Path:
    """Writes every split plus ``manifest.json`` recording specs and seeds

    Target labels are written for evaluation; the manifest flags them as such.

    :return Path: Path of the manifest
    """
    directory = Path(directory)
    entries = []
    for split in benchmark.splits():
        save_split(split, directory / split.name)
        entries.append({
            "name": split.name,
            "domain_id": split.domain_id,
            "samples": len(split),
            "spec": None if split.spec is None else split.spec.model_dump(mode="json"),
            "labels_for_evaluation_only": split.name.startswith("target_"),
        })
    manifest = directory / MANIFEST
    write_json(manifest, {
        "config": benchmark.config.model_dump(mode="json"),
        "seed": benchmark.config.seed,
        "scene_stream": "(seed, sample index, SCENE, domain id)",
        "splits": entries,
    })
    return manifest


def load_benchmark(directory: Union[str, Path]) -> CompoundBenchmark:
    """Reads a benchmark written by :func:`write_benchmark`"""
    directory = Path(directory)
    manifest = read_json(directory / MANIFEST)
    cfg = BenchmarkConfig.model_validate(manifest["config"])
    splits = {
        entry["name"]: load_paired_pngs(directory / entry["name"], entry["domain_id"], entry["name"])
        for entry in manifest["splits"]
    }
    return CompoundBenchmark(
        config=cfg,
        source=splits["source"],
        targets=tuple(splits[f"target_{k}"] for k in range(1, cfg.num_targets + 1)),
        open=splits["open"],
    )
