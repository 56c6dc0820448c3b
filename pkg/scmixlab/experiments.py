"""Multi-method, multi-seed comparisons and hyperparameter sweeps."""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np

from ._types import Method, MixerKind
from .config import ExperimentConfig
from .core import ImageTensor, LabelMap, one_hot_encode
from .exceptions import ConfigurationError, ExperimentAbortedError
from .mixing import ENUMERATION_LIMIT, MixParams, SourcePair, TargetTriple, enumerate_reachable
from .rng import RngStream
from .synth import CompoundBenchmark, make_compound_benchmark
from .trainer import EvalRecord, evaluate_benchmark, train
from .utils import config_hash

logger = logging.getLogger(__name__)

SWEEP_AXES = ("n_c", "grid_sizes")
N_C_VALUES: Tuple[int, ...] = (1, 2, 3, 4, 5)
GRID_VALUES: Tuple[Tuple[int, ...], ...] = ((1, 2), (2, 4), (4, 8), (8, 16), (2, 4, 8))

SweepValue = Union[int, Tuple[int, ...]]


@dataclass(frozen=True)
class ComparisonRow:
    """Final scores of one ``(method, seed)`` run. ``per_class`` is the compound split IoU."""
    method: Method
    seed: int
    compound: float
    open: float
    o_plus_c: float
    per_class: Tuple[Optional[float], ...]
    subdomains: Tuple[float, ...]

    @classmethod
    def from_record(cls, method: Method, seed: int, record: EvalRecord) -> "ComparisonRow":
        return cls(method, seed, record.compound.miou, record.open.miou, record.o_plus_c,
                   record.compound.per_class, tuple(s.miou for s in record.subdomains))


@dataclass(frozen=True)
class MethodAggregate:
    """Mean and population standard deviation over a method's seeds"""
    method: Method
    runs: int
    compound_mean: float
    compound_std: float
    open_mean: float
    open_std: float
    o_plus_c_mean: float
    o_plus_c_std: float


@dataclass(frozen=True)
class ComparisonReport:
    rows: Tuple[ComparisonRow, ...]
    config_hash: str
    seeds: Tuple[int, ...]

    def methods(self) -> List[Method]:
        seen: List[Method] = []
        for row in self.rows:
            if row.method not in seen:
                seen.append(row.method)
        return seen

    def aggregates(self) -> Tuple[MethodAggregate, ...]:
        """Recomputed from :attr:`rows` on every call"""
        result = []
        for method in self.methods():
            rows = [r for r in self.rows if r.method is method]
            columns = {name: np.array([getattr(r, name) for r in rows]) for name in ("compound", "open", "o_plus_c")}
            result.append(MethodAggregate(
                method, len(rows),
                float(columns["compound"].mean()), float(columns["compound"].std()),
                float(columns["open"].mean()), float(columns["open"].std()),
                float(columns["o_plus_c"].mean()), float(columns["o_plus_c"].std()),
            ))
        return tuple(result)

    def aggregate(self, method: Method) -> MethodAggregate:
        for entry in self.aggregates():
            if entry.method is method:
                return entry
        raise KeyError(method.value)

    def header(self, num_classes: int) -> List[str]:
        return (["method", "seed", "compound_miou", "open_miou", "o_plus_c"]
                + [f"iou_class_{c}" for c in range(num_classes)] + ["config_hash"])

    def table_rows(self) -> List[list]:
        return [[r.method.value, r.seed, r.compound, r.open, r.o_plus_c, *r.per_class, self.config_hash]
                for r in self.rows]

    def summary(self) -> Dict[str, object]:
        return {
            "config_hash": self.config_hash,
            "seeds": list(self.seeds),
            "runs": [
                {"method": r.method.value, "seed": r.seed, "compound_miou": r.compound, "open_miou": r.open,
                 "o_plus_c": r.o_plus_c, "subdomain_miou": list(r.subdomains), "per_class_iou": list(r.per_class)}
                for r in self.rows
            ],
            "aggregates": [
                {"method": a.method.value, "runs": a.runs,
                 "compound_mean": a.compound_mean, "compound_std": a.compound_std,
                 "open_mean": a.open_mean, "open_std": a.open_std,
                 "o_plus_c_mean": a.o_plus_c_mean, "o_plus_c_std": a.o_plus_c_std}
                for a in self.aggregates()
            ],
        }


def run_single(config: ExperimentConfig, benchmark: CompoundBenchmark, method: Method, seed: int) -> ComparisonRow:
    """Trains one method with one seed and scores the final student"""
    student, history = train(config.train_config(seed, method), benchmark)
    record = history.final if history.final is not None else evaluate_benchmark(student, benchmark)
    logger.info("%s seed %d: compound %.4f, open %.4f", method.value, seed, record.compound.miou, record.open.miou)
    return ComparisonRow.from_record(method, seed, record)


def run_comparison(config: ExperimentConfig, methods: Optional[Sequence[Method]] = None,
                   seeds: Optional[Sequence[int]] = None, workers: int = 1,
                   benchmark: Optional[CompoundBenchmark] = None) -> ComparisonReport:
    """Trains every method with every seed on one benchmark

    Rows are ordered by method, then seed, regardless of ``workers``.

    :param ExperimentConfig config:
    :param Optional[Sequence[Method]] methods: defaults to ``config.methods``
    :param Optional[Sequence[int]] seeds: defaults to ``config.seeds``
    :param int workers: Threads running ``(method, seed)`` jobs, defaults to 1
    :param Optional[CompoundBenchmark] benchmark: defaults to one generated from ``config.benchmark``
    :raises ExperimentAbortedError: A run failed, ``partial`` holds the report of the finished runs
    :return ComparisonReport:
    """
    methods = tuple(config.methods if methods is None else methods)
    seeds = tuple(config.seeds if seeds is None else seeds)
    if not methods:
        raise ConfigurationError("methods", "at least one method is required")
    if not seeds:
        raise ConfigurationError("seeds", "at least one seed is required")
    if benchmark is None:
        benchmark = make_compound_benchmark(config.benchmark)
    digest = config_hash(config)
    jobs = [(method, seed) for method in methods for seed in seeds]
    rows: List[ComparisonRow] = []
    try:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(run_single, config, benchmark, m, s) for m, s in jobs]
                for future in futures:
                    rows.append(future.result())
        else:
            for method, seed in jobs:
                rows.append(run_single(config, benchmark, method, seed))
    except (ValueError, RuntimeError) as e:
        partial = ComparisonReport(tuple(rows), digest, seeds)
        raise ExperimentAbortedError(e, partial) from e
    return ComparisonReport(tuple(rows), digest, seeds)


@dataclass(frozen=True)
class SweepRow:
    """A single run, or the mean over seeds when ``seed`` is ``None``"""
    value: SweepValue
    seed: Optional[int]
    compound: float
    open: float
    o_plus_c: float


@dataclass(frozen=True)
class SweepTable:
    axis: str
    rows: Tuple[SweepRow, ...]
    config_hash: str

    HEADER = ("axis", "value", "seed", "compound_miou", "open_miou", "o_plus_c", "config_hash")

    def table_rows(self) -> List[list]:
        return [[self.axis, format_sweep_value(r.value), "mean" if r.seed is None else r.seed,
                 r.compound, r.open, r.o_plus_c, self.config_hash] for r in self.rows]

    def means(self) -> Dict[SweepValue, SweepRow]:
        return {r.value: r for r in self.rows if r.seed is None}


def format_sweep_value(value: SweepValue) -> str:
    if isinstance(value, tuple):
        return "[" + ",".join(str(v) for v in value) + "]"
    return str(value)


def _with_axis(config: ExperimentConfig, axis: str, value: SweepValue) -> ExperimentConfig:
    if axis not in SWEEP_AXES:
        raise ConfigurationError("axis", f"must be one of {', '.join(SWEEP_AXES)}, got {axis}")
    mixing = config.mixing.model_dump(mode="json")
    mixing[axis] = list(value) if isinstance(value, tuple) else value
    return config.updated(mixing=mixing)


def run_sweep(config: ExperimentConfig, axis: str, values: Optional[Sequence[SweepValue]] = None,
              seeds: Optional[Sequence[int]] = None, workers: int = 1,
              benchmark: Optional[CompoundBenchmark] = None) -> SweepTable:
    """One scmix-st comparison per axis value

    :param ExperimentConfig config:
    :param str axis: ``"n_c"`` or ``"grid_sizes"``
    :param values: defaults to ``1..5`` for ``n_c`` and ``[1,2] [2,4] [4,8] [8,16] [2,4,8]`` for ``grid_sizes``
    :param Optional[Sequence[int]] seeds: defaults to ``config.seeds``
    :param int workers: defaults to 1
    :param Optional[CompoundBenchmark] benchmark: defaults to one generated from ``config.benchmark``
    :raises ConfigurationError: Unknown axis or invalid value
    :return SweepTable: ``|values| × |seeds|`` run rows followed, per value, by its mean row
    """
    if values is None:
        values = N_C_VALUES if axis == "n_c" else GRID_VALUES
    values = [tuple(v) if isinstance(v, (list, tuple)) else int(v) for v in values]
    configs = [_with_axis(config, axis, value) for value in values]
    if benchmark is None:
        benchmark = make_compound_benchmark(config.benchmark)
    rows: List[SweepRow] = []
    for value, cfg in zip(values, configs):
        logger.info("Sweep %s = %s", axis, format_sweep_value(value))
        report = run_comparison(cfg, [Method.SCMIX_ST], seeds, workers, benchmark)
        rows += [SweepRow(value, r.seed, r.compound, r.open, r.o_plus_c) for r in report.rows]
        mean = report.aggregate(Method.SCMIX_ST)
        rows.append(SweepRow(value, None, mean.compound_mean, mean.open_mean, mean.o_plus_c_mean))
    return SweepTable(axis, tuple(rows), config_hash(config))


@dataclass(frozen=True)
class ReachabilityResult:
    """Reachable output sets of scmix and of classmix over the same target pool"""
    scmix: FrozenSet[bytes]
    classmix: FrozenSet[bytes]

    @property
    def contains_classmix(self) -> bool:
        return self.classmix <= self.scmix

    @property
    def strict(self) -> bool:
        return self.classmix < self.scmix

    def summary(self) -> Dict[str, object]:
        return {
            "scmix_outputs": len(self.scmix),
            "classmix_outputs": len(self.classmix),
            "classmix_subset_of_scmix": self.contains_classmix,
            "strict_inclusion": self.strict,
        }


def toy_instance(size: int, num_classes: int, num_targets: int,
                 stream: RngStream) -> Tuple[SourcePair, List[TargetTriple]]:
    """Random source and pseudo-labelled targets for exhaustive enumeration

    Draw order: source labels, source image, then per target image, pseudo-labels and a
    confidence in ``[0.1, 0.9)``.
    """
    gen = stream.generator
    labels = LabelMap(gen.integers(0, num_classes, size=(size, size)))
    source = SourcePair.from_labels(ImageTensor(gen.random((size, size, 3), dtype=np.float32)), labels, num_classes)
    targets = []
    for _ in range(num_targets):
        image = ImageTensor(gen.random((size, size, 3), dtype=np.float32))
        pseudo = one_hot_encode(LabelMap(gen.integers(0, num_classes, size=(size, size))), num_classes)
        targets.append(TargetTriple(image, pseudo, float(stream.uniform(0.1, 0.9))))
    return source, targets


def reachability_check(params: MixParams, size: int = 4, num_classes: int = 2, num_targets: Optional[int] = None,
                       seed: int = 0, limit: int = ENUMERATION_LIMIT) -> ReachabilityResult:
    """Enumerates scmix (first ``n_c`` targets) and classmix (every target) on a toy instance

    :param MixParams params:
    :param int size: Image side, defaults to 4
    :param int num_classes: defaults to 2
    :param Optional[int] num_targets: Pool size, defaults to ``params.n_c``
    :param int seed: defaults to 0
    :param int limit: Enumeration guard, defaults to ``10**6``
    :raises CombinatorialExplosionError:
    :return ReachabilityResult:
    """
    pool = params.n_c if num_targets is None else num_targets
    if pool < params.n_c:
        raise ConfigurationError("num_targets", f"must be at least n_c={params.n_c}")
    source, targets = toy_instance(size, num_classes, pool, RngStream(seed))
    return ReachabilityResult(
        scmix=enumerate_reachable(source, targets[:params.n_c], params, MixerKind.SCMIX, limit),
        classmix=enumerate_reachable(source, targets, params, MixerKind.CLASSMIX, limit),
    )
