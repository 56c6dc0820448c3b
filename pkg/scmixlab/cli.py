"""Command line entry point ``scmixlab``.

Every subcommand reads an optional configuration file, applies the command line
overrides and writes its outputs below ``--out`` (or the configured ``output_dir``).
Exit codes: 0 success, 1 usage error, 2 invalid input or configuration, 3 runtime abort.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from ._types import Method, MixerKind
from .components import save_panels
from .config import ExperimentConfig, parse_config
from .core import ProbabilityMap
from .discrepancy import ESTIMATOR, benchmark_sample_sets, ocda_bound_terms
from .exceptions import ConfigurationError, ExperimentAbortedError, TensorFormatError
from .experiments import ComparisonReport, SWEEP_AXES, reachability_check, run_comparison, run_sweep
from .metrics import evaluate_miou
from .mixing import MixedSample, MixParams, SourcePair, TargetTriple, mix_sample, post_augment
from .model import confidence_weight, load_model, predict_probs, pseudo_label, save_model
from .rng import RngStream
from .synth import MANIFEST, CompoundBenchmark, Split, load_benchmark, load_paired_pngs, make_compound_benchmark, write_benchmark
from .tensor_io import load_image_png, load_label_png, read_tensor, save_image_png, write_tensor
from .trainer import HISTORY_HEADER, train
from .utils import config_hash, write_csv, write_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    """Reports usage errors with exit code 1"""
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> Tuple[int, ...]:
    try:
        values = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def _method_list(text: str) -> Tuple[Method, ...]:
    try:
        return tuple(Method(part.strip()) for part in text.split(",") if part.strip())
    except ValueError:
        names = ", ".join(m.value for m in Method)
        raise argparse.ArgumentTypeError(f"methods must be taken from {names}, got {text!r}")


def _json_list(text: str) -> List[Any]:
    try:
        values = json.loads(text)
    except json.JSONDecodeError:
        raise argparse.ArgumentTypeError(f"expected a JSON list, got {text!r}")
    if not isinstance(values, list) or not values:
        raise argparse.ArgumentTypeError(f"expected a non-empty JSON list, got {text!r}")
    return values


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="Configuration file, defaults apply when omitted")
    common.add_argument("--seed", type=int, help="Seed of the run (the benchmark seed for gen-data)")
    common.add_argument("--seeds", type=_int_list, help="Comma separated seeds of multi-seed runs")
    common.add_argument("--out", type=Path, help="Output directory, defaults to the configured output_dir")
    common.add_argument("--methods", type=_method_list, help="Comma separated methods to compare")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Log debug messages")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Log warnings and errors only")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="scmixlab", description="SCMix open compound domain adaptation lab")
    common = _common_options()
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    gen = commands.add_parser("gen-data", parents=[common], help="Write the synthetic compound benchmark")
    gen.set_defaults(handler=cmd_gen_data)

    aug = commands.add_parser("augment", parents=[common], help="Mix one source sample with target samples")
    aug.add_argument("--source-image", type=Path, required=True)
    aug.add_argument("--source-label", type=Path, required=True)
    aug.add_argument("--target", type=Path, action="append", required=True, dest="targets",
                     help="Target image PNG, repeated once per target")
    teacher = aug.add_mutually_exclusive_group(required=True)
    teacher.add_argument("--probs", type=Path, action="append",
                         help="Serialized teacher probabilities, one per --target")
    teacher.add_argument("--model", type=Path, help="Teacher model computing the probabilities")
    aug.add_argument("--scale", type=int, default=4, help="Panel upsampling factor (default: 4)")
    aug.add_argument("--post-augment", action="store_true", help="Apply colour jitter and blur to the mixed image")
    aug.set_defaults(handler=cmd_augment)

    tr = commands.add_parser("train", parents=[common], help="Train a student and write its history")
    tr.add_argument("--data", type=Path, help="Benchmark directory written by gen-data")
    tr.add_argument("--method", type=Method, choices=list(Method), metavar="METHOD",
                    help="Training recipe, defaults to self-training with the configured mixer")
    tr.set_defaults(handler=cmd_train)

    ev = commands.add_parser("eval", parents=[common], help="Score a model on a labelled split")
    ev.add_argument("--model", type=Path, required=True)
    ev.add_argument("--data", type=Path, required=True,
                    help="Benchmark directory or a directory of paired image/label PNGs")
    ev.add_argument("--split", default="compound",
                    help="Benchmark split: source, target_k, open or compound (default: compound)")
    ev.set_defaults(handler=cmd_eval)

    cmp_ = commands.add_parser("compare", parents=[common], help="Compare methods over seeds")
    cmp_.add_argument("--data", type=Path, help="Benchmark directory written by gen-data")
    cmp_.add_argument("--workers", type=int, default=1)
    cmp_.set_defaults(handler=cmd_compare)

    sw = commands.add_parser("sweep", parents=[common], help="Sweep a mixing hyperparameter")
    sw.add_argument("--axis", choices=SWEEP_AXES, required=True)
    sw.add_argument("--values", type=_json_list, help='JSON list, e.g. "[1, 2, 3]" or "[[2, 4], [4, 8]]"')
    sw.add_argument("--data", type=Path, help="Benchmark directory written by gen-data")
    sw.add_argument("--workers", type=int, default=1)
    sw.set_defaults(handler=cmd_sweep)

    dis = commands.add_parser("discrepancy", parents=[common], help="Estimate the risk bound discrepancy terms")
    dis.add_argument("--data", type=Path, help="Benchmark directory written by gen-data")
    dis.add_argument("--workers", type=int, default=1)
    dis.set_defaults(handler=cmd_discrepancy)

    reach = commands.add_parser("enumerate-reachable", parents=[common],
                                help="Compare the reachable outputs of scmix and classmix on a toy instance")
    reach.add_argument("--size", type=int, default=4, help="Image side (default: 4)")
    reach.add_argument("--classes", type=int, default=2, help="Number of classes (default: 2)")
    reach.add_argument("--targets", type=int, help="Target pool size, defaults to --n-c")
    reach.add_argument("--n-c", type=int, default=2, help="Targets fused by scmix (default: 2)")
    reach.add_argument("--grid-sizes", type=_int_list, default=(1, 2), help="Candidate cell counts (default: 1,2)")
    reach.set_defaults(handler=cmd_enumerate_reachable)
    return parser


def load_experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    """Configuration file (or defaults) with ``--seeds``, ``--methods`` and ``--out`` applied"""
    config = parse_config(args.config) if args.config else ExperimentConfig()
    changes: Dict[str, Any] = {}
    if args.seeds is not None:
        changes["seeds"] = list(args.seeds)
    if args.methods is not None:
        changes["methods"] = [m.value for m in args.methods]
    if args.out is not None:
        changes["output_dir"] = str(args.out)
    if args.seed is not None:
        if args.command == "gen-data":
            changes["benchmark"] = {**config.benchmark.model_dump(mode="json"), "seed": args.seed}
        else:
            changes["seed"] = args.seed
    return config.updated(**changes) if changes else config


def _output_dir(config: ExperimentConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _benchmark(args: argparse.Namespace, config: ExperimentConfig) -> CompoundBenchmark:
    if args.data is not None:
        logger.info("Loading benchmark from %s", args.data)
        return load_benchmark(args.data)
    return make_compound_benchmark(config.benchmark)


def _provenance(config: ExperimentConfig, **extra: Any) -> Dict[str, Any]:
    return {"config_hash": config_hash(config), "seed": config.seed, **extra}


def cmd_gen_data(args: argparse.Namespace, config: ExperimentConfig) -> int:
    out = _output_dir(config)
    benchmark = make_compound_benchmark(config.benchmark)
    write_benchmark(benchmark, out)
    write_json(out / "summary.json", {
        "config_hash": config_hash(config),
        "seed": config.benchmark.seed,
        "splits": {split.name: len(split) for split in benchmark.splits()},
    })
    logger.info("Wrote %d splits to %s", len(benchmark.splits()), out)
    return EXIT_OK


def _target_triples(args: argparse.Namespace, config: ExperimentConfig) -> List[TargetTriple]:
    images = [load_image_png(path) for path in args.targets]
    if args.model is not None:
        model = load_model(args.model)
        maps = [predict_probs(model, image) for image in images]
    else:
        if len(args.probs) != len(images):
            raise ConfigurationError("--probs", f"expected one file per target ({len(images)}), got {len(args.probs)}")
        maps = []
        for path in args.probs:
            tensor = read_tensor(path)
            if not isinstance(tensor, ProbabilityMap):
                raise TensorFormatError(f"{path} holds a {type(tensor).__name__}, expected a ProbabilityMap")
            maps.append(tensor)
    return [TargetTriple(image, pseudo_label(probs), confidence_weight(probs, config.trainer.threshold))
            for image, probs in zip(images, maps)]


def cmd_augment(args: argparse.Namespace, config: ExperimentConfig) -> int:
    out = _output_dir(config)
    targets = _target_triples(args, config)
    num_classes = targets[0].pseudo_labels.num_classes
    source = SourcePair.from_labels(load_image_png(args.source_image), load_label_png(args.source_label), num_classes)
    mixer = config.mixing.mixer
    if mixer is MixerKind.SCMIX and len(targets) != config.mixing.n_c:
        raise ConfigurationError("mixing.n_c", f"scmix fuses {config.mixing.n_c} targets, {len(targets)} were given")
    stream = RngStream(config.seed)
    sample = mix_sample(mixer, source, targets, config.mixing, stream)
    if args.post_augment:
        sample = MixedSample(post_augment(sample.image, stream, config.augment),
                             sample.labels, sample.weights, sample.provenance)
    save_panels(sample, out, args.scale)
    save_image_png(sample.image, out / "mixed_image.png")
    for name, tensor in (("image", sample.image), ("labels", sample.labels),
                         ("weights", sample.weights), ("provenance", sample.provenance)):
        write_tensor(out / f"mixed_{name}.scmt", tensor)
    write_json(out / "summary.json", _provenance(
        config,
        mixer=mixer.value,
        confidences=[t.confidence for t in targets],
        provenance_counts=sample.provenance_counts(len(targets)).tolist(),
        post_augment=bool(args.post_augment),
    ))
    logger.info("Wrote %s mixed sample to %s", mixer.value, out)
    return EXIT_OK


def cmd_train(args: argparse.Namespace, config: ExperimentConfig) -> int:
    out = _output_dir(config)
    benchmark = _benchmark(args, config)
    student, history = train(config.train_config(method=args.method), benchmark)
    write_csv(out / "history.csv", HISTORY_HEADER, history.rows())
    save_model(student, out / "model.json")
    final = history.final
    write_json(out / "summary.json", _provenance(
        config,
        method=None if args.method is None else args.method.value,
        iterations=len(history),
        compound_miou=None if final is None else final.compound.miou,
        open_miou=None if final is None else final.open.miou,
        o_plus_c=None if final is None else final.o_plus_c,
        subdomain_miou=None if final is None else [s.miou for s in final.subdomains],
    ))
    return EXIT_OK


def _eval_split(data: Path, name: str) -> Split:
    if not (data / MANIFEST).exists():
        return load_paired_pngs(data)
    benchmark = load_benchmark(data)
    if name == "compound":
        return benchmark.compound_split()
    for split in benchmark.splits():
        if split.name == name:
            return split
    names = ", ".join(["compound"] + [s.name for s in benchmark.splits()])
    raise ConfigurationError("--split", f"must be one of {names}, got {name}")


def cmd_eval(args: argparse.Namespace, config: ExperimentConfig) -> int:
    out = _output_dir(config)
    model = load_model(args.model)
    split = _eval_split(args.data, args.split)
    result = evaluate_miou(model, split)
    write_csv(out / "iou.csv", ["class", "iou"],
              [[c, iou] for c, iou in enumerate(result.per_class)] + [["mean", result.miou]])
    write_json(out / "summary.json", _provenance(
        config, split=split.name, samples=len(split), miou=result.miou, per_class_iou=result.as_row(),
    ))
    logger.info("%s mIoU %.4f over %d samples", split.name, result.miou, len(split))
    return EXIT_OK


def _write_comparison(out: Path, report: ComparisonReport, num_classes: int) -> None:
    write_csv(out / "comparison.csv", report.header(num_classes), report.table_rows())
    write_json(out / "comparison.json", report.summary())


def cmd_compare(args: argparse.Namespace, config: ExperimentConfig) -> int:
    out = _output_dir(config)
    benchmark = _benchmark(args, config)
    try:
        report = run_comparison(config, workers=args.workers, benchmark=benchmark)
    except ExperimentAbortedError as e:
        if e.partial is not None:
            _write_comparison(out, e.partial, benchmark.num_classes)
        raise
    _write_comparison(out, report, benchmark.num_classes)
    for entry in report.aggregates():
        logger.info("%s: compound %.4f ± %.4f, open %.4f ± %.4f", entry.method.value,
                    entry.compound_mean, entry.compound_std, entry.open_mean, entry.open_std)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace, config: ExperimentConfig) -> int:
    out = _output_dir(config)
    benchmark = _benchmark(args, config)
    table = run_sweep(config, args.axis, args.values, workers=args.workers, benchmark=benchmark)
    write_csv(out / "sweep.csv", table.HEADER, table.table_rows())
    write_json(out / "sweep.json", {
        "axis": table.axis,
        "config_hash": table.config_hash,
        "seeds": list(config.seeds),
        "rows": [dict(zip(table.HEADER, row)) for row in table.table_rows()],
    })
    return EXIT_OK


def cmd_discrepancy(args: argparse.Namespace, config: ExperimentConfig) -> int:
    out = _output_dir(config)
    source, subdomains, open_set = benchmark_sample_sets(_benchmark(args, config))
    report = ocda_bound_terms(source, subdomains, RngStream(config.seed), open_set=open_set, workers=args.workers)
    write_csv(out / "bound_terms.csv", ["i", "j", "estimate"], report.rows())
    write_json(out / "bound_summary.json", {**_provenance(config), **report.summary()})
    logger.info("%s: conventional %.4f, full %.4f", ESTIMATOR, report.conventional_sum, report.full_sum)
    return EXIT_OK


def cmd_enumerate_reachable(args: argparse.Namespace, config: ExperimentConfig) -> int:
    out = _output_dir(config)
    params = MixParams(n_c=args.n_c, grid_sizes=args.grid_sizes)
    result = reachability_check(params, args.size, args.classes, args.targets, seed=config.seed)
    summary = result.summary()
    write_json(out / "reachability.json", _provenance(
        config, size=args.size, classes=args.classes, n_c=params.n_c, grid_sizes=list(params.grid_sizes), **summary,
    ))
    logger.info("scmix reaches %d outputs, classmix %d, inclusion %s",
                summary["scmix_outputs"], summary["classmix_outputs"], summary["classmix_subset_of_scmix"])
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Runs one subcommand and returns its exit code"""
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        config = load_experiment_config(args)
        return args.handler(args, config)
    except (ValueError, OSError) as e:
        logger.error("%s", e)
        return EXIT_VALIDATION
    except RuntimeError as e:
        logger.error("%s", e)
        return EXIT_RUNTIME
