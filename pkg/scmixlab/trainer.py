"""Mean-teacher self-training over the linear segmentation model.

Iteration ``t`` draws everything from streams keyed by ``t``: batch element ``b`` uses
``RngStream(seed, iteration=t, lane=b)`` for its source index, then its target indices,
and hands the same stream to the mixer and to :func:`scmixlab.mixing.post_augment`,
which fork their own purposes from it.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ._types import LossKind, MixerKind
from .core import ImageTensor, ProbabilityMap
from .exceptions import DivergenceError, EmptySplitError
from .metrics import IoUResult, confusion_matrix, iou_from_confusion
from .mixing import AugmentParams, MixParams, SourcePair, TargetTriple, mix_sample, post_augment
from .model import (
    LinearSegModel,
    LossTerm,
    apply_step,
    confidence_weight,
    ema_update,
    featurize,
    loss_and_gradient,
    predict_labels,
    probabilities,
    pseudo_label,
)
from .rng import RngStream
from .synth import CompoundBenchmark, Split

logger = logging.getLogger(__name__)


class TrainerSettings(BaseModel):
    """Optimizer and self-training schedule

    ``iterations`` counts every step, the first ``pretrain`` of which train on the source only.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    learning_rate: float = Field(0.5, ge=0)
    iterations: int = Field(3000, ge=0)
    warmup: int = Field(150, ge=0)
    """Steps of linear learning rate warmup."""
    pretrain: int = Field(300, ge=0)
    batch_size: int = Field(2, ge=1)
    momentum: float = Field(0.999, ge=0, le=1)
    """EMA momentum ``m`` of the teacher."""
    threshold: float = Field(0.968, ge=0, le=1)
    """Confidence threshold ``τ``."""
    eval_interval: int = Field(500, ge=0)
    """Evaluate every this many steps, 0 evaluates after the last step only."""
    divergence_factor: float = Field(10.0, gt=1)


class TrainConfig(TrainerSettings):
    """Everything :func:`train` needs besides the benchmark"""
    mixing: MixParams = MixParams()
    augment: AugmentParams = AugmentParams()
    seed: int = Field(0, ge=0, lt=2**64)
    self_training: bool = True


@dataclass(frozen=True)
class LossRecord:
    """Losses of one step. ``target_confidence`` is the mean teacher confidence ``q`` over the
    target images of the step, ``None`` on source-only steps.
    """
    iteration: int
    source_ce: float
    target_wce: float
    learning_rate: float
    target_confidence: Optional[float] = None

    @property
    def total(self) -> float:
        return self.source_ce + self.target_wce


@dataclass(frozen=True)
class EvalRecord:
    """mIoU on the pooled seen subdomains, the open split and each seen subdomain"""
    iteration: int
    compound: IoUResult
    open: IoUResult
    subdomains: Tuple[IoUResult, ...]

    @property
    def o_plus_c(self) -> float:
        return (self.compound.miou + self.open.miou) / 2


@dataclass
class TrainingHistory:
    losses: List[LossRecord] = field(default_factory=list)
    evaluations: List[EvalRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.losses)

    @property
    def final(self) -> Optional[EvalRecord]:
        return self.evaluations[-1] if self.evaluations else None

    def rows(self) -> List[list]:
        """One row per step: iteration, losses, learning rate, target confidence, then the mIoU
        columns when the step was evaluated (blank otherwise)
        """
        scored = {e.iteration: e for e in self.evaluations}
        rows = []
        for record in self.losses:
            row = [record.iteration, record.source_ce, record.target_wce, record.learning_rate,
                   record.target_confidence]
            evaluation = scored.get(record.iteration)
            if evaluation is None:
                row += [None, None, None]
            else:
                row += [evaluation.compound.miou, evaluation.open.miou, evaluation.o_plus_c]
            rows.append(row)
        return rows


HISTORY_HEADER = ["iteration", "source_ce", "target_wce", "learning_rate", "target_confidence",
                  "compound_miou", "open_miou", "o_plus_c"]


@dataclass(frozen=True)
class PseudoLabelEvent:
    """Teacher inputs of one batch element, reported to the training observer"""
    iteration: int
    lane: int
    target_indices: Tuple[int, ...]
    images: Tuple[ImageTensor, ...]


Observer = Callable[[PseudoLabelEvent], None]


def _split_scores(model: LinearSegModel, split: Split) -> np.ndarray:
    matrix = np.zeros((model.num_classes, model.num_classes), dtype=np.int64)
    for scene in split:
        matrix += confusion_matrix(predict_labels(model, scene.image), scene.labels, model.num_classes)
    return matrix


def evaluate_benchmark(model: LinearSegModel, benchmark: CompoundBenchmark, iteration: int = -1) -> EvalRecord:
    """Scores the seen subdomains (separately and pooled) and the open split"""
    if not benchmark.targets or any(len(s) == 0 for s in benchmark.targets) or len(benchmark.open) == 0:
        raise EmptySplitError("Evaluation needs non-empty target and open splits")
    per_target = [_split_scores(model, split) for split in benchmark.targets]
    return EvalRecord(
        iteration=iteration,
        compound=iou_from_confusion(np.sum(per_target, axis=0)),
        open=iou_from_confusion(_split_scores(model, benchmark.open)),
        subdomains=tuple(iou_from_confusion(m) for m in per_target),
    )


def warmup_rate(config: TrainerSettings, iteration: int) -> float:
    """Learning rate at a step, ramping linearly over the first ``warmup`` steps"""
    if config.warmup == 0:
        return config.learning_rate
    return config.learning_rate * min(1.0, (iteration + 1) / config.warmup)


def _targets_per_sample(config: TrainConfig) -> int:
    return config.mixing.n_c if config.mixing.mixer is MixerKind.SCMIX else 1


class _Trainer:
    """State of one :func:`train` call"""
    def __init__(self, config: TrainConfig, benchmark: CompoundBenchmark, observer: Optional[Observer]):
        self.config = config
        self.benchmark = benchmark
        self.observer = observer
        num_classes = benchmark.num_classes
        if len(benchmark.source) == 0:
            raise EmptySplitError("Source split is empty")
        self.sources = [SourcePair.from_labels(s.image, s.labels, num_classes) for s in benchmark.source]
        self.source_features = [featurize(s.image) for s in self.sources]
        self.target_images = benchmark.target_images()
        if config.self_training and not self.target_images:
            raise EmptySplitError("Target pool is empty")
        self.target_features = [featurize(image) for image in self.target_images]
        self.student = LinearSegModel.zeros(num_classes)
        self.teacher = self.student.copy()
        self.history = TrainingHistory()
        self.initial_loss: Optional[float] = None

    def _teacher_triple(self, index: int) -> TargetTriple:
        probs = ProbabilityMap(probabilities(self.teacher, self.target_features[index]).astype(np.float32))
        return TargetTriple(self.target_images[index], pseudo_label(probs),
                            confidence_weight(probs, self.config.threshold))

    def _batch(self, iteration: int, self_training: bool) -> Tuple[List[LossTerm], List[float]]:
        """Loss terms of one step and the teacher confidence of every target image it drew"""
        config = self.config
        scale = 1.0 / config.batch_size
        terms = []
        confidences: List[float] = []
        for lane in range(config.batch_size):
            stream = RngStream(config.seed, iteration=iteration, lane=lane)
            src = stream.uniform_int(0, len(self.sources) - 1)
            source = self.sources[src]
            terms.append(LossTerm(self.source_features[src], source.one_hot, None, LossKind.SOURCE_CE, scale))
            if not self_training:
                continue
            indices = tuple(stream.uniform_int(0, len(self.target_images) - 1)
                            for _ in range(_targets_per_sample(config)))
            if self.observer is not None:
                self.observer(PseudoLabelEvent(iteration, lane, indices,
                                               tuple(self.target_images[i] for i in indices)))
            triples = [self._teacher_triple(i) for i in indices]
            confidences.extend(t.confidence for t in triples)
            mixed = mix_sample(config.mixing.mixer, source, triples, config.mixing, stream)
            image = post_augment(mixed.image, stream, config.augment)
            terms.append(LossTerm(featurize(image), mixed.labels, mixed.weights, LossKind.TARGET_WCE, scale))
        return terms, confidences

    def _evaluate(self, iteration: int) -> None:
        record = evaluate_benchmark(self.student, self.benchmark, iteration)
        previous = self.history.evaluations[-1].iteration if self.history.evaluations else -1
        self.history.evaluations.append(record)
        logger.info("Iteration %d: compound mIoU %.4f, open mIoU %.4f, O+C %.4f",
                    iteration, record.compound.miou, record.open.miou, record.o_plus_c)
        window = [r.target_confidence for r in self.history.losses
                  if r.iteration > previous and r.target_confidence is not None]
        if window:
            logger.info("Iterations %d-%d: mean target confidence %.4f", previous + 1, iteration, np.mean(window))

    def step(self, iteration: int) -> None:
        config = self.config
        self_training = config.self_training and iteration >= config.pretrain
        if self_training and iteration == config.pretrain:
            self.teacher = self.student.copy()
            logger.info("Source-only pretraining finished after %d iterations, starting self-training", iteration)
        terms, confidences = self._batch(iteration, self_training)
        losses, gradient = loss_and_gradient(self.student, terms)
        confidence = float(np.mean(confidences)) if confidences else None
        total = losses[LossKind.SOURCE_CE] + losses[LossKind.TARGET_WCE]
        if self.initial_loss is None:
            self.initial_loss = total
        elif total > config.divergence_factor * self.initial_loss:
            raise DivergenceError(iteration, total, self.initial_loss)
        rate = warmup_rate(config, iteration)
        self.student = apply_step(self.student, gradient, rate)
        if self_training:
            self.teacher = ema_update(self.teacher, self.student, config.momentum)
        self.history.losses.append(
            LossRecord(iteration, losses[LossKind.SOURCE_CE], losses[LossKind.TARGET_WCE], rate, confidence)
        )
        if confidence is None:
            logger.debug("Iteration %d: L_CE %.6f, L_WCE %.6f, lr %.5f",
                         iteration, losses[LossKind.SOURCE_CE], losses[LossKind.TARGET_WCE], rate)
        else:
            logger.debug("Iteration %d: L_CE %.6f, L_WCE %.6f, lr %.5f, mean target confidence %.4f",
                         iteration, losses[LossKind.SOURCE_CE], losses[LossKind.TARGET_WCE], rate, confidence)
        last = iteration == config.iterations - 1
        if last or (config.eval_interval and (iteration + 1) % config.eval_interval == 0):
            self._evaluate(iteration)


def train(config: TrainConfig, benchmark: CompoundBenchmark,
          observer: Optional[Observer] = None) -> Tuple[LinearSegModel, TrainingHistory]:
    """Trains a student from zero initialization

    Source-only steps come first; at the end of pretraining the teacher becomes a copy of
    the student and every later step adds the mixed-sample weighted loss and an EMA update
    of the teacher. Pseudo-labels come from the teacher on the raw target images.

    :param TrainConfig config:
    :param CompoundBenchmark benchmark:
    :param Optional[Observer] observer: Called with every :class:`PseudoLabelEvent`
    :raises DivergenceError: Total loss exceeded ``divergence_factor`` times the first loss
    :raises EmptySplitError: Source or target pool is empty
    :return Tuple[LinearSegModel, TrainingHistory]: Final student and its history
    """
    state = _Trainer(config, benchmark, observer)
    if config.iterations == 0:
        return state.student, state.history
    logger.info("Training %d iterations (%d source-only), mixer %s, seed %d",
                config.iterations, min(config.pretrain, config.iterations) if config.self_training else config.iterations,
                config.mixing.mixer.value if config.self_training else "none", config.seed)
    for iteration in range(config.iterations):
        state.step(iteration)
    return state.student, state.history
