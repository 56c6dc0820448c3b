import logging
from math import log

import numpy as np
import pytest

from scmixlab._types import LossKind, MixerKind
from scmixlab.exceptions import DivergenceError, EmptySplitError
from scmixlab.mixing import MixParams
from scmixlab.model import LinearSegModel, ModelGradient
from scmixlab.synth import BenchmarkConfig, CompoundBenchmark, Split, make_compound_benchmark
from scmixlab.trainer import (
    HISTORY_HEADER,
    TrainConfig,
    TrainerSettings,
    evaluate_benchmark,
    train,
    warmup_rate,
)
import scmixlab.trainer


@pytest.fixture(scope="module")
def bench():
    return make_compound_benchmark(BenchmarkConfig(height=16, width=16, samples_per_split=4, seed=2))


def small_config(**kwargs):
    settings = dict(iterations=10, pretrain=4, warmup=2, eval_interval=5, mixing=MixParams(n_c=2), seed=3)
    settings.update(kwargs)
    return TrainConfig(**settings)


def test_zero_iterations(bench):
    model, history = train(small_config(iterations=0), bench)
    assert model == LinearSegModel.zeros(bench.num_classes)
    assert len(history) == 0
    assert history.final is None


def test_first_loss_is_uniform(bench):
    _, history = train(small_config(iterations=1), bench)
    assert history.losses[0].source_ce == pytest.approx(log(bench.num_classes))
    assert history.losses[0].target_wce == 0.0


def test_same_seed_same_run(bench):
    first = train(small_config(), bench)
    second = train(small_config(), bench)
    assert first[0] == second[0]
    assert first[1].rows() == second[1].rows()


def test_seed_changes_run(bench):
    assert train(small_config(seed=3), bench)[0] != train(small_config(seed=4), bench)[0]


def test_history_layout(bench):
    _, history = train(small_config(), bench)
    rows = history.rows()
    assert len(rows) == 10
    assert all(len(row) == len(HISTORY_HEADER) for row in rows)
    assert [e.iteration for e in history.evaluations] == [4, 9]
    assert rows[4][5] is not None and rows[9][5] is not None
    assert rows[5][5:] == [None, None, None]
    assert rows[0][4] is None and rows[5][4] is not None
    assert history.final.o_plus_c == pytest.approx((history.final.compound.miou + history.final.open.miou) / 2)


@pytest.mark.parametrize("interval,expected", [(0, [9]), (4, [3, 7, 9]), (10, [9])])
def test_evaluation_schedule(bench, interval, expected):
    _, history = train(small_config(eval_interval=interval), bench)
    assert [e.iteration for e in history.evaluations] == expected


def test_source_only_has_no_target_loss(bench):
    _, history = train(small_config(self_training=False), bench)
    assert all(record.target_wce == 0.0 for record in history.losses)


def test_pretraining_precedes_self_training(bench):
    _, history = train(small_config(threshold=0.0), bench)
    assert all(record.target_wce == 0.0 for record in history.losses[:4])
    assert all(record.target_wce > 0.0 for record in history.losses[4:])


def test_teacher_sees_raw_target_images(bench):
    events = []
    train(small_config(), bench, observer=events.append)
    pool = bench.target_images()
    assert len(events) == (10 - 4) * 2
    for event in events:
        assert event.iteration >= 4
        assert len(event.target_indices) == 2
        for index, image in zip(event.target_indices, event.images):
            assert image == pool[index]


@pytest.mark.parametrize("mixer", list(MixerKind))
def test_every_mixer_trains(bench, mixer):
    model, history = train(small_config(mixing=MixParams(n_c=2, mixer=mixer)), bench)
    assert len(history) == 10
    assert np.all(np.isfinite(model.weights))


def test_learning_rate_warmup():
    settings = TrainerSettings(learning_rate=0.1, warmup=10)
    assert warmup_rate(settings, 0) == pytest.approx(0.01)
    assert warmup_rate(settings, 9) == pytest.approx(0.1)
    assert warmup_rate(settings, 50) == pytest.approx(0.1)
    assert warmup_rate(TrainerSettings(learning_rate=0.1, warmup=0), 0) == 0.1


def test_recorded_learning_rates(bench):
    _, history = train(small_config(warmup=2, learning_rate=0.2), bench)
    assert [r.learning_rate for r in history.losses[:3]] == pytest.approx([0.1, 0.2, 0.2])


@pytest.mark.parametrize("threshold,expected", [(0.0, 1.0), (1.0, 0.0)])
def test_target_confidence_recorded(bench, threshold, expected):
    _, history = train(small_config(threshold=threshold), bench)
    assert all(r.target_confidence is None for r in history.losses[:4])
    assert all(r.target_confidence == expected for r in history.losses[4:])


def test_target_confidence_logged(bench, caplog):
    with caplog.at_level(logging.DEBUG, logger="scmixlab.trainer"):
        train(small_config(), bench)
    assert "mean target confidence" in caplog.text


def test_default_schedule_hands_over_confident_teacher(bench):
    defaults = TrainerSettings()
    config = small_config(learning_rate=defaults.learning_rate, warmup=defaults.warmup, pretrain=defaults.pretrain,
                          iterations=defaults.pretrain + 10, eval_interval=0)
    _, history = train(config, bench)
    confidences = [r.target_confidence for r in history.losses[defaults.pretrain:]]
    assert np.mean(confidences) > 0.0


def test_divergence_guard(bench, monkeypatch):
    losses = iter([1.0, 1.5, 50.0])

    def fake_loss(model, terms):
        zero = ModelGradient(np.zeros_like(model.weights), np.zeros_like(model.bias))
        return {LossKind.SOURCE_CE: next(losses), LossKind.TARGET_WCE: 0.0}, zero

    monkeypatch.setattr(scmixlab.trainer, "loss_and_gradient", fake_loss)
    with pytest.raises(DivergenceError, match="iteration 2"):
        train(small_config(), bench)


def test_empty_source(bench):
    empty = CompoundBenchmark(bench.config, Split("source", 0, ()), bench.targets, bench.open)
    with pytest.raises(EmptySplitError):
        train(small_config(), empty)


def test_evaluate_needs_open_split(bench):
    empty = CompoundBenchmark(bench.config, bench.source, bench.targets, Split("open", 4, ()))
    with pytest.raises(EmptySplitError):
        evaluate_benchmark(LinearSegModel.zeros(bench.num_classes), empty)


def test_evaluation_covers_subdomains(bench):
    record = evaluate_benchmark(LinearSegModel.zeros(bench.num_classes), bench, iteration=7)
    assert record.iteration == 7
    assert len(record.subdomains) == len(bench.targets)
