import pytest

from scmixlab._types import Method, MixerKind
from scmixlab.config import ExperimentConfig, emit_config, parse_config, parse_config_text
from scmixlab.exceptions import ConfigurationError
from scmixlab.utils import config_hash


def test_empty_text_gives_defaults():
    assert parse_config_text("") == ExperimentConfig()
    assert parse_config_text("# nothing here\n\n") == ExperimentConfig()


def test_sections_and_dotted_keys():
    config = parse_config_text(
        "seed = 7  # top level\n"
        "seeds = [3, 4]\n"
        "[trainer]\n"
        "iterations = 20\n"
        "[mixing]\n"
        "grid_sizes = [2, 4]\n"
        "mixer = cutmix\n"
        "[benchmark]\n"
        "source.noise_sigma = 0.02\n"
    )
    assert config.seed == 7
    assert config.seeds == (3, 4)
    assert config.trainer.iterations == 20
    assert config.mixing.grid_sizes == (2, 4)
    assert config.mixing.mixer is MixerKind.CUTMIX
    assert config.benchmark.source.noise_sigma == 0.02


def test_dotted_key_without_section():
    assert parse_config_text("trainer.momentum = 0.99").trainer.momentum == 0.99


@pytest.mark.parametrize("text,key", [
    ("trainer.momentum = 1.5", "trainer.momentum"),
    ("[mixing]\nn_c = 0", "mixing.n_c"),
    ("bogus = 1", "bogus"),
    ("[trainer]\nthreshold = \"high\"", "trainer.threshold"),
])
def test_violation_names_key(text, key):
    with pytest.raises(ConfigurationError) as e:
        parse_config_text(text)
    assert e.value.key == key


def test_repeated_key():
    with pytest.raises(ConfigurationError, match="more than once"):
        parse_config_text("seed = 1\nseed = 2")


def test_malformed_line():
    with pytest.raises(ConfigurationError, match="line 2"):
        parse_config_text("seed = 1\njust words")


def test_value_cannot_hold_keys():
    with pytest.raises(ConfigurationError):
        parse_config_text("seed = 1\nseed.x = 2")


def test_open_domain_inside_hull():
    text = "[benchmark]\nopen_domain = {\"brightness_shift\": -0.1, \"hue_rotation\": 20.0, \"noise_sigma\": 0.008}"
    with pytest.raises(ConfigurationError, match="convex hull"):
        parse_config_text(text)


def test_emit_then_parse():
    config = parse_config_text("seed = 11\nmethods = [\"scmix-st\"]\n[mixing]\nn_c = 2\n[augment]\nblur_prob = 0.0")
    emitted = emit_config(config)
    assert parse_config_text(emitted) == config
    assert "[trainer]" in emitted and "momentum = 0.999" in emitted


def test_hash_inside_string_is_kept():
    config = ExperimentConfig(output_dir="runs#2")
    assert parse_config_text(emit_config(config)) == config


@pytest.mark.parametrize("line,expected", [
    ('output_dir = "runs#2"  # trailing note', "runs#2"),
    ('output_dir = "a\\"#b"', 'a"#b'),
    ("output_dir = plain # note", "plain"),
])
def test_comment_after_string(line, expected):
    assert parse_config_text(line).output_dir == expected


def test_parse_file(tmp_path):
    path = tmp_path / "lab.cfg"
    path.write_text("[trainer]\npretrain = 5\n", encoding="utf-8")
    assert parse_config(path).trainer.pretrain == 5


def test_train_config_for_method():
    config = ExperimentConfig()
    source_only = config.train_config(seed=9, method=Method.SOURCE_ONLY)
    assert source_only.seed == 9
    assert not source_only.self_training
    classmix = config.train_config(method=Method.CLASSMIX_ST)
    assert classmix.self_training
    assert classmix.mixing.mixer is MixerKind.CLASSMIX
    assert classmix.seed == config.seed
    assert classmix.momentum == config.trainer.momentum


def test_updated_validates():
    config = ExperimentConfig()
    assert config.updated(seed=4).seed == 4
    with pytest.raises(ConfigurationError):
        config.updated(seeds=[])


def test_hash_follows_content():
    assert config_hash(ExperimentConfig()) == config_hash(parse_config_text(""))
    assert config_hash(ExperimentConfig()) != config_hash(parse_config_text("seed = 1"))
    assert len(config_hash(ExperimentConfig())) == 16
