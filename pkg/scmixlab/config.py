"""Experiment configuration files.

Line oriented ``dotted.key = value`` text. ``#`` starts a comment, ``[section]`` prefixes the
keys that follow it, values are JSON literals and anything that does not parse as JSON is
taken as a bare string::

    seed = 7
    [trainer]
    momentum = 0.999
    [mixing]
    grid_sizes = [2, 4, 8]
    mixer = scmix

"""
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ._types import Method
from .exceptions import ConfigurationError
from .mixing import AugmentParams, MixParams
from .synth import BenchmarkConfig
from .trainer import TrainConfig, TrainerSettings

DEFAULT_SEEDS: Tuple[int, ...] = (1, 2, 3, 4, 5)
DEFAULT_METHODS: Tuple[Method, ...] = (Method.SOURCE_ONLY, Method.CLASSMIX_ST, Method.SCMIX_ST)


class ExperimentConfig(BaseModel):
    """Top level configuration of every subcommand"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    benchmark: BenchmarkConfig = BenchmarkConfig()
    trainer: TrainerSettings = TrainerSettings()
    mixing: MixParams = MixParams()
    augment: AugmentParams = AugmentParams()
    output_dir: str = "runs"
    seed: int = Field(0, ge=0, lt=2**64)
    """Training seed of single runs."""
    seeds: Tuple[int, ...] = Field(DEFAULT_SEEDS, min_length=1)
    """Seeds of multi-seed comparisons and sweeps."""
    methods: Tuple[Method, ...] = Field(DEFAULT_METHODS, min_length=1)

    def train_config(self, seed: Optional[int] = None, method: Optional[Method] = None) -> TrainConfig:
        """Trainer configuration for one run

        :param Optional[int] seed: defaults to :attr:`seed`
        :param Optional[Method] method: Overrides the mixer and self-training switch, defaults to
            self-training with the configured mixer
        :return TrainConfig:
        """
        mixing = self.mixing if method is None else self.mixing.model_copy(update={"mixer": method.mixer})
        return TrainConfig(
            **self.trainer.model_dump(),
            mixing=mixing,
            augment=self.augment,
            seed=self.seed if seed is None else seed,
            self_training=True if method is None else method.self_training,
        )

    def updated(self, **changes: Any) -> "ExperimentConfig":
        """Validated copy with top level fields replaced"""
        return validate_config({**self.model_dump(mode="json"), **_jsonable(changes)})


def _jsonable(changes: Dict[str, Any]) -> Dict[str, Any]:
    return {k: v.model_dump(mode="json") if isinstance(v, BaseModel) else v for k, v in changes.items()}


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _strip_comment(line: str) -> str:
    """Drops a ``#`` comment, leaving ``#`` inside double quoted strings alone"""
    quoted = escaped = False
    for index, char in enumerate(line):
        if escaped:
            escaped = False
        elif quoted and char == "\\":
            escaped = True
        elif char == '"':
            quoted = not quoted
        elif char == "#" and not quoted:
            return line[:index]
    return line


def _assign(tree: Dict[str, Any], key: str, value: Any) -> None:
    parts = key.split(".")
    node = tree
    for depth, part in enumerate(parts[:-1]):
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigurationError(".".join(parts[:depth + 1]), "is a value and cannot hold nested keys")
        node = child
    if parts[-1] in node:
        raise ConfigurationError(key, "is set more than once")
    node[parts[-1]] = value


def parse_config_text(text: str) -> ExperimentConfig:
    """Parses configuration text into a validated :class:`ExperimentConfig`

    :raises ConfigurationError: Malformed line, repeated or unknown key, or violated constraint
    """
    tree: Dict[str, Any] = {}
    section = ""
    for number, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigurationError(f"line {number}", f"expected 'key = value', got {raw.strip()!r}")
        _assign(tree, f"{section}.{key}" if section else key, _parse_value(value.strip()))
    return validate_config(tree)


def validate_config(tree: Dict[str, Any]) -> ExperimentConfig:
    """:raises ConfigurationError: Naming the dotted key of the first violation"""
    try:
        return ExperimentConfig.model_validate(tree)
    except ValidationError as e:
        error = e.errors()[0]
        key = ".".join(str(part) for part in error["loc"]) or "config"
        raise ConfigurationError(key, error["msg"]) from e


def parse_config(path: Union[str, Path]) -> ExperimentConfig:
    """Reads and validates a configuration file. Missing keys take their defaults."""
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def _flatten(prefix: str, value: Any, lines: List[str]) -> None:
    if isinstance(value, dict):
        for key in value:
            _flatten(f"{prefix}.{key}" if prefix else key, value[key], lines)
    else:
        lines.append(f"{prefix} = {json.dumps(value)}")


def emit_config(config: ExperimentConfig) -> str:
    """Every field of ``config``, defaults included, in the file format read by :func:`parse_config`"""
    payload = config.model_dump(mode="json")
    lines: List[str] = []
    sections = [k for k, v in payload.items() if isinstance(v, dict)]
    for key, value in payload.items():
        if key not in sections:
            lines.append(f"{key} = {json.dumps(value)}")
    for name in sections:
        lines.append("")
        lines.append(f"[{name}]")
        _flatten("", payload[name], lines)
    return "\n".join(lines) + "\n"
