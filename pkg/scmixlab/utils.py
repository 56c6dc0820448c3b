import csv
import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence, Union

from pydantic import BaseModel

PathLike = Union[str, Path]


def canonical_json(payload: Any) -> str:
    """Compact JSON with sorted keys, used for hashing"""
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json")
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def config_hash(config: Union[BaseModel, Mapping[str, Any]]) -> str:
    """First 16 hex characters of the sha256 of the config's canonical JSON

    :param config: Validated pydantic config or a plain mapping
    :return str:
    """
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()[:16]


def write_json(path: PathLike, payload: Any) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def read_json(path: PathLike) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """Writes a CSV table with ``\\n`` line endings. Floats use ``repr`` so reruns are byte identical.

    :param path:
    :param Sequence[str] header:
    :param Iterable[Sequence[Any]] rows:
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _cell(value: Any) -> Any:
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return value
