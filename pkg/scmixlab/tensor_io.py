"""Binary tensor codec and PNG import/export.

Tensor layout: magic ``b"SCMT"``, u8 kind tag, u32 H, u32 W, u32 C, then a little-endian
row-major payload (f32 for images, weights, one-hot labels and probabilities, u16 for
label and index maps).
"""
import struct
from pathlib import Path
from typing import Dict, Type, Union

import numpy as np
from PIL import Image

from ._types import CLASS_PALETTE, IGNORE, TensorKind
from .core import ImageTensor, IndexMap, LabelMap, OneHotLabel, ProbabilityMap, WeightMap
from .exceptions import TensorFormatError

MAGIC = b"SCMT"
_HEADER = struct.Struct("<4sBIII")

Grid = Union[ImageTensor, LabelMap, OneHotLabel, WeightMap, IndexMap, ProbabilityMap]

_KINDS: Dict[Type, TensorKind] = {
    ImageTensor: TensorKind.IMAGE,
    LabelMap: TensorKind.LABELS,
    OneHotLabel: TensorKind.ONE_HOT,
    WeightMap: TensorKind.WEIGHTS,
    IndexMap: TensorKind.INDEX_MAP,
    ProbabilityMap: TensorKind.PROBABILITIES,
}
_TYPES = {kind: cls for cls, kind in _KINDS.items()}
_INTEGER_KINDS = (TensorKind.LABELS, TensorKind.INDEX_MAP)
_PLANE_KINDS = (TensorKind.LABELS, TensorKind.INDEX_MAP, TensorKind.WEIGHTS)


def _check_channels(kind: TensorKind, channels: int) -> None:
    if kind in _PLANE_KINDS:
        valid = channels == 1
    elif kind == TensorKind.IMAGE:
        valid = channels == 3
    else:
        valid = channels >= 1
    if not valid:
        raise TensorFormatError(f"Channel count {channels} is invalid for a {kind.name.lower()} tensor")


def _payload_dtype(kind: TensorKind) -> np.dtype:
    return np.dtype("<u2") if kind in _INTEGER_KINDS else np.dtype("<f4")


def serialize_tensor(tensor: Grid) -> bytes:
    """Encodes any grid type into the SCMT byte format

    :param Grid tensor:
    :return bytes:
    """
    try:
        kind = _KINDS[type(tensor)]
    except KeyError:
        raise TypeError(f"Cannot serialize {type(tensor).__name__}")
    data = tensor.data
    height, width = data.shape[:2]
    channels = data.shape[2] if data.ndim == 3 else 1
    payload = np.ascontiguousarray(data, dtype=_payload_dtype(kind)).tobytes()
    return _HEADER.pack(MAGIC, int(kind), height, width, channels) + payload


def deserialize_tensor(blob: bytes) -> Grid:
    """Decodes bytes produced by :func:`serialize_tensor`

    :param bytes blob:
    :raises TensorFormatError: Magic mismatch, unknown kind, channel count invalid for the kind, or
        payload of the wrong length
    :return Grid:
    """
    if len(blob) < _HEADER.size:
        raise TensorFormatError(f"Truncated header: {len(blob)} bytes")
    magic, kind_tag, height, width, channels = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise TensorFormatError(f"Bad magic bytes {magic!r}, expected {MAGIC!r}")
    try:
        kind = TensorKind(kind_tag)
    except ValueError:
        raise TensorFormatError(f"Unknown tensor kind {kind_tag}")
    _check_channels(kind, channels)
    dtype = _payload_dtype(kind)
    expected = height * width * channels * dtype.itemsize
    payload = blob[_HEADER.size:]
    if len(payload) != expected:
        raise TensorFormatError(f"Payload is {len(payload)} bytes, header implies {expected}")
    array = np.frombuffer(payload, dtype=dtype)
    if kind in _INTEGER_KINDS:
        array = array.reshape(height, width).astype(np.int64)
    elif kind == TensorKind.WEIGHTS:
        array = array.reshape(height, width).astype(np.float32)
    else:
        array = array.reshape(height, width, channels).astype(np.float32)
    try:
        return _TYPES[kind](array)
    except ValueError as e:
        raise TensorFormatError(f"Payload does not form a valid {kind.name.lower()} tensor: {e}")


def write_tensor(path: Union[str, Path], tensor: Grid) -> None:
    Path(path).write_bytes(serialize_tensor(tensor))


def read_tensor(path: Union[str, Path]) -> Grid:
    return deserialize_tensor(Path(path).read_bytes())


def _label_palette() -> list:
    palette = [0] * (256 * 3)
    for index, color in enumerate(CLASS_PALETTE):
        palette[index * 3:index * 3 + 3] = color
    palette[IGNORE * 3:IGNORE * 3 + 3] = (0, 0, 0)
    return palette


def save_image_png(image: ImageTensor, path: Union[str, Path]) -> None:
    """Writes an 8-bit RGB PNG (values rounded from ``v * 255``)"""
    Image.fromarray(image.to_uint8()).save(path, format="PNG")


def load_image_png(path: Union[str, Path]) -> ImageTensor:
    with Image.open(path) as img:
        return ImageTensor.from_uint8(np.asarray(img.convert("RGB")))


def save_label_png(labels: LabelMap, path: Union[str, Path]) -> None:
    """Writes a paletted PNG whose pixel indices are the class ids"""
    height, width = labels.shape
    img = Image.frombytes("P", (width, height), labels.data.astype(np.uint8).tobytes())
    img.putpalette(_label_palette())
    img.save(path, format="PNG")


def load_label_png(path: Union[str, Path]) -> LabelMap:
    """Reads class ids from a paletted (or single channel) PNG"""
    with Image.open(path) as img:
        if img.mode not in ("P", "L"):
            raise TensorFormatError(f"Label PNG {path} has mode {img.mode}, expected P or L")
        return LabelMap(np.asarray(img).astype(np.int64))
