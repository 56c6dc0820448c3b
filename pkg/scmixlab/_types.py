from typing import NamedTuple, Tuple
from enum import Enum, IntEnum


IGNORE = 255
"""Label value of pixels that carry no class. They contribute zero loss and are excluded from mIoU."""


class Coord(NamedTuple):
    x: float
    y: float


class Rect(NamedTuple):
    """Axis aligned pixel rectangle, half open on the bottom and right edges"""
    top: int
    left: int
    height: int
    width: int

    @property
    def bottom(self) -> int:
        return self.top + self.height

    @property
    def right(self) -> int:
        return self.left + self.width

    def is_empty(self) -> bool:
        return self.height <= 0 or self.width <= 0


class TensorKind(IntEnum):
    """Kind tag written after the ``SCMT`` magic bytes"""
    IMAGE = 1
    LABELS = 2
    ONE_HOT = 3
    WEIGHTS = 4
    INDEX_MAP = 5
    PROBABILITIES = 6


class PurposeTag(IntEnum):
    """Random stream consumers. Each consumer draws from its own stream so adding one never
    perturbs the draws of another.

    .. code-block:: python

        grid_stream = stream.fork(PurposeTag.GRID_DIMS)

    """
    GRID_DIMS = 1
    GRID_VALUES = 2
    CLASS_SUBSET = 3
    JITTER = 4
    BLUR = 5
    DATA_SAMPLING = 6
    SCENE = 7
    CUTMIX = 8
    DOMAIN_SPLIT = 9


class MixerKind(Enum):
    """Mixing strategy used to build the self-training sample"""
    SCMIX = "scmix"
    """Grid fusion of ``n_c`` targets followed by per-cell class mixing with the source."""
    CLASSMIX = "classmix"
    """Half of the source classes pasted onto one target image."""
    CUTMIX = "cutmix"
    """A random source rectangle pasted onto one target image."""
    NONE = "none"
    """The pseudo-labelled target image itself, no source pixels."""


class Method(Enum):
    """Training recipes compared by :func:`scmixlab.experiments.run_comparison`"""
    SOURCE_ONLY = "source-only"
    MT_ONLY = "mt-only"
    CUTMIX_ST = "cutmix-st"
    CLASSMIX_ST = "classmix-st"
    SCMIX_ST = "scmix-st"

    @property
    def self_training(self) -> bool:
        return self is not Method.SOURCE_ONLY

    @property
    def mixer(self) -> MixerKind:
        return {
            Method.SOURCE_ONLY: MixerKind.NONE,
            Method.MT_ONLY: MixerKind.NONE,
            Method.CUTMIX_ST: MixerKind.CUTMIX,
            Method.CLASSMIX_ST: MixerKind.CLASSMIX,
            Method.SCMIX_ST: MixerKind.SCMIX,
        }[self]


class ShapeKind(Enum):
    """Region shapes used by the scene generator, assigned to foreground classes in turn"""
    DISC = "disc"
    RECTANGLE = "rectangle"
    STRIPE = "stripe"
    TRIANGLE = "triangle"


class LossKind(Enum):
    SOURCE_CE = "source_ce"
    TARGET_WCE = "target_wce"


CLASS_PALETTE: Tuple[Tuple[int, int, int], ...] = (
    (140, 140, 140),
    (203, 109, 109),
    (109, 203, 109),
    (109, 109, 203),
    (171, 171, 78),
    (171, 78, 171),
    (78, 171, 171),
    (194, 140, 86),
)
"""Base 8-bit colors of each class. Class 0 is the grey background. All colors share the
channel sum 420, so classes differ in chroma only, and the first four stay unclipped under a
brightness shift of -0.25. Also used to colour label panels."""
