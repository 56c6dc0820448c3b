from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
from PIL import Image

from ._types import CLASS_PALETTE, IGNORE
from .core import ImageTensor, IndexMap, LabelMap, OneHotLabel, WeightMap
from .mixing import MixedSample

WEIGHT_LOW = (20, 24, 82)
WEIGHT_HIGH = (250, 220, 40)
PROVENANCE_COLORS: Tuple[Tuple[int, int, int], ...] = (
    (255, 255, 255),
    (228, 26, 28),
    (55, 126, 184),
    (77, 175, 74),
    (152, 78, 163),
    (255, 127, 0),
)
"""Source pixels are white, target ``k`` uses entry ``k`` (cycling after the last)."""


class _Component():
    def __init__(self):
        self._canvas: Image.Image

    def image(self) -> Image.Image:
        return self._canvas


class _Canvas(_Component):
    """Stitches equally sized panels left to right

    :param Tuple[int, int] panel: Panel size in pixels ``(width, height)``
    :param int count: Number of panels
    :param int gap: Pixels between panels, defaults to 2
    """
    def __init__(self, panel: Tuple[int, int], count: int, gap: int = 2):
        self.panel = panel
        self.count = count
        self.gap = gap
        self._canvas = Image.new("RGB", self.size(), "black")

    def size(self) -> Tuple[int, int]:
        """Calculates the full canvas size

        :return Tuple[int, int]: x,y tuple
        """
        width, height = self.panel
        return (width * self.count + self.gap * (self.count - 1), height)

    def add_panel(self, index: int, panel: Image.Image) -> None:
        self._canvas.paste(panel, (index * (self.panel[0] + self.gap), 0))


class _Panel(_Component):
    """RGB array shown at ``scale`` times its size with nearest-neighbour upsampling"""
    def __init__(self, rgb: np.ndarray, scale: int):
        super().__init__()
        height, width = rgb.shape[:2]
        img = Image.fromarray(np.ascontiguousarray(rgb, dtype=np.uint8))
        self._canvas = img.resize((width * scale, height * scale), Image.Resampling.NEAREST)


class _ImagePanel(_Panel):
    def __init__(self, image: ImageTensor, scale: int):
        super().__init__(image.to_uint8(), scale)


class _LabelPanel(_Panel):
    """Class colours from the palette, ignore pixels black"""
    def __init__(self, labels: Union[LabelMap, OneHotLabel], scale: int):
        if isinstance(labels, OneHotLabel):
            labels = labels.to_label_map()
        palette = np.zeros((256, 3), dtype=np.uint8)
        palette[:len(CLASS_PALETTE)] = CLASS_PALETTE
        palette[IGNORE] = (0, 0, 0)
        super().__init__(palette[labels.data], scale)


class _WeightPanel(_Panel):
    """Linear colour ramp from :data:`WEIGHT_LOW` at 0 to :data:`WEIGHT_HIGH` at 1"""
    def __init__(self, weights: WeightMap, scale: int):
        w = weights.data.astype(np.float64)[..., None]
        rgb = np.round((1.0 - w) * np.array(WEIGHT_LOW) + w * np.array(WEIGHT_HIGH))
        super().__init__(rgb, scale)


class _ProvenancePanel(_Panel):
    def __init__(self, provenance: IndexMap, scale: int):
        colors = np.array(PROVENANCE_COLORS, dtype=np.uint8)
        data = provenance.data
        index = np.where(data == 0, 0, (data - 1) % (len(colors) - 1) + 1)
        super().__init__(colors[index], scale)


PANEL_NAMES = ("image", "labels", "weights", "provenance")


def mixed_sample_panels(sample: MixedSample, scale: int = 4) -> Dict[str, Image.Image]:
    """Image, label colormap, weight heatmap and provenance map of a mixed sample

    :param MixedSample sample:
    :param int scale: Integer upsampling factor, defaults to 4
    :return Dict[str, Image.Image]: Panels keyed by :data:`PANEL_NAMES`
    """
    if scale < 1:
        raise ValueError(f"Panel scale must be at least 1, got {scale}")
    return {
        "image": _ImagePanel(sample.image, scale).image(),
        "labels": _LabelPanel(sample.labels, scale).image(),
        "weights": _WeightPanel(sample.weights, scale).image(),
        "provenance": _ProvenancePanel(sample.provenance, scale).image(),
    }


def render_panels(sample: MixedSample, scale: int = 4, gap: int = 2) -> Image.Image:
    """All panels side by side in :data:`PANEL_NAMES` order"""
    panels = mixed_sample_panels(sample, scale)
    canvas = _Canvas(panels["image"].size, len(PANEL_NAMES), gap)
    for index, name in enumerate(PANEL_NAMES):
        canvas.add_panel(index, panels[name])
    return canvas.image()


def save_panels(sample: MixedSample, directory: Union[str, Path], scale: int = 4) -> List[Path]:
    """Writes ``<name>.png`` per panel plus the stitched ``panels.png``

    :return List[Path]: Written files
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, panel in mixed_sample_panels(sample, scale).items():
        path = directory / f"{name}.png"
        panel.save(path, format="PNG")
        written.append(path)
    path = directory / "panels.png"
    render_panels(sample, scale).save(path, format="PNG")
    written.append(path)
    return written
