from typing import List
from math import cos, sin

import numpy as np

from ._types import Coord, Rect


def cell_boundaries(count: int, length: int) -> List[int]:
    """Boundaries of ``count`` cells tiling ``length`` pixels, ``round(a * length / count)``
    for ``a = 0..count`` with halves rounded up, so cell sizes differ by at most one pixel

    :param int count: Number of cells, ``1 <= count <= length``
    :param int length: Image extent in pixels
    :return List[int]: ``count + 1`` increasing boundaries from 0 to ``length``
    """
    if not 1 <= count <= length:
        raise ValueError(f"Cannot split {length} pixels into {count} cells")
    return [(2 * a * length + count) // (2 * count) for a in range(count + 1)]


def cell_sizes(count: int, length: int) -> List[int]:
    bounds = cell_boundaries(count, length)
    return [b - a for a, b in zip(bounds, bounds[1:])]


def expand_cells(values: np.ndarray, height: int, width: int) -> np.ndarray:
    """Broadcasts a ``(g_v, g_h)`` array of per-cell values to a full ``(height, width)`` map"""
    rows, cols = values.shape
    return np.repeat(np.repeat(values, cell_sizes(rows, height), axis=0), cell_sizes(cols, width), axis=1)


def rotate_around_point(point: Coord, radians: float, origin: Coord) -> Coord:
    """Rotates point around origin by radians

    :param Coord point:
    :param float radians:
    :param Coord origin:
    :return Coord:
    """
    x, y = point
    ox, oy = origin
    qx = ox + cos(radians) * (x - ox) + sin(radians) * (y - oy)
    qy = oy + -sin(radians) * (x - ox) + cos(radians) * (y - oy)
    return Coord(qx, qy)


def band_polygon(center: Coord, length: float, thickness: float, radians: float) -> List[Coord]:
    """Corners of a rotated band (long thin rectangle) centred on ``center``

    :param Coord center:
    :param float length: Extent along the band axis
    :param float thickness: Extent across the band axis
    :param float radians: Rotation of the band axis
    :return List[Coord]:
    """
    cx, cy = center
    hl, ht = length / 2, thickness / 2
    corners = [Coord(cx - hl, cy - ht), Coord(cx + hl, cy - ht), Coord(cx + hl, cy + ht), Coord(cx - hl, cy + ht)]
    return [rotate_around_point(c, radians, center) for c in corners]


def triangle_polygon(center: Coord, radius: float, radians: float) -> List[Coord]:
    """Equilateral triangle inscribed in a circle of ``radius`` around ``center``"""
    apex = Coord(center.x, center.y - radius)
    return [rotate_around_point(apex, radians + k * 2.0943951023931953, center) for k in range(3)]


def rect_mask(height: int, width: int, rect: Rect) -> np.ndarray:
    """Boolean indicator of ``rect`` clipped to a ``(height, width)`` grid"""
    mask = np.zeros((height, width), dtype=bool)
    mask[max(rect.top, 0):max(rect.bottom, 0), max(rect.left, 0):max(rect.right, 0)] = True
    return mask
