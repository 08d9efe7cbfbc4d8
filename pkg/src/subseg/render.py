"""Contour overlays: segment boundaries and anomaly/benign coloring."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy import ndimage

from .errors import DataError, ParameterError
from .slic import BACKGROUND, SuperpixelMap

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class OverlaySpec:
    contour_thickness: int = 2
    segment_contour: tuple[int, int, int] = (255, 105, 180)  # pink
    anomaly: tuple[int, int, int] = (255, 0, 0)
    benign: tuple[int, int, int] = (0, 255, 0)

    def __post_init__(self):
        if self.contour_thickness < 1:
            raise ParameterError("contour_thickness must be at least 1")


def _neighbor_diff_masks(labels: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """(differs, neighbor_labels) per direction, aligned to each pixel."""
    h, w = labels.shape
    out = []
    for dy, dx in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        neighbor = np.full((h, w), BACKGROUND, dtype=labels.dtype)
        src = neighbor[max(dy, 0) : h + min(dy, 0), max(dx, 0) : w + min(dx, 0)]
        src[...] = labels[max(-dy, 0) : h + min(-dy, 0), max(-dx, 0) : w + min(-dx, 0)]
        differs = np.zeros((h, w), dtype=bool)
        inb = np.zeros((h, w), dtype=bool)
        inb[max(dy, 0) : h + min(dy, 0), max(dx, 0) : w + min(dx, 0)] = True
        differs[inb] = neighbor[inb] != labels[inb]
        out.append((differs, neighbor))
    return out


def boundary_mask(labels: np.ndarray) -> np.ndarray:
    """Non-background pixels with an in-bounds 4-neighbor of another label.

    Image borders are not boundaries: neighbors outside the frame do not
    count. Adjacent labels paint both sides, so the base band between two
    segments is two pixels wide (the default thickness).
    """
    differs = np.zeros(labels.shape, dtype=bool)
    for d, _ in _neighbor_diff_masks(labels):
        differs |= d
    return differs & (labels != BACKGROUND)


def _thicken(mask: np.ndarray, thickness: int) -> np.ndarray:
    # The base band is already 2 px wide; each dilation widens it by 2.
    steps = -(-thickness // 2) - 1
    if steps <= 0 or not mask.any():
        return mask
    return ndimage.binary_dilation(mask, structure=_CROSS, iterations=steps)


def draw_segment_contours(
    img: np.ndarray, spmap: SuperpixelMap, spec: OverlaySpec = OverlaySpec()
) -> np.ndarray:
    """Paint segment boundary pixels; everything else is untouched."""
    if img.shape[:2] != spmap.labels.shape:
        raise DataError("image and label map dimensions differ")
    painted = _thicken(boundary_mask(spmap.labels), spec.contour_thickness)
    out = img.copy()
    out[painted] = spec.segment_contour
    return out


def draw_labeled_contours(
    img: np.ndarray,
    spmap: SuperpixelMap,
    labels_by_segment: Mapping[int, str],
    spec: OverlaySpec = OverlaySpec(),
) -> np.ndarray:
    """Color segment boundaries by class: anomaly red, benign green.

    Where the boundaries of an anomalous and a benign segment meet, the
    anomaly color wins on both sides.
    """
    if img.shape[:2] != spmap.labels.shape:
        raise DataError("image and label map dimensions differ")
    labels = spmap.labels
    present = np.unique(labels)
    present = present[present != BACKGROUND]
    for sid in present:
        if int(sid) not in labels_by_segment:
            raise DataError(f"no class label for segment id {int(sid)}")
    anomalous = np.zeros(spmap.num_segments, dtype=bool)
    for sid, cls in labels_by_segment.items():
        if 0 <= sid < spmap.num_segments:
            anomalous[sid] = cls == "anomaly"

    base = boundary_mask(labels)
    fg = labels != BACKGROUND
    own_anomalous = np.zeros(labels.shape, dtype=bool)
    own_anomalous[fg] = anomalous[labels[fg]]
    near_anomalous = own_anomalous.copy()
    for differs, neighbor in _neighbor_diff_masks(labels):
        n_anom = np.zeros(labels.shape, dtype=bool)
        nfg = neighbor != BACKGROUND
        n_anom[nfg] = anomalous[neighbor[nfg]]
        near_anomalous |= differs & n_anom

    red = _thicken(base & near_anomalous, spec.contour_thickness)
    green = _thicken(base & ~near_anomalous, spec.contour_thickness)
    out = img.copy()
    out[green] = spec.benign
    out[red] = spec.anomaly
    return out
