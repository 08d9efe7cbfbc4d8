"""Fixed-size classifier-ready crops from segmentation outputs.

Whole objects are normalized to 224x224 and superpixel sub-components to
190x150 (width x height). Content is symmetrically padded with the fill
color up to the target aspect ratio first, then bilinearly resampled, so
the content's own aspect ratio is preserved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import DataError, ParameterError
from .isolate import WHITE_FILL
from .slic import SuperpixelMap

OBJECT_LEVEL = "object"
SUBCOMPONENT_LEVEL = "subcomponent"

# Sentinel segment id carried by whole-object crops.
OBJECT_SEGMENT_ID = -1

# (width, height) per level.
TARGET_SIZES = {
    OBJECT_LEVEL: (224, 224),
    SUBCOMPONENT_LEVEL: (190, 150),
}


@dataclass
class RegionCrop:
    """An extracted region with provenance.

    source_box is (x0, y0, x1, y1) in source-image coordinates with
    exclusive upper bounds.
    """

    pixels: np.ndarray
    source_box: tuple[int, int, int, int]
    segment_id: int
    level: str
    source_image_id: str

    def __post_init__(self):
        if self.level not in TARGET_SIZES:
            raise ParameterError(f"unknown region level {self.level!r}")
        tw, th = TARGET_SIZES[self.level]
        if self.pixels.shape[:2] != (th, tw):
            raise DataError(
                f"{self.level} crop must be {tw}x{th}, got "
                f"{self.pixels.shape[1]}x{self.pixels.shape[0]}"
            )
        x0, y0, x1, y1 = self.source_box
        if not (x1 > x0 and y1 > y0):
            raise DataError(f"degenerate source box {self.source_box}")

    @property
    def filename(self) -> str:
        return f"{self.source_image_id}_{self.level}_{self.segment_id}.png"


def pad_rescale(
    img: np.ndarray, target_w: int, target_h: int, fill: tuple[int, int, int] = WHITE_FILL
) -> np.ndarray:
    """Pad symmetrically to the target aspect ratio, then resample.

    Padding uses the fill color; the extra pixel of an odd margin goes to
    the bottom/right. Resampling is bilinear; when padding alone reaches
    the target size the image is returned as-is (exact identity).
    """
    if target_w < 1 or target_h < 1:
        raise ParameterError("target dimensions must be positive")
    if img.ndim != 3 or img.shape[2] != 3:
        raise ParameterError("expected an image of shape (H, W, 3)")
    h, w = img.shape[:2]
    if w * target_h >= h * target_w:
        pw = w
        ph = max(h, -(-w * target_h // target_w))
    else:
        ph = h
        pw = max(w, -(-h * target_w // target_h))
    top = (ph - h) // 2
    left = (pw - w) // 2
    canvas = np.empty((ph, pw, 3), dtype=np.uint8)
    canvas[:] = np.asarray(fill, dtype=np.uint8)
    canvas[top : top + h, left : left + w] = img
    if (pw, ph) == (target_w, target_h):
        return canvas
    resized = Image.fromarray(canvas, mode="RGB").resize(
        (target_w, target_h), resample=Image.Resampling.BILINEAR
    )
    return np.asarray(resized, dtype=np.uint8)


def extract_object_region(
    img: np.ndarray,
    mask: np.ndarray,
    image_id: str = "",
    fill: tuple[int, int, int] = WHITE_FILL,
) -> RegionCrop:
    """Crop the mask's tight bounding box and normalize it to 224x224.

    Non-member pixels inside the box are set to the fill color.
    """
    if img.shape[:2] != mask.shape:
        raise DataError("image and mask dimensions differ")
    ys, xs = np.nonzero(mask)
    if len(ys) == 0:
        raise DataError("empty mask: no object to extract")
    x0, x1 = int(xs.min()), int(xs.max()) + 1
    y0, y1 = int(ys.min()), int(ys.max()) + 1
    region = img[y0:y1, x0:x1].copy()
    region[~mask[y0:y1, x0:x1]] = fill
    tw, th = TARGET_SIZES[OBJECT_LEVEL]
    return RegionCrop(
        pixels=pad_rescale(region, tw, th, fill),
        source_box=(x0, y0, x1, y1),
        segment_id=OBJECT_SEGMENT_ID,
        level=OBJECT_LEVEL,
        source_image_id=image_id,
    )


def extract_subcomponent_regions(
    img: np.ndarray,
    spmap: SuperpixelMap,
    image_id: str = "",
    fill: tuple[int, int, int] = WHITE_FILL,
) -> list[RegionCrop]:
    """One normalized 190x150 crop per segment, in ascending segment id.

    Pixels inside a segment's bounding box but outside the segment are set
    to the fill color. Background-only maps yield an empty list.
    """
    if img.shape[:2] != spmap.labels.shape:
        raise DataError("image and label map dimensions differ")
    tw, th = TARGET_SIZES[SUBCOMPONENT_LEVEL]
    slices = ndimage.find_objects(spmap.labels + 1)
    crops = []
    for sid in range(spmap.num_segments):
        sl = slices[sid] if sid < len(slices) else None
        if sl is None:
            raise DataError(f"segment id {sid} has no pixels")
        region = img[sl].copy()
        region[spmap.labels[sl] != sid] = fill
        crops.append(
            RegionCrop(
                pixels=pad_rescale(region, tw, th, fill),
                source_box=(sl[1].start, sl[0].start, sl[1].stop, sl[0].stop),
                segment_id=sid,
                level=SUBCOMPONENT_LEVEL,
                source_image_id=image_id,
            )
        )
    return crops
