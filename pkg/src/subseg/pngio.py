"""PNG reading/writing helpers.

8-bit RGB PNG is the only supported raster format for imagery (an alpha
channel is dropped if present); masks are 8-bit grayscale; label maps are
16-bit grayscale.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from .errors import DataError


def load_rgb(path: str | os.PathLike) -> np.ndarray:
    """Load an 8-bit RGB PNG as a (H, W, 3) uint8 array."""
    with Image.open(path) as im:
        if im.mode == "RGBA":
            im = im.convert("RGB")
        if im.mode != "RGB":
            raise DataError(f"{path}: expected an 8-bit RGB image, got mode {im.mode!r}")
        return np.asarray(im, dtype=np.uint8).copy()


def save_rgb(path: str | os.PathLike, img: np.ndarray) -> None:
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise DataError("expected a (H, W, 3) uint8 array")
    Image.fromarray(img, mode="RGB").save(path, format="PNG")


def load_gray(path: str | os.PathLike) -> np.ndarray:
    """Load an 8-bit grayscale PNG as a (H, W) uint8 array."""
    with Image.open(path) as im:
        if im.mode != "L":
            raise DataError(f"{path}: expected an 8-bit grayscale image, got mode {im.mode!r}")
        return np.asarray(im, dtype=np.uint8).copy()


def save_gray(path: str | os.PathLike, img: np.ndarray) -> None:
    if img.ndim != 2 or img.dtype != np.uint8:
        raise DataError("expected a (H, W) uint8 array")
    Image.fromarray(img, mode="L").save(path, format="PNG")


def load_gray16(path: str | os.PathLike) -> np.ndarray:
    """Load a 16-bit grayscale PNG as a (H, W) uint16 array."""
    with Image.open(path) as im:
        if im.mode not in ("I", "I;16"):
            raise DataError(f"{path}: expected a 16-bit grayscale image, got mode {im.mode!r}")
        arr = np.asarray(im)
    if arr.min() < 0 or arr.max() > 0xFFFF:
        raise DataError(f"{path}: values outside the 16-bit range")
    return arr.astype(np.uint16)


def save_gray16(path: str | os.PathLike, img: np.ndarray) -> None:
    if img.ndim != 2 or img.dtype != np.uint16:
        raise DataError("expected a (H, W) uint16 array")
    Image.fromarray(img).save(path, format="PNG")
