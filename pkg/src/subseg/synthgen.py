"""Deterministic synthetic pseudo-X-ray dataset generation.

Each image holds one "device": a rounded rectangle filled with false-color
internals (shaded module grid, component blocks, thin traces) plus a light
scatter of small organic-palette dots, the kind of benign clutter that
makes whole-object statistics overlap between classes. Anomalous images
additionally embed one compact organic-palette blob (ellipse or rotated
rectangle) fully inside the device. Ground truth is the device mask, the
anomaly mask, and the image label.

Generation is reproducible: every image draws from its own RNG stream
derived from (seed, image index), so results do not depend on scheduling.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from .classify import ANOMALY, BENIGN
from .errors import DataError, ParameterError
from .pngio import save_rgb
from .isolate import load_mask, save_mask
from .regions import OBJECT_LEVEL, RegionCrop
from .slic import SuperpixelMap

MANIFEST_NAME = "manifest.jsonl"

# False-color palettes: device structure sits in the blue/gray family,
# organic content (clutter dots and anomaly blobs) in the orange/red
# family, well separated in Lab.
_DEVICE_BASE = [(84, 110, 140), (70, 125, 150), (96, 120, 128), (76, 104, 156)]
_DEVICE_COMPONENT = [(52, 76, 110), (40, 96, 120), (70, 90, 96), (58, 70, 124), (90, 140, 160)]
_ORGANIC = [(235, 140, 50), (225, 110, 40), (240, 160, 70), (215, 95, 60)]


@dataclass(frozen=True)
class SynthConfig:
    """Generator knobs; fractions are relative to the device area."""

    n_images: int
    image_w: int = 512
    image_h: int = 512
    anomaly_probability: float = 0.5
    anomaly_area_fraction: tuple[float, float] = (0.002, 0.02)
    clutter_fraction: tuple[float, float] = (0.004, 0.025)
    texture_scale: float = 1.0
    noise_sigma: float = 5.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_images < 1:
            raise ParameterError("n_images must be positive")
        if self.image_w < 64 or self.image_h < 64:
            raise ParameterError("images must be at least 64x64")
        if not 0.0 <= self.anomaly_probability <= 1.0:
            raise ParameterError("anomaly_probability must lie in [0, 1]")
        lo, hi = self.anomaly_area_fraction
        if not (0.0 < lo <= hi < 0.25):
            raise ParameterError("anomaly_area_fraction must lie within (0, 0.25)")
        if self.rng_seed < 0:
            raise ParameterError("rng_seed must be non-negative")
        if self.texture_scale <= 0:
            raise ParameterError("texture_scale must be positive")
        if self.noise_sigma < 0:
            raise ParameterError("noise_sigma must be non-negative")


@dataclass
class GroundTruth:
    """Masks and label for one image; anomaly_mask is empty when benign."""

    object_mask: np.ndarray
    anomaly_mask: np.ndarray
    image_label: str


@dataclass(frozen=True)
class ManifestRecord:
    image_id: str
    image_path: str
    object_mask_path: str
    anomaly_mask_path: str | None
    image_label: str
    split: str


def _rounded_rect_mask(
    w: int, h: int, cx: float, cy: float, half_w: float, half_h: float, radius: float
) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    dx = np.abs(xx - cx) - (half_w - radius)
    dy = np.abs(yy - cy) - (half_h - radius)
    core = (dx <= 0) & (np.abs(yy - cy) <= half_h) | (dy <= 0) & (np.abs(xx - cx) <= half_w)
    corner = (dx > 0) & (dy > 0) & (dx * dx + dy * dy <= radius * radius)
    return core | corner


def _shape_window(
    shape: str,
    bounds: tuple[int, int],
    cx: float,
    cy: float,
    ax: float,
    ay: float,
    theta: float,
) -> tuple[slice, slice, np.ndarray]:
    """Local boolean mask for an ellipse or rotated rectangle.

    Only the shape's bounding window is materialized; returns the row and
    column slices into the full image plus the local mask.
    """
    h, w = bounds
    r = math.hypot(ax, ay) + 1.0
    y0, y1 = max(0, int(cy - r)), min(h, int(cy + r) + 2)
    x0, x1 = max(0, int(cx - r)), min(w, int(cx + r) + 2)
    yy, xx = np.ogrid[y0:y1, x0:x1]
    c, s = math.cos(theta), math.sin(theta)
    u = (xx - cx) * c + (yy - cy) * s
    v = -(xx - cx) * s + (yy - cy) * c
    if shape == "ellipse":
        local = (u / ax) ** 2 + (v / ay) ** 2 <= 1.0
    else:
        local = (np.abs(u) <= ax) & (np.abs(v) <= ay)
    return slice(y0, y1), slice(x0, x1), local


def _pick_color(rng: np.random.Generator, palette: Sequence[tuple[int, int, int]]) -> np.ndarray:
    base = np.array(palette[rng.integers(len(palette))], dtype=np.float64)
    jitter = rng.uniform(0.85, 1.15)
    return np.clip(base * jitter, 0, 255)


def _paint_device(
    rng: np.random.Generator, img: np.ndarray, cfg: SynthConfig
) -> np.ndarray:
    """Draw the device and its internals; returns the object mask."""
    h, w = img.shape[:2]
    half_w = 0.5 * w * rng.uniform(0.45, 0.7)
    half_h = 0.5 * h * rng.uniform(0.45, 0.7)
    cx = w / 2 + rng.uniform(-0.05, 0.05) * w
    cy = h / 2 + rng.uniform(-0.05, 0.05) * h
    radius = rng.uniform(0.08, 0.24) * min(half_w, half_h)
    mask = _rounded_rect_mask(w, h, cx, cy, half_w, half_h, radius)

    base = _pick_color(rng, _DEVICE_BASE)
    x0, x1 = int(cx - half_w), int(cx + half_w) + 1
    y0, y1 = int(cy - half_h), int(cy + half_h) + 1

    cells = max(2, int(round(rng.integers(3, 7) / cfg.texture_scale)))
    xb = np.linspace(x0, x1, cells + 1).astype(int)
    yb = np.linspace(y0, y1, cells + 1).astype(int)
    for i in range(cells):
        for j in range(cells):
            shade = rng.uniform(0.78, 1.12)
            ys, xs = slice(yb[i], yb[i + 1]), slice(xb[j], xb[j + 1])
            img[ys, xs][mask[ys, xs]] = np.clip(base * shade, 0, 255)

    for _ in range(int(rng.integers(4, 10))):
        color = _pick_color(rng, _DEVICE_COMPONENT)
        bw = rng.uniform(0.05, 0.18) * 2 * half_w
        bh = rng.uniform(0.05, 0.18) * 2 * half_h
        px = rng.uniform(x0 + bw / 2, x1 - bw / 2)
        py = rng.uniform(y0 + bh / 2, y1 - bh / 2)
        ys, xs, local = _shape_window("rect", (h, w), px, py, bw / 2, bh / 2, 0.0)
        img[ys, xs][local & mask[ys, xs]] = color

    for _ in range(int(rng.integers(6, 15))):
        color = np.clip(_pick_color(rng, _DEVICE_COMPONENT) * 0.8, 0, 255)
        if rng.random() < 0.5:
            ty = int(rng.uniform(y0, y1 - 1))
            tx0, tx1 = sorted(rng.uniform(x0, x1, size=2).astype(int))
            ys, xs = slice(max(0, ty), min(h, ty + 2)), slice(max(0, tx0), min(w, tx1))
        else:
            tx = int(rng.uniform(x0, x1 - 1))
            ty0, ty1 = sorted(rng.uniform(y0, y1, size=2).astype(int))
            ys, xs = slice(max(0, ty0), min(h, ty1)), slice(max(0, tx), min(w, tx + 2))
        img[ys, xs][mask[ys, xs]] = color

    return mask


def _paint_clutter(
    rng: np.random.Generator,
    img: np.ndarray,
    mask: np.ndarray,
    interior: np.ndarray,
    cfg: SynthConfig,
) -> None:
    """Scatter small organic-palette dots across the device interior."""
    h, w = img.shape[:2]
    area = int(mask.sum())
    target = rng.uniform(*cfg.clutter_fraction) * area
    n_dots = max(3, int(target / 9.0))
    coords = np.argwhere(interior)
    if len(coords) == 0:
        return
    for _ in range(n_dots):
        y, x = coords[rng.integers(len(coords))]
        rx = rng.uniform(1.0, 2.5)
        ry = rng.uniform(1.0, 2.5)
        ys, xs, local = _shape_window(
            "ellipse", (h, w), float(x), float(y), rx, ry, rng.uniform(0, math.pi)
        )
        img[ys, xs][local & mask[ys, xs]] = _pick_color(rng, _ORGANIC)


def _paint_anomaly(
    rng: np.random.Generator,
    img: np.ndarray,
    mask: np.ndarray,
    depth: np.ndarray,
    cfg: SynthConfig,
) -> np.ndarray:
    """Embed one compact organic-palette blob inside the device.

    depth is the distance-to-background transform of the object mask; the
    blob center is drawn from pixels deep enough that the whole shape
    fits, falling back to any interior pixel for oversized draws.
    """
    h, w = img.shape[:2]
    area = float(mask.sum())
    target = rng.uniform(*cfg.anomaly_area_fraction) * area
    ratio = rng.uniform(0.45, 1.0)
    shape = "ellipse" if rng.random() < 0.7 else "rect"
    if shape == "ellipse":
        ax = math.sqrt(target / (math.pi * ratio))
    else:
        ax = math.sqrt(target / (4.0 * ratio))
    ay = ratio * ax
    theta = rng.uniform(0, math.pi)
    margin = math.ceil(max(ax, ay)) + 1
    coords = np.argwhere(depth > margin)
    if len(coords) == 0:
        coords = np.argwhere(depth > 1)
    if len(coords) == 0:
        raise DataError("device mask too small to embed an anomaly")
    y, x = coords[rng.integers(len(coords))]
    ys, xs, local = _shape_window(shape, (h, w), float(x), float(y), ax, ay, theta)
    blob = np.zeros((h, w), dtype=bool)
    blob[ys, xs] = local
    blob &= mask
    img[blob] = _pick_color(rng, _ORGANIC)
    return blob


def generate_image(cfg: SynthConfig, index: int) -> tuple[np.ndarray, GroundTruth]:
    """Render one image plus its ground truth, from the (seed, index) stream."""
    rng = np.random.default_rng(np.random.SeedSequence((cfg.rng_seed, index)))
    h, w = cfg.image_h, cfg.image_w
    img = np.full((h, w, 3), 255.0)
    object_mask = _paint_device(rng, img, cfg)
    depth = ndimage.distance_transform_edt(object_mask)
    _paint_clutter(rng, img, object_mask, depth > 3, cfg)
    anomalous = rng.random() < cfg.anomaly_probability
    if anomalous:
        anomaly_mask = _paint_anomaly(rng, img, object_mask, depth, cfg)
    else:
        anomaly_mask = np.zeros((h, w), dtype=bool)
    if cfg.noise_sigma > 0:
        img += rng.normal(0.0, cfg.noise_sigma, size=img.shape)
    pixels = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    label = ANOMALY if anomaly_mask.any() else BENIGN
    return pixels, GroundTruth(object_mask, anomaly_mask, label)


def generate_dataset(
    cfg: SynthConfig, out_dir: str | os.PathLike, train_fraction: float = 0.7
) -> tuple[str, list[ManifestRecord]]:
    """Write images, masks and the JSONL manifest; returns (path, records).

    The first round(n * train_fraction) images form the train split, the
    rest the test split. Manifest paths are relative to the manifest
    file, so two runs with the same seed produce byte-identical trees.
    """
    if not 0 < train_fraction < 1:
        raise ParameterError("train_fraction must lie in (0, 1)")
    out_dir = str(out_dir)
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "masks"), exist_ok=True)
    n_train = int(round(cfg.n_images * train_fraction))
    records = []
    for i in range(cfg.n_images):
        image_id = f"img{i:05d}"
        pixels, gt = generate_image(cfg, i)
        image_rel = f"images/{image_id}.png"
        object_rel = f"masks/{image_id}_object.png"
        save_rgb(os.path.join(out_dir, image_rel), pixels)
        save_mask(os.path.join(out_dir, object_rel), gt.object_mask)
        anomaly_rel = None
        if gt.image_label == ANOMALY:
            anomaly_rel = f"masks/{image_id}_anomaly.png"
            save_mask(os.path.join(out_dir, anomaly_rel), gt.anomaly_mask)
        records.append(
            ManifestRecord(
                image_id=image_id,
                image_path=image_rel,
                object_mask_path=object_rel,
                anomaly_mask_path=anomaly_rel,
                image_label=gt.image_label,
                split="train" if i < n_train else "test",
            )
        )
    manifest_path = os.path.join(out_dir, MANIFEST_NAME)
    with open(manifest_path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "image_id": rec.image_id,
                        "image_path": rec.image_path,
                        "object_mask_path": rec.object_mask_path,
                        "anomaly_mask_path": rec.anomaly_mask_path,
                        "image_label": rec.image_label,
                        "split": rec.split,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    return manifest_path, records


def load_manifest(path: str | os.PathLike) -> list[ManifestRecord]:
    """Read a JSONL manifest, resolving paths relative to the file."""
    base = os.path.dirname(os.path.abspath(path))
    records = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            rec = ManifestRecord(
                image_id=obj["image_id"],
                image_path=os.path.join(base, obj["image_path"]),
                object_mask_path=os.path.join(base, obj["object_mask_path"]),
                anomaly_mask_path=(
                    os.path.join(base, obj["anomaly_mask_path"])
                    if obj.get("anomaly_mask_path")
                    else None
                ),
                image_label=obj["image_label"],
                split=obj["split"],
            )
            if rec.image_id in seen:
                raise DataError(f"duplicate image_id {rec.image_id} in manifest")
            seen.add(rec.image_id)
            for p in (rec.image_path, rec.object_mask_path, rec.anomaly_mask_path):
                if p is not None and not os.path.exists(p):
                    raise DataError(f"manifest references a missing file: {p}")
            if rec.split not in ("train", "test"):
                raise DataError(f"unknown split {rec.split!r} for {rec.image_id}")
            if rec.image_label not in (ANOMALY, BENIGN):
                raise DataError(f"unknown label {rec.image_label!r} for {rec.image_id}")
            records.append(rec)
    return records


def load_ground_truth(rec: ManifestRecord) -> GroundTruth:
    object_mask = load_mask(rec.object_mask_path)
    if rec.anomaly_mask_path is not None:
        anomaly_mask = load_mask(rec.anomaly_mask_path, expect_shape=object_mask.shape)
    else:
        anomaly_mask = np.zeros_like(object_mask)
    return GroundTruth(object_mask, anomaly_mask, rec.image_label)


def label_regions(
    crops: Sequence[RegionCrop],
    gt: GroundTruth,
    tau: float = 0.25,
    spmap: SuperpixelMap | None = None,
) -> list[str]:
    """Ground-truth label per crop by anomaly-mask overlap.

    A sub-component crop is anomalous when its segment's overlap with the
    anomaly mask is at least tau of the segment's pixels; a whole-object
    crop is anomalous when the anomaly mask is non-empty. Sub-component
    labeling needs the originating label map.
    """
    if not 0 < tau <= 1:
        raise ParameterError("tau must lie in (0, 1]")
    h, w = gt.object_mask.shape
    ratios = None
    out = []
    for crop in crops:
        x0, y0, x1, y1 = crop.source_box
        if x0 < 0 or y0 < 0 or x1 > w or y1 > h:
            raise DataError(f"crop source box {crop.source_box} outside {w}x{h} ground truth")
        if crop.level == OBJECT_LEVEL:
            out.append(ANOMALY if gt.anomaly_mask.any() else BENIGN)
            continue
        if spmap is None:
            raise ParameterError("sub-component labeling requires the superpixel map")
        if ratios is None:
            if spmap.labels.shape != (h, w):
                raise DataError("label map dimensions do not match the ground truth")
            flat = spmap.labels.ravel()
            valid = flat >= 0
            seg_counts = np.bincount(flat[valid], minlength=spmap.num_segments)
            overlap = np.bincount(
                flat[valid & gt.anomaly_mask.ravel()], minlength=spmap.num_segments
            )
            with np.errstate(invalid="ignore"):
                ratios = np.where(seg_counts > 0, overlap / np.maximum(seg_counts, 1), 0.0)
        out.append(ANOMALY if ratios[crop.segment_id] >= tau else BENIGN)
    return out
