"""Superpixel over-segmentation by iterative clustering in (L, a, b, x, y).

The image is segmented into approximately equally sized superpixels. Seeds
are placed on a regular grid of interval S = sqrt(N/K), perturbed to the
lowest-gradient position in their 3x3 neighborhood, then refined k-means
style: each seed claims pixels inside its 2Sx2S search window by the
combined distance

    D = d_lab + (m / S) * d_xy

where d_lab is the Euclidean distance in Lab, d_xy the Euclidean distance
in the image plane, and m the compactness weight (higher m gives squarer
superpixels). Assignment ties are broken toward the lower center index so
results are reproducible regardless of evaluation schedule.

Pixels excluded by an optional foreground mask keep the reserved
BACKGROUND label and never participate in clustering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy import ndimage

from .color import lab_gradient_map
from .errors import DataError, ParameterError
from .pngio import load_gray16, save_gray16

# Reserved label for pixels outside the clustered foreground.
BACKGROUND = -1

# Background value in serialized 16-bit label maps.
BACKGROUND_PNG_VALUE = 0xFFFF

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class SlicParams:
    """Clustering parameters.

    k is the desired superpixel count and has no universal default; m
    weights the spatial term. Iteration stops when the summed center
    displacement drops below residual_threshold (in labxy units) or after
    max_iters rounds. Undersized fragments below
    min_segment_fraction * S^2 pixels are merged away when
    enforce_connectivity is set.
    """

    k: int
    m: float = 20.0
    max_iters: int = 10
    residual_threshold: float = 1.0
    enforce_connectivity: bool = True
    min_segment_fraction: float = 0.25

    def __post_init__(self):
        if self.k < 2:
            raise ParameterError(f"k must be at least 2, got {self.k}")
        if not self.m > 0:
            raise ParameterError(f"m must be positive, got {self.m}")
        if self.max_iters < 1:
            raise ParameterError(f"max_iters must be positive, got {self.max_iters}")
        if self.residual_threshold < 0:
            raise ParameterError("residual_threshold must be non-negative")
        if not 0.0 < self.min_segment_fraction < 1.0:
            raise ParameterError("min_segment_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class ClusterCenter:
    """A cluster center in (L, a, b, x, y) space."""

    l: float
    a: float
    b: float
    x: float
    y: float


@dataclass
class SuperpixelMap:
    """Per-pixel segment labels.

    labels is (H, W) int32 holding BACKGROUND or a segment id in
    [0, num_segments); every id in that range is used by at least one
    pixel.
    """

    labels: np.ndarray
    num_segments: int

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]


def labxy_distance(c: ClusterCenter, p, m: float, s: float) -> float:
    """Combined color-spatial distance between a center and a pixel.

    p is a (l, a, b, x, y) tuple. Returns d_lab + (m / s) * d_xy.
    """
    if not s > 0:
        raise ParameterError(f"grid interval s must be positive, got {s}")
    l, a, b, x, y = p
    d_lab = math.sqrt((c.l - l) ** 2 + (c.a - a) ** 2 + (c.b - b) ** 2)
    d_xy = math.sqrt((c.x - x) ** 2 + (c.y - y) ** 2)
    return d_lab + (m / s) * d_xy


def grid_interval(width: int, height: int, k: int) -> float:
    return math.sqrt(width * height / k)


def _grid_positions(extent: int, step: float) -> list[int]:
    out = []
    i = 0
    while True:
        pos = int(round(step / 2 + i * step))
        if pos >= extent:
            break
        out.append(pos)
        i += 1
    return out


def _perturb(grad: np.ndarray, x: int, y: int) -> tuple[int, int]:
    # Move to the lowest-gradient 3x3 neighbor; the original position wins
    # ties, then row-major neighbor order.
    h, w = grad.shape
    best = (grad[y, x], 0, 0, 0)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dx == 0 and dy == 0:
                continue
            ny, nx = y + dy, x + dx
            if not (0 <= ny < h and 0 <= nx < w):
                continue
            cand = (grad[ny, nx], 1, dy, dx)
            if cand < best:
                best = cand
    return x + best[3], y + best[2]


def _validate_lab(img: np.ndarray) -> None:
    if img.ndim != 3 or img.shape[2] != 3:
        raise ParameterError("expected a Lab image of shape (H, W, 3)")
    if not np.issubdtype(img.dtype, np.floating):
        raise ParameterError("expected a floating-point Lab image")


def _seed_centers(
    img: np.ndarray, params: SlicParams, mask: np.ndarray | None
) -> tuple[np.ndarray, float]:
    """Place seeds on the S-grid, perturbed off local gradient maxima.

    Returns an (n, 5) array of [l, a, b, x, y] rows and the grid interval.
    Seeds whose grid site falls on background are dropped; if none survive
    the first foreground pixel (raster order) seeds a single cluster.
    """
    h, w = img.shape[:2]
    n = h * w
    if params.k > n:
        raise ParameterError(f"k={params.k} exceeds the pixel count {n}")
    s = grid_interval(w, h, params.k)
    grad = lab_gradient_map(img)
    if mask is not None:
        grad = np.where(mask, grad, np.inf)
    seeds: list[tuple[int, int]] = []
    for y in _grid_positions(h, s):
        for x in _grid_positions(w, s):
            if mask is not None and not mask[y, x]:
                continue
            seeds.append(_perturb(grad, x, y))
    if not seeds:
        if mask is None or not mask.any():
            raise DataError("no pixels available for seeding")
        fy, fx = np.argwhere(mask)[0]
        seeds.append((int(fx), int(fy)))
    centers = np.empty((len(seeds), 5), dtype=np.float64)
    for i, (x, y) in enumerate(seeds):
        centers[i, 0:3] = img[y, x]
        centers[i, 3] = x
        centers[i, 4] = y
    return centers, s


def init_centers(img: np.ndarray, params: SlicParams) -> list[ClusterCenter]:
    """Initial cluster centers for an unmasked image."""
    _validate_lab(img)
    centers, _ = _seed_centers(img, params, None)
    return [ClusterCenter(*map(float, row)) for row in centers]


def _window_bounds(c: float, s: float, extent: int) -> tuple[int, int]:
    # Inclusive pixel range covered by the 2Sx2S window centered at c.
    lo = max(0, math.ceil(c - s))
    hi = min(extent - 1, math.floor(c + s))
    return lo, hi


def _assign(
    centers: np.ndarray,
    img: np.ndarray,
    fg: np.ndarray,
    ratio: float,
    s: float,
) -> np.ndarray:
    """One assignment sweep: windowed minimum-distance labeling.

    Iterating centers in index order with a strict "smaller distance wins"
    update realizes the lowest-index tie-break.
    """
    h, w = img.shape[:2]
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    labels = np.full((h, w), -1, dtype=np.int32)
    dist = np.full((h, w), np.inf)
    for k in range(len(centers)):
        cl, ca, cb, cx, cy = centers[k]
        x0, x1 = _window_bounds(cx, s, w)
        y0, y1 = _window_bounds(cy, s, h)
        if x0 > x1 or y0 > y1:
            continue
        win = img[y0 : y1 + 1, x0 : x1 + 1]
        dl = win[..., 0] - cl
        da = win[..., 1] - ca
        db = win[..., 2] - cb
        d_lab = np.sqrt(dl * dl + da * da + db * db)
        dx = xs[x0 : x1 + 1][None, :] - cx
        dy = ys[y0 : y1 + 1][:, None] - cy
        d_xy = np.sqrt(dx * dx + dy * dy)
        d = d_lab + ratio * d_xy
        sub_dist = dist[y0 : y1 + 1, x0 : x1 + 1]
        sub_labels = labels[y0 : y1 + 1, x0 : x1 + 1]
        better = (d < sub_dist) & fg[y0 : y1 + 1, x0 : x1 + 1]
        sub_dist[better] = d[better]
        sub_labels[better] = k
    return labels


def _assign_stragglers(
    labels: np.ndarray, centers: np.ndarray, img: np.ndarray, fg: np.ndarray, ratio: float
) -> None:
    """Label foreground pixels missed by every window (rare: dropped seeds).

    Each straggler takes the globally nearest center by the same combined
    distance, lowest index on ties.
    """
    missed = fg & (labels < 0)
    if not missed.any():
        return
    yy, xx = np.nonzero(missed)
    pts = np.concatenate([img[yy, xx], xx[:, None], yy[:, None]], axis=1)
    d_lab = np.sqrt(((pts[:, None, 0:3] - centers[None, :, 0:3]) ** 2).sum(axis=2))
    d_xy = np.sqrt(((pts[:, None, 3:5] - centers[None, :, 3:5]) ** 2).sum(axis=2))
    labels[yy, xx] = np.argmin(d_lab + ratio * d_xy, axis=1).astype(np.int32)


def segment(
    img: np.ndarray,
    params: SlicParams,
    mask: np.ndarray | None = None,
) -> tuple[SuperpixelMap, list[ClusterCenter], list[float]]:
    """Cluster a Lab image into superpixels.

    Each iteration assigns pixels within every center's 2Sx2S window to
    the center of minimum combined distance, then recomputes centers as
    the mean (l, a, b, x, y) of their pixels. The residual is the summed
    xy displacement of the centers; iteration stops when it falls below
    params.residual_threshold or after params.max_iters rounds.

    mask, when given, restricts clustering to True pixels; the rest keep
    the BACKGROUND label. Empty clusters are dropped and labels compacted.

    Returns (map, centers, residual_history) where centers are the final
    positions of the surviving clusters in label order.
    """
    _validate_lab(img)
    h, w = img.shape[:2]
    if mask is not None:
        if mask.shape != (h, w):
            raise ParameterError("mask dimensions do not match the image")
        fg = mask.astype(bool)
    else:
        fg = np.ones((h, w), dtype=bool)

    centers, s = _seed_centers(img, params, mask)
    ratio = params.m / s

    yy, xx = np.mgrid[0:h, 0:w]
    flat_x = xx.ravel().astype(np.float64)
    flat_y = yy.ravel().astype(np.float64)
    flat_lab = img.reshape(-1, 3)

    labels = np.full((h, w), -1, dtype=np.int32)
    residual_history: list[float] = []
    for _ in range(params.max_iters):
        labels = _assign(centers, img, fg, ratio, s)
        flat = labels.ravel()
        valid = flat >= 0
        idx = flat[valid]
        counts = np.bincount(idx, minlength=len(centers)).astype(np.float64)
        new_centers = centers.copy()
        nz = counts > 0
        sums = np.empty((len(centers), 5))
        for j in range(3):
            sums[:, j] = np.bincount(idx, weights=flat_lab[valid, j], minlength=len(centers))
        sums[:, 3] = np.bincount(idx, weights=flat_x[valid], minlength=len(centers))
        sums[:, 4] = np.bincount(idx, weights=flat_y[valid], minlength=len(centers))
        new_centers[nz] = sums[nz] / counts[nz, None]
        moved = np.sqrt(
            (new_centers[:, 3] - centers[:, 3]) ** 2 + (new_centers[:, 4] - centers[:, 4]) ** 2
        )
        residual = float(moved.sum())
        centers = new_centers
        residual_history.append(residual)
        if residual < params.residual_threshold:
            break

    _assign_stragglers(labels, centers, img, fg, ratio)

    # Drop empty clusters, compact ids to a dense range.
    flat = labels.ravel()
    used = np.bincount(flat[flat >= 0], minlength=len(centers)) > 0
    remap = np.full(len(centers), -1, dtype=np.int32)
    remap[used] = np.arange(int(used.sum()), dtype=np.int32)
    sel = labels >= 0
    labels[sel] = remap[labels[sel]]
    centers = centers[used]

    spmap = SuperpixelMap(labels=labels, num_segments=int(used.sum()))
    if params.enforce_connectivity:
        min_size = max(1, int(round(params.min_segment_fraction * s * s)))
        spmap = enforce_connectivity(spmap, min_size)
    return spmap, [ClusterCenter(*map(float, row)) for row in centers], residual_history


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        p = self.parent
        while p[i] != i:
            p[i] = p[p[i]]
            i = p[i]
        return i


def enforce_connectivity(spmap: SuperpixelMap, min_size: int) -> SuperpixelMap:
    """Merge undersized connected components into a neighboring segment.

    Components of like-labeled pixels (4-connectivity) are found first.
    Components still smaller than min_size are processed in raster order
    of their first pixel; each is merged into its largest current
    neighbor, ties broken by smallest label id then first pixel. Every
    surviving component receives its own label, so each output label is a
    single 4-connected region; labels are compacted to a dense range
    ordered by (original label, position).
    """
    if min_size < 1:
        raise ParameterError(f"min_size must be positive, got {min_size}")
    labels = spmap.labels
    h, w = labels.shape

    comp = np.full((h, w), -1, dtype=np.int64)
    comp_label: list[int] = []
    comp_size: list[int] = []
    next_id = 0
    slices = ndimage.find_objects(labels + 1)
    for lbl, sl in enumerate(slices):
        if sl is None:
            continue
        local = labels[sl] == lbl
        cc, ncc = ndimage.label(local, structure=_CROSS)
        sizes = np.bincount(cc.ravel())
        view = comp[sl]
        for c in range(1, ncc + 1):
            view[cc == c] = next_id + c - 1
            comp_size.append(int(sizes[c]))
            comp_label.append(lbl)
        next_id += ncc

    ng = next_id
    if ng == 0:
        return SuperpixelMap(labels=labels.copy(), num_segments=0)

    flat = comp.ravel()
    values, first_idx = np.unique(flat, return_index=True)
    comp_first = np.empty(ng, dtype=np.int64)
    for v, fi in zip(values, first_idx):
        if v >= 0:
            comp_first[v] = fi

    adj: list[set[int]] = [set() for _ in range(ng)]
    for a, b in ((comp[:, :-1], comp[:, 1:]), (comp[:-1, :], comp[1:, :])):
        touch = (a != b) & (a >= 0) & (b >= 0)
        pairs = np.unique(
            np.stack([a[touch], b[touch]], axis=1), axis=0
        ) if touch.any() else np.empty((0, 2), dtype=np.int64)
        for u, v in pairs:
            adj[int(u)].add(int(v))
            adj[int(v)].add(int(u))

    uf = _UnionFind(ng)
    size = list(comp_size)
    order = sorted(range(ng), key=lambda g: comp_first[g])
    for g in order:
        r = uf.find(g)
        if size[r] >= min_size:
            continue
        candidates = {uf.find(x) for x in adj[r]} - {r}
        if not candidates:
            continue
        target = min(candidates, key=lambda c: (-size[c], comp_label[c], comp_first[c]))
        uf.parent[r] = target
        size[target] += size[r]
        adj[target] |= adj[r]

    roots = sorted(
        {uf.find(g) for g in range(ng)}, key=lambda r: (comp_label[r], comp_first[r])
    )
    new_label_of_root = {r: i for i, r in enumerate(roots)}
    comp_to_new = np.array([new_label_of_root[uf.find(g)] for g in range(ng)], dtype=np.int32)

    out = np.full((h, w), BACKGROUND, dtype=np.int32)
    sel = comp >= 0
    out[sel] = comp_to_new[comp[sel]]
    return SuperpixelMap(labels=out, num_segments=len(roots))


def save_superpixel_map(
    path: str, spmap: SuperpixelMap, params: Mapping[str, object] | None = None
) -> None:
    """Write a label map as 16-bit grayscale PNG plus a text sidecar.

    Background pixels are stored as 65535; the sidecar (<path>.meta) holds
    width, height, num_segments and any parameters passed in.
    """
    if spmap.num_segments >= BACKGROUND_PNG_VALUE:
        raise DataError("label maps with 65535 or more segments cannot be serialized")
    arr = np.where(spmap.labels == BACKGROUND, BACKGROUND_PNG_VALUE, spmap.labels)
    save_gray16(path, arr.astype(np.uint16))
    lines = [
        f"width={spmap.width}",
        f"height={spmap.height}",
        f"num_segments={spmap.num_segments}",
    ]
    for key, value in (params or {}).items():
        lines.append(f"{key}={value}")
    with open(str(path) + ".meta", "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_superpixel_map(path: str) -> tuple[SuperpixelMap, dict[str, str]]:
    """Read a serialized label map and its sidecar metadata."""
    arr = load_gray16(path)
    meta: dict[str, str] = {}
    with open(str(path) + ".meta", "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and "=" in line:
                key, value = line.split("=", 1)
                meta[key] = value
    num_segments = int(meta["num_segments"])
    if (int(meta["width"]), int(meta["height"])) != (arr.shape[1], arr.shape[0]):
        raise DataError(f"{path}: sidecar dimensions do not match the PNG")
    labels = arr.astype(np.int32)
    labels[arr == BACKGROUND_PNG_VALUE] = BACKGROUND
    if labels.max(initial=-1) >= num_segments:
        raise DataError(f"{path}: label values exceed num_segments")
    return SuperpixelMap(labels=labels, num_segments=num_segments), meta
