"""Per-region binary {anomaly, benign} classification.

A small from-scratch network fills the classification slot behind an
exchangeable scorer boundary: any callable mapping region crops to
predictions can substitute, including an external scorer fed through the
crop-export / CSV protocol at the bottom of this module.

Features are hand-rolled Lab-space statistics (mean-pooled grid, channel
histograms, gradient-magnitude histogram); the model is a single hidden
tanh layer trained with mini-batch SGD with momentum on categorical
cross-entropy. Everything is deterministic given the seed, and the
analytic gradients are verifiable against central finite differences via
gradient_check.
"""

from __future__ import annotations

import csv
import json
import os
import struct
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .color import lab_from_srgb_array
from .errors import DataError, ParameterError
from .pngio import save_rgb
from .regions import TARGET_SIZES, RegionCrop

BENIGN = "benign"
ANOMALY = "anomaly"
CLASS_LABELS = (BENIGN, ANOMALY)

# Feature layout: 8x8 mean-pooled Lab grid, 24-bin histogram per Lab
# channel, 16-bin gradient-magnitude histogram.
POOL_GRID = 8
CHANNEL_BINS = 24
GRADIENT_BINS = 16
FEATURE_LENGTH = POOL_GRID * POOL_GRID * 3 + CHANNEL_BINS * 3 + GRADIENT_BINS

_L_RANGE = (0.0, 100.0)
_AB_RANGE = (-110.0, 110.0)
_GRADIENT_RANGE = (0.0, 320.0)

_MODEL_MAGIC = b"SSEGMDL1"


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer recipe for the reference classifier."""

    learning_rate: float = 0.001
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 30
    rng_seed: int = 0
    upsample_minority: bool = True
    train_fraction: float = 0.7

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ParameterError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ParameterError("momentum must lie in [0, 1)")
        if self.batch_size < 1:
            raise ParameterError("batch_size must be positive")
        if self.epochs < 1:
            raise ParameterError("epochs must be positive")
        if not 0 < self.train_fraction < 1:
            raise ParameterError("train_fraction must lie in (0, 1)")


@dataclass
class Prediction:
    """Class decision with its probability; ties resolve to benign."""

    label: str
    probability: float
    scores: tuple[float, float]  # (benign, anomaly)


@dataclass
class ClassifierModel:
    """Trained weights plus the feature normalization that produced them."""

    architecture: str
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    feat_mean: np.ndarray
    feat_std: np.ndarray
    train_config: TrainConfig | None = None
    class_labels: tuple[str, str] = CLASS_LABELS

    def __post_init__(self):
        d, hidden = self.w1.shape
        if self.b1.shape != (hidden,) or self.w2.shape != (hidden, 2) or self.b2.shape != (2,):
            raise DataError("weight shapes are inconsistent")
        if self.feat_mean.shape != (d,) or self.feat_std.shape != (d,):
            raise DataError("normalization shapes do not match the input width")
        if not (self.feat_std > 0).all():
            raise DataError("normalization std components must be positive")

    @property
    def n_features(self) -> int:
        return self.w1.shape[0]


# ---------------------------------------------------------------------------
# Features
# ---------------------------------------------------------------------------


def _pool_bounds(extent: int) -> np.ndarray:
    return (np.arange(POOL_GRID + 1) * extent) // POOL_GRID


def _pooled_grid(lab: np.ndarray) -> np.ndarray:
    """Mean Lab per cell of an 8x8 grid, for a batch (n, h, w, 3)."""
    n, h, w, _ = lab.shape
    rb = _pool_bounds(h)
    cb = _pool_bounds(w)
    row_sums = np.add.reduceat(lab.astype(np.float64), rb[:-1], axis=1)
    sums = np.add.reduceat(row_sums, cb[:-1], axis=2)
    areas = (rb[1:] - rb[:-1])[:, None] * (cb[1:] - cb[:-1])[None, :]
    return (sums / areas[None, :, :, None]).reshape(n, -1)


def _channel_histograms(lab: np.ndarray) -> np.ndarray:
    n, h, w, _ = lab.shape
    out = np.empty((n, 3 * CHANNEL_BINS))
    ranges = (_L_RANGE, _AB_RANGE, _AB_RANGE)
    offsets = (np.arange(n) * CHANNEL_BINS)[:, None, None]
    for ch, (lo, hi) in enumerate(ranges):
        scaled = (lab[..., ch] - lo) * (CHANNEL_BINS / (hi - lo))
        idx = np.clip(np.floor(scaled).astype(np.int64), 0, CHANNEL_BINS - 1)
        counts = np.bincount((idx + offsets).ravel(), minlength=n * CHANNEL_BINS)
        out[:, ch * CHANNEL_BINS : (ch + 1) * CHANNEL_BINS] = counts.reshape(
            n, CHANNEL_BINS
        ) / float(h * w)
    return out


def _gradient_histogram(lab: np.ndarray) -> np.ndarray:
    n, h, w, _ = lab.shape
    dx = np.empty_like(lab)
    dx[:, :, 1:-1] = lab[:, :, 2:] - lab[:, :, :-2]
    dx[:, :, 0] = lab[:, :, 1] - lab[:, :, 0]
    dx[:, :, -1] = lab[:, :, -1] - lab[:, :, -2]
    dy = np.empty_like(lab)
    dy[:, 1:-1] = lab[:, 2:] - lab[:, :-2]
    dy[:, 0] = lab[:, 1] - lab[:, 0]
    dy[:, -1] = lab[:, -1] - lab[:, -2]
    magnitude = np.sqrt((dx * dx).sum(axis=-1) + (dy * dy).sum(axis=-1))
    lo, hi = _GRADIENT_RANGE
    scaled = (magnitude - lo) * (GRADIENT_BINS / (hi - lo))
    idx = np.clip(np.floor(scaled).astype(np.int64), 0, GRADIENT_BINS - 1)
    offsets = (np.arange(n) * GRADIENT_BINS)[:, None, None]
    counts = np.bincount((idx + offsets).ravel(), minlength=n * GRADIENT_BINS)
    return counts.reshape(n, GRADIENT_BINS) / float(h * w)


# Feature statistics are sampled on a fixed stride-2 lattice: the crops
# arrive rescaled (mostly upsampled), so the skipped pixels carry little
# extra information and the cost drops fourfold.
_FEATURE_STRIDE = 2


def featurize_batch(crops: Sequence[RegionCrop]) -> np.ndarray:
    """Feature vectors for same-level crops, stacked as (n, 280)."""
    if not crops:
        return np.empty((0, FEATURE_LENGTH))
    level = crops[0].level
    tw, th = TARGET_SIZES[level]
    for crop in crops:
        if crop.level != level:
            raise DataError("featurize_batch requires crops of one level")
        if crop.pixels.shape[:2] != (th, tw):
            raise DataError("crop is not at its level's target size")
    stack = np.stack([crop.pixels[:: _FEATURE_STRIDE, :: _FEATURE_STRIDE] for crop in crops])
    lab = lab_from_srgb_array(stack, dtype=np.float32)
    return np.concatenate(
        [_pooled_grid(lab), _channel_histograms(lab), _gradient_histogram(lab)], axis=1
    ).astype(np.float64)


def featurize(crop: RegionCrop) -> np.ndarray:
    """Deterministic fixed-length feature vector for one crop."""
    return featurize_batch([crop])[0]


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _forward_loss(
    w1: np.ndarray,
    b1: np.ndarray,
    w2: np.ndarray,
    b2: np.ndarray,
    xn: np.ndarray,
    y: np.ndarray,
) -> tuple[float, tuple]:
    hidden = np.tanh(xn @ w1 + b1)
    probs = _softmax(hidden @ w2 + b2)
    n = len(y)
    loss = float(-np.log(np.maximum(probs[np.arange(n), y], 1e-300)).mean())
    return loss, (xn, y, hidden, probs)


def _backward(w2: np.ndarray, cache: tuple) -> list[np.ndarray]:
    xn, y, hidden, probs = cache
    n = len(y)
    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    dw2 = hidden.T @ dlogits
    db2 = dlogits.sum(axis=0)
    dhidden = dlogits @ w2.T
    dz1 = dhidden * (1.0 - hidden * hidden)
    dw1 = xn.T @ dz1
    db1 = dz1.sum(axis=0)
    return [dw1, db1, dw2, db2]


def sgd_update(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    velocities: Sequence[np.ndarray],
    lr: float,
    momentum: float,
) -> None:
    """Classical momentum step, in place: v <- mu v - lr g; p <- p + v."""
    for p, g, v in zip(params, grads, velocities):
        v *= momentum
        v -= lr * g
        p += v


def _as_label_indices(labels: Iterable) -> np.ndarray:
    idx = []
    for lbl in labels:
        if lbl in (0, 1):
            idx.append(int(lbl))
        elif lbl in CLASS_LABELS:
            idx.append(CLASS_LABELS.index(lbl))
        else:
            raise DataError(f"unknown class label {lbl!r}")
    return np.asarray(idx, dtype=np.int64)


def balanced_indices(y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Training indices with the minority class upsampled to parity.

    Original indices come first; the minority class is extended by
    sampling with replacement until both classes match the majority
    count.
    """
    idx0 = np.nonzero(y == 0)[0]
    idx1 = np.nonzero(y == 1)[0]
    base = np.arange(len(y))
    if len(idx0) == len(idx1):
        return base
    minority, majority = (idx0, idx1) if len(idx0) < len(idx1) else (idx1, idx0)
    extra = rng.choice(minority, size=len(majority) - len(minority), replace=True)
    return np.concatenate([base, extra])


def train(
    features: np.ndarray,
    labels: Sequence,
    config: TrainConfig,
    hidden_units: int = 32,
) -> tuple[ClassifierModel, list[float]]:
    """Fit the reference classifier.

    features is (n, d); labels are 0/1 or "benign"/"anomaly" (anomaly is
    the positive class). Features are normalized by the training set's
    per-dimension mean and standard deviation, the minority class is
    upsampled with replacement when enabled, and optimization is
    mini-batch SGD with momentum on categorical cross-entropy. Fully
    deterministic given config.rng_seed.

    Returns the model and the mean loss per epoch.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or len(features) == 0:
        raise ParameterError("features must be a non-empty (n, d) array")
    if not np.isfinite(features).all():
        raise DataError("features contain non-finite values")
    y = _as_label_indices(labels)
    if len(y) != len(features):
        raise ParameterError("features and labels lengths differ")
    if len(np.unique(y)) < 2:
        raise DataError("single-class dataset: need at least one example of each class")

    mean = features.mean(axis=0)
    std = features.std(axis=0)
    std[std == 0] = 1.0

    rng = np.random.default_rng(config.rng_seed)
    if config.upsample_minority:
        idx = balanced_indices(y, rng)
    else:
        idx = np.arange(len(y))
    xn = (features[idx] - mean) / std
    yb = y[idx]
    n = len(yb)

    d = features.shape[1]
    w1 = rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, hidden_units))
    b1 = np.zeros(hidden_units)
    w2 = rng.normal(0.0, 1.0 / np.sqrt(hidden_units), size=(hidden_units, 2))
    b2 = np.zeros(2)
    params = [w1, b1, w2, b2]
    velocities = [np.zeros_like(p) for p in params]

    loss_history = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            loss, cache = _forward_loss(w1, b1, w2, b2, xn[batch], yb[batch])
            grads = _backward(w2, cache)
            sgd_update(params, grads, velocities, config.learning_rate, config.momentum)
            total += loss * len(batch)
        loss_history.append(total / n)

    model = ClassifierModel(
        architecture=f"mlp:{d}-{hidden_units}-2:tanh",
        w1=w1,
        b1=b1,
        w2=w2,
        b2=b2,
        feat_mean=mean,
        feat_std=std,
        train_config=config,
    )
    return model, loss_history


def predict_batch(model: ClassifierModel, features: np.ndarray) -> list[Prediction]:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != model.n_features:
        raise DataError(
            f"feature length {features.shape[-1]} does not match the model's "
            f"{model.n_features}"
        )
    xn = (features - model.feat_mean) / model.feat_std
    hidden = np.tanh(xn @ model.w1 + model.b1)
    probs = _softmax(hidden @ model.w2 + model.b2)
    out = []
    for p_benign, p_anomaly in probs:
        label = ANOMALY if p_anomaly > p_benign else BENIGN
        prob = float(p_anomaly if label == ANOMALY else p_benign)
        out.append(Prediction(label=label, probability=prob, scores=(float(p_benign), float(p_anomaly))))
    return out


def predict(model: ClassifierModel, feature_vector: np.ndarray) -> Prediction:
    """Softmax class probabilities for a single feature vector."""
    feature_vector = np.asarray(feature_vector, dtype=np.float64)
    if feature_vector.shape != (model.n_features,):
        raise DataError(
            f"feature length {feature_vector.shape} does not match the model's "
            f"({model.n_features},)"
        )
    return predict_batch(model, feature_vector[None, :])[0]


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------


def max_relative_error(
    loss_fn: Callable[[], float],
    params: Sequence[np.ndarray],
    analytic: Sequence[np.ndarray],
    epsilon: float,
) -> float:
    """Analytic gradients vs central finite differences, worst case.

    loss_fn re-evaluates the loss at the parameters' current (mutated)
    values. The relative error of a coordinate is defined as 0 when both
    gradient estimates are below 1e-10 in magnitude.
    """
    worst = 0.0
    for p, g in zip(params, analytic):
        flat_p = p.ravel()
        flat_g = g.ravel()
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + epsilon
            plus = loss_fn()
            flat_p[i] = orig - epsilon
            minus = loss_fn()
            flat_p[i] = orig
            fd = (plus - minus) / (2.0 * epsilon)
            ga = flat_g[i]
            if abs(ga) < 1e-10 and abs(fd) < 1e-10:
                continue
            worst = max(worst, abs(ga - fd) / max(abs(ga), abs(fd)))
    return worst


def gradient_check(
    model: ClassifierModel, batch: tuple[np.ndarray, Sequence], epsilon: float = 1e-5
) -> float:
    """Verify the cross-entropy gradients on a batch of raw features."""
    if not 0 < epsilon <= 1e-2:
        raise ParameterError("epsilon must lie in (0, 1e-2]")
    features, labels = batch
    features = np.asarray(features, dtype=np.float64)
    y = _as_label_indices(labels)
    xn = (features - model.feat_mean) / model.feat_std
    w1 = model.w1.copy()
    b1 = model.b1.copy()
    w2 = model.w2.copy()
    b2 = model.b2.copy()
    _, cache = _forward_loss(w1, b1, w2, b2, xn, y)
    analytic = _backward(w2, cache)
    params = [w1, b1, w2, b2]

    def loss_fn() -> float:
        return _forward_loss(w1, b1, w2, b2, xn, y)[0]

    return max_relative_error(loss_fn, params, analytic, epsilon)


# ---------------------------------------------------------------------------
# Model container
# ---------------------------------------------------------------------------

_TENSOR_ORDER = ("feat_mean", "feat_std", "w1", "b1", "w2", "b2")


def save_model(path: str | os.PathLike, model: ClassifierModel) -> None:
    """Write the versioned binary model container.

    Layout: 8-byte magic "SSEGMDL1", uint32 little-endian JSON header
    length, the UTF-8 JSON header, then the tensors named in the header's
    "tensors" list as row-major little-endian float64.
    """
    header = {
        "architecture": model.architecture,
        "class_labels": list(model.class_labels),
        "dims": {
            "n_features": int(model.w1.shape[0]),
            "hidden_units": int(model.w1.shape[1]),
            "n_classes": 2,
        },
        "train_config": asdict(model.train_config) if model.train_config else None,
        "tensors": [
            {"name": name, "shape": list(getattr(model, name).shape)}
            for name in _TENSOR_ORDER
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MODEL_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name in _TENSOR_ORDER:
            fh.write(np.ascontiguousarray(getattr(model, name), dtype="<f8").tobytes())


def load_model(path: str | os.PathLike) -> ClassifierModel:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MODEL_MAGIC))
        if magic != _MODEL_MAGIC:
            raise DataError(f"{path}: not a model container (bad magic)")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        tensors = {}
        for spec in header["tensors"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(count * 8), dtype="<f8").astype(np.float64)
            tensors[spec["name"]] = data.reshape(shape)
    cfg = header.get("train_config")
    return ClassifierModel(
        architecture=header["architecture"],
        w1=tensors["w1"],
        b1=tensors["b1"],
        w2=tensors["w2"],
        b2=tensors["b2"],
        feat_mean=tensors["feat_mean"],
        feat_std=tensors["feat_std"],
        train_config=TrainConfig(**cfg) if cfg else None,
        class_labels=tuple(header["class_labels"]),
    )


# ---------------------------------------------------------------------------
# Scorer boundary
# ---------------------------------------------------------------------------

# A scorer maps region crops to predictions; the built-in model and the
# external CSV protocol both satisfy it.
Scorer = Callable[[Sequence[RegionCrop]], list[Prediction]]

REQUEST_MANIFEST = "request.csv"
SCORE_COLUMNS = ("crop_filename", "anomaly_probability")


def model_scorer(model: ClassifierModel) -> Scorer:
    def score(crops: Sequence[RegionCrop]) -> list[Prediction]:
        if not crops:
            return []
        return predict_batch(model, featurize_batch(crops))

    return score


def export_scoring_request(crops: Sequence[RegionCrop], out_dir: str | os.PathLike) -> str:
    """Write crop PNGs plus the request manifest for an external scorer."""
    os.makedirs(out_dir, exist_ok=True)
    names = []
    for crop in crops:
        save_rgb(os.path.join(out_dir, crop.filename), crop.pixels)
        names.append(crop.filename)
    request_path = os.path.join(out_dir, REQUEST_MANIFEST)
    with open(request_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["crop_filename"])
        for name in names:
            writer.writerow([name])
    return request_path


def load_external_scores(csv_path: str | os.PathLike) -> dict[str, float]:
    """Read a scorer's "crop_filename,anomaly_probability" CSV."""
    scores: dict[str, float] = {}
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != SCORE_COLUMNS:
            raise DataError(f"{csv_path}: expected header {','.join(SCORE_COLUMNS)}")
        for row in reader:
            if not row:
                continue
            if len(row) != 2:
                raise DataError(f"{csv_path}: malformed row {row!r}")
            p = float(row[1])
            if not 0.0 <= p <= 1.0:
                raise DataError(f"{csv_path}: probability {p} outside [0, 1]")
            scores[row[0]] = p
    return scores


def external_scorer(scores: dict[str, float]) -> Scorer:
    def score(crops: Sequence[RegionCrop]) -> list[Prediction]:
        out = []
        for crop in crops:
            if crop.filename not in scores:
                raise DataError(f"external scores missing entry for {crop.filename}")
            p = scores[crop.filename]
            label = ANOMALY if p > 0.5 else BENIGN
            prob = p if label == ANOMALY else 1.0 - p
            out.append(Prediction(label=label, probability=prob, scores=(1.0 - p, p)))
        return out

    return score
