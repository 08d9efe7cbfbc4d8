"""Metric suite and the object-level vs sub-component strategy comparison.

The anomaly class is positive throughout. TP rate is anomaly recall
tp/(tp+fn) and FP rate the false-alarm rate fp/(fp+tn); all rates are
reported as fractions in [0, 1].
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import classify, isolate, regions, slic, synthgen
from .classify import ANOMALY, BENIGN, ClassifierModel, Prediction, Scorer, TrainConfig
from .color import srgb_to_lab
from .errors import DataError, ParameterError
from .pngio import load_rgb
from .slic import SlicParams

OBJECT = regions.OBJECT_LEVEL
SUBCOMPONENT = regions.SUBCOMPONENT_LEVEL

TABLE_COLUMNS = ("strategy", "granularity", "A", "P", "F1", "TP", "FP", "tp", "fp", "tn", "fn")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn
        )


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    f1: float
    tp_rate: float
    fp_rate: float
    counts: ConfusionCounts
    strategy: str = ""
    granularity: str = ""


def compute_metrics(
    counts: ConfusionCounts, strategy: str = "", granularity: str = ""
) -> MetricsReport:
    """Accuracy, precision, F1, TP rate and FP rate from raw counts.

    Zero-denominator conventions: precision, TP rate and FP rate are 0
    when their denominators vanish; F1 is 0 when precision + recall is 0.
    """
    if counts.total < 1:
        raise DataError("cannot compute metrics over empty counts")
    tp, fp, tn, fn = counts.tp, counts.fp, counts.tn, counts.fn
    accuracy = (tp + tn) / counts.total
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    tp_rate = tp / (tp + fn) if tp + fn > 0 else 0.0
    fp_rate = fp / (fp + tn) if fp + tn > 0 else 0.0
    f1 = 2 * precision * tp_rate / (precision + tp_rate) if precision + tp_rate > 0 else 0.0
    return MetricsReport(
        accuracy=accuracy,
        precision=precision,
        f1=f1,
        tp_rate=tp_rate,
        fp_rate=fp_rate,
        counts=counts,
        strategy=strategy,
        granularity=granularity,
    )


def confusion_from_pairs(truth: Sequence[str], predicted: Sequence[str]) -> ConfusionCounts:
    if len(truth) != len(predicted):
        raise ParameterError("truth and prediction lengths differ")
    tp = fp = tn = fn = 0
    for t, p in zip(truth, predicted):
        if t == ANOMALY and p == ANOMALY:
            tp += 1
        elif t == BENIGN and p == ANOMALY:
            fp += 1
        elif t == BENIGN and p == BENIGN:
            tn += 1
        else:
            fn += 1
    return ConfusionCounts(tp, fp, tn, fn)


def image_decision(
    preds: Sequence[Prediction], rule: str = "any", tau: float | None = None
) -> str:
    """Aggregate one image's region predictions into a single decision.

    "any": anomalous if at least one region is; "fraction": anomalous if
    the anomalous-region fraction reaches tau.
    """
    if len(preds) == 0:
        raise DataError("image decision requires at least one region prediction")
    n_anomalous = sum(1 for p in preds if p.label == ANOMALY)
    if rule == "any":
        return ANOMALY if n_anomalous >= 1 else BENIGN
    if rule == "fraction":
        if tau is None or not 0 < tau <= 1:
            raise ParameterError("fraction rule requires tau in (0, 1]")
        return ANOMALY if n_anomalous / len(preds) >= tau else BENIGN
    raise ParameterError(f"unknown decision rule {rule!r}")


# ---------------------------------------------------------------------------
# Per-image pipeline
# ---------------------------------------------------------------------------


@dataclass
class ImageRegions:
    """Everything one image contributes to either strategy."""

    image_id: str
    image_label: str
    object_crop: regions.RegionCrop
    object_truth: str
    sub_crops: list[regions.RegionCrop]
    sub_truths: list[str]
    spmap: slic.SuperpixelMap
    seconds: float


def process_image(
    img: np.ndarray,
    gt: synthgen.GroundTruth,
    image_id: str,
    slic_params: SlicParams,
    tau: float,
) -> ImageRegions:
    """Run both segmentation strategies over one image.

    The object crop comes straight from the object mask; the sub-component
    crops come from superpixels of the isolated (masked, white-filled)
    image, background excluded from clustering.
    """
    start = time.perf_counter()
    object_crop = regions.extract_object_region(img, gt.object_mask, image_id)
    (object_truth,) = synthgen.label_regions([object_crop], gt, tau)
    masked = isolate.apply_mask(img, gt.object_mask)
    lab = srgb_to_lab(masked)
    spmap, _, _ = slic.segment(lab, slic_params, mask=gt.object_mask)
    sub_crops = regions.extract_subcomponent_regions(masked, spmap, image_id)
    sub_truths = synthgen.label_regions(sub_crops, gt, tau, spmap)
    return ImageRegions(
        image_id=image_id,
        image_label=gt.image_label,
        object_crop=object_crop,
        object_truth=object_truth,
        sub_crops=sub_crops,
        sub_truths=sub_truths,
        spmap=spmap,
        seconds=time.perf_counter() - start,
    )


# ---------------------------------------------------------------------------
# Strategy comparison
# ---------------------------------------------------------------------------


@dataclass
class ComparisonResult:
    reports: list[MetricsReport]
    per_image_seconds: list[tuple[str, float]] = field(default_factory=list)
    models: dict[str, ClassifierModel] = field(default_factory=dict)

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(",".join(TABLE_COLUMNS) + "\n")
        for r in self.reports:
            c = r.counts
            out.write(
                f"{r.strategy},{r.granularity},{r.accuracy:.6f},{r.precision:.6f},"
                f"{r.f1:.6f},{r.tp_rate:.6f},{r.fp_rate:.6f},{c.tp},{c.fp},{c.tn},{c.fn}\n"
            )
        return out.getvalue()

    def to_text(self) -> str:
        rows = [list(TABLE_COLUMNS)]
        for r in self.reports:
            c = r.counts
            rows.append(
                [
                    r.strategy,
                    r.granularity,
                    f"{r.accuracy:.4f}",
                    f"{r.precision:.4f}",
                    f"{r.f1:.4f}",
                    f"{r.tp_rate:.4f}",
                    f"{r.fp_rate:.4f}",
                    str(c.tp),
                    str(c.fp),
                    str(c.tn),
                    str(c.fn),
                ]
            )
        widths = [max(len(row[i]) for row in rows) for i in range(len(TABLE_COLUMNS))]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
        return "\n".join(lines) + "\n"


def _require_both_classes(truths: Sequence[str], what: str) -> None:
    kinds = set(truths)
    if len(kinds) < 2:
        raise DataError(f"single-class dataset: {what} has only {kinds or '{nothing}'}")


def collect_regions(
    records: Sequence[synthgen.ManifestRecord],
    slic_params: SlicParams,
    tau: float,
    progress=None,
) -> list[ImageRegions]:
    out = []
    for rec in records:
        img = load_rgb(rec.image_path)
        gt = synthgen.load_ground_truth(rec)
        if gt.object_mask.shape != img.shape[:2]:
            raise DataError(f"{rec.image_id}: mask and image dimensions differ")
        out.append(process_image(img, gt, rec.image_id, slic_params, tau))
        if progress is not None:
            progress(out[-1])
    return out


def _evaluate_strategy(
    strategy: str,
    test_items: Sequence[ImageRegions],
    scorer: Scorer,
    decision_rule: str,
    decision_tau: float | None,
) -> tuple[MetricsReport, MetricsReport]:
    region_truth: list[str] = []
    region_pred: list[str] = []
    image_truth: list[str] = []
    image_pred: list[str] = []
    for item in test_items:
        crops = [item.object_crop] if strategy == OBJECT else item.sub_crops
        truths = [item.object_truth] if strategy == OBJECT else item.sub_truths
        preds = scorer(crops)
        region_truth.extend(truths)
        region_pred.extend(p.label for p in preds)
        image_truth.append(item.image_label)
        image_pred.append(image_decision(preds, decision_rule, decision_tau))
    region = compute_metrics(
        confusion_from_pairs(region_truth, region_pred), strategy, "region"
    )
    image = compute_metrics(confusion_from_pairs(image_truth, image_pred), strategy, "image")
    return region, image


def train_strategy_model(
    train_items: Sequence[ImageRegions],
    strategy: str,
    train_config: TrainConfig,
    hidden_units: int = 32,
) -> tuple[ClassifierModel, list[float]]:
    """Featurize a strategy's training regions and fit the classifier."""
    if strategy == OBJECT:
        crops = [item.object_crop for item in train_items]
        truths = [item.object_truth for item in train_items]
    elif strategy == SUBCOMPONENT:
        crops = [c for item in train_items for c in item.sub_crops]
        truths = [t for item in train_items for t in item.sub_truths]
    else:
        raise ParameterError(f"unknown strategy {strategy!r}")
    _require_both_classes(truths, f"{strategy} train split")
    features = classify.featurize_batch(crops)
    return classify.train(features, truths, train_config, hidden_units)


def run_comparison(
    manifest_path: str,
    slic_params: SlicParams,
    train_config: TrainConfig,
    tau: float = 0.25,
    decision_rule: str = "any",
    decision_tau: float | None = None,
    hidden_units: int = 32,
    scorers: dict[str, Scorer] | None = None,
    progress=None,
) -> ComparisonResult:
    """Train one classifier per strategy and evaluate both on the test split.

    Each strategy is scored at region granularity (every crop) and image
    granularity (region predictions folded through image_decision).
    Pre-built scorers, keyed by strategy, bypass training for that
    strategy. Returns the four reports in table order plus per-image
    pipeline timings.
    """
    records = synthgen.load_manifest(manifest_path)
    train_records = [r for r in records if r.split == "train"]
    test_records = [r for r in records if r.split == "test"]
    if not train_records and scorers is None:
        raise DataError("manifest has no train split")
    if not test_records:
        raise DataError("manifest has no test split")

    scorers = dict(scorers or {})
    models: dict[str, ClassifierModel] = {}
    need_training = [s for s in (OBJECT, SUBCOMPONENT) if s not in scorers]
    train_items = (
        collect_regions(train_records, slic_params, tau, progress) if need_training else []
    )
    for strategy in need_training:
        model, _ = train_strategy_model(train_items, strategy, train_config, hidden_units)
        models[strategy] = model
        scorers[strategy] = classify.model_scorer(model)

    test_items = collect_regions(test_records, slic_params, tau, progress)

    reports: list[MetricsReport] = []
    for strategy in (OBJECT, SUBCOMPONENT):
        region, image = _evaluate_strategy(
            strategy, test_items, scorers[strategy], decision_rule, decision_tau
        )
        reports.extend([region, image])
    timings = [(item.image_id, item.seconds) for item in train_items + test_items]
    return ComparisonResult(reports=reports, per_image_seconds=timings, models=models)
