"""Object-level vs superpixel-level segmentation strategies for
intra-object anomaly detection, with a synthetic benchmark harness."""

from .classify import (
    ANOMALY,
    BENIGN,
    ClassifierModel,
    Prediction,
    TrainConfig,
    featurize,
    gradient_check,
    load_model,
    predict,
    save_model,
    train,
)
from .color import lab_gradient, srgb_to_lab
from .errors import DataError, ParameterError, SubsegError
from .evaluation import (
    ComparisonResult,
    ConfusionCounts,
    MetricsReport,
    compute_metrics,
    image_decision,
    run_comparison,
)
from .isolate import apply_mask, load_mask, threshold_segment
from .regions import (
    OBJECT_LEVEL,
    SUBCOMPONENT_LEVEL,
    RegionCrop,
    extract_object_region,
    extract_subcomponent_regions,
    pad_rescale,
)
from .render import OverlaySpec, draw_labeled_contours, draw_segment_contours
from .slic import (
    BACKGROUND,
    ClusterCenter,
    SlicParams,
    SuperpixelMap,
    enforce_connectivity,
    init_centers,
    labxy_distance,
    segment,
)
from .synthgen import GroundTruth, SynthConfig, generate_dataset, label_regions, load_manifest

__version__ = "0.1.0"

__all__ = [
    "ANOMALY",
    "BENIGN",
    "BACKGROUND",
    "ClassifierModel",
    "ClusterCenter",
    "ComparisonResult",
    "ConfusionCounts",
    "DataError",
    "GroundTruth",
    "MetricsReport",
    "OBJECT_LEVEL",
    "OverlaySpec",
    "ParameterError",
    "Prediction",
    "RegionCrop",
    "SUBCOMPONENT_LEVEL",
    "SlicParams",
    "SubsegError",
    "SuperpixelMap",
    "SynthConfig",
    "TrainConfig",
    "apply_mask",
    "compute_metrics",
    "draw_labeled_contours",
    "draw_segment_contours",
    "enforce_connectivity",
    "extract_object_region",
    "extract_subcomponent_regions",
    "featurize",
    "generate_dataset",
    "gradient_check",
    "image_decision",
    "init_centers",
    "lab_gradient",
    "label_regions",
    "labxy_distance",
    "load_manifest",
    "load_mask",
    "load_model",
    "pad_rescale",
    "predict",
    "run_comparison",
    "save_model",
    "segment",
    "srgb_to_lab",
    "threshold_segment",
    "train",
]
