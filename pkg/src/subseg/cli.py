"""Command-line surface: gen, segment, train, eval, compare, render.

Option values resolve as flags > config file > built-in defaults. The
config file is flat key=value text (keys match the long flag names with
underscores) and can be named either with --config or through the
SUBSEG_CONFIG environment variable.

Exit codes: 0 success, 1 usage, 2 data/validation, 3 I/O.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import classify, evaluation, isolate, regions, render, slic, synthgen
from .classify import TrainConfig
from .errors import DataError, ParameterError
from .color import srgb_to_lab
from .pngio import load_rgb, save_rgb
from .slic import SlicParams
from .synthgen import SynthConfig

CONFIG_ENV_VAR = "SUBSEG_CONFIG"


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: A003 - argparse API
        raise ParameterError(message)


def _load_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParameterError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


class _Options:
    """Flag > config > default resolution over parsed argparse values."""

    def __init__(self, args: argparse.Namespace, config: dict[str, str]):
        self._args = args
        self._config = config

    def get(self, name: str, default, cast):
        flag_value = getattr(self._args, name, None)
        if flag_value is not None:
            return flag_value
        if name in self._config:
            raw = self._config[name]
            try:
                if cast is bool:
                    return raw.lower() in ("1", "true", "yes", "on")
                return cast(raw)
            except ValueError as exc:
                raise ParameterError(f"config value {name}={raw!r}: {exc}") from exc
        return default

    def require(self, name: str, cast, flag: str):
        value = self.get(name, None, cast)
        if value is None:
            raise ParameterError(f"missing required option {flag}")
        return value


def _slic_params(opt: _Options) -> SlicParams:
    return SlicParams(
        k=opt.require("k", int, "--k"),
        m=opt.get("m", 20.0, float),
        max_iters=opt.get("max_iters", 10, int),
        residual_threshold=opt.get("residual_threshold", 1.0, float),
        enforce_connectivity=opt.get("enforce_connectivity", True, bool),
        min_segment_fraction=opt.get("min_segment_fraction", 0.25, float),
    )


def _train_config(opt: _Options) -> TrainConfig:
    return TrainConfig(
        learning_rate=opt.get("lr", 0.001, float),
        momentum=opt.get("momentum", 0.9, float),
        batch_size=opt.get("batch_size", 64, int),
        epochs=opt.get("epochs", 30, int),
        rng_seed=opt.get("seed", 0, int),
        upsample_minority=opt.get("upsample_minority", True, bool),
        train_fraction=opt.get("train_fraction", 0.7, float),
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _cmd_gen(opt: _Options) -> int:
    n = opt.require("n", int, "--n")
    if n < 1:
        raise ParameterError("--n must be a positive integer")
    cfg = SynthConfig(
        n_images=n,
        image_w=opt.get("width", 512, int),
        image_h=opt.get("height", 512, int),
        anomaly_probability=opt.get("anomaly_prob", 0.5, float),
        anomaly_area_fraction=(
            opt.get("anomaly_min_frac", 0.002, float),
            opt.get("anomaly_max_frac", 0.02, float),
        ),
        noise_sigma=opt.get("noise_sigma", 5.0, float),
        texture_scale=opt.get("texture_scale", 1.0, float),
        rng_seed=opt.get("seed", 0, int),
    )
    out_dir = opt.require("out", str, "--out")
    manifest_path, records = synthgen.generate_dataset(
        cfg, out_dir, train_fraction=opt.get("train_frac", 0.7, float)
    )
    print(manifest_path)
    print(f"wrote {len(records)} images ({sum(r.split == 'train' for r in records)} train)")
    return 0


def _cmd_segment(opt: _Options) -> int:
    image_path = opt.require("image", str, "image")
    level = opt.get("level", regions.SUBCOMPONENT_LEVEL, str)
    out_dir = Path(opt.get("out", ".", str))
    os.makedirs(out_dir, exist_ok=True)
    stem = Path(image_path).stem
    img = load_rgb(image_path)

    if level == regions.OBJECT_LEVEL:
        mask = isolate.threshold_segment(img, opt.get("threshold", 30.0, float))
        mask_path = out_dir / f"{stem}_mask.png"
        isolate.save_mask(mask_path, mask)
        print(mask_path)
        if opt.get("render", False, bool):
            spmap = slic.SuperpixelMap(
                labels=np.where(mask, 0, slic.BACKGROUND).astype(np.int32), num_segments=1
            )
            overlay = render.draw_segment_contours(img, spmap)
            overlay_path = out_dir / f"{stem}_overlay.png"
            save_rgb(overlay_path, overlay)
            print(overlay_path)
        return 0

    if level != regions.SUBCOMPONENT_LEVEL:
        raise ParameterError(f"unknown level {level!r}")
    params = _slic_params(opt)
    mask_file = opt.get("mask", None, str)
    mask = isolate.load_mask(mask_file, expect_shape=img.shape[:2]) if mask_file else None
    working = isolate.apply_mask(img, mask) if mask is not None else img
    spmap, _, _ = slic.segment(srgb_to_lab(working), params, mask=mask)
    labels_path = out_dir / f"{stem}_labels.png"
    slic.save_superpixel_map(
        str(labels_path),
        spmap,
        params={
            "k": params.k,
            "m": params.m,
            "max_iters": params.max_iters,
            "residual_threshold": params.residual_threshold,
            "enforce_connectivity": params.enforce_connectivity,
            "min_segment_fraction": params.min_segment_fraction,
        },
    )
    print(labels_path)
    if opt.get("render", False, bool):
        overlay = render.draw_segment_contours(img, spmap)
        overlay_path = out_dir / f"{stem}_overlay.png"
        save_rgb(overlay_path, overlay)
        print(overlay_path)
    return 0


def _collect_for_strategy(opt: _Options, records, strategy: str):
    params = _slic_params(opt) if strategy == regions.SUBCOMPONENT_LEVEL else _dummy_params()
    return evaluation.collect_regions(records, params, opt.get("tau", 0.25, float))


def _dummy_params() -> SlicParams:
    return SlicParams(k=2)


def _cmd_train(opt: _Options) -> int:
    manifest = opt.require("manifest", str, "--manifest")
    strategy = opt.require("strategy", str, "--strategy")
    if strategy not in (regions.OBJECT_LEVEL, regions.SUBCOMPONENT_LEVEL):
        raise ParameterError(f"unknown strategy {strategy!r}")
    out_path = opt.require("out", str, "--out")
    records = [r for r in synthgen.load_manifest(manifest) if r.split == "train"]
    if not records:
        raise DataError("manifest has no train split")
    params = (
        _slic_params(opt) if strategy == regions.SUBCOMPONENT_LEVEL else _dummy_params()
    )
    items = evaluation.collect_regions(records, params, opt.get("tau", 0.25, float))
    config = _train_config(opt)
    model, loss_history = evaluation.train_strategy_model(
        items, strategy, config, hidden_units=opt.get("hidden_units", 32, int)
    )
    classify.save_model(out_path, model)
    print(out_path)
    print(f"epochs={len(loss_history)} first_loss={loss_history[0]:.6f} last_loss={loss_history[-1]:.6f}")
    return 0


def _cmd_eval(opt: _Options) -> int:
    manifest = opt.require("manifest", str, "--manifest")
    strategy = opt.require("strategy", str, "--strategy")
    if strategy not in (regions.OBJECT_LEVEL, regions.SUBCOMPONENT_LEVEL):
        raise ParameterError(f"unknown strategy {strategy!r}")
    records = [r for r in synthgen.load_manifest(manifest) if r.split == "test"]
    if not records:
        raise DataError("manifest has no test split")
    items = _collect_for_strategy(opt, records, strategy)

    export_dir = opt.get("export_crops", None, str)
    if export_dir is not None:
        crops = []
        for item in items:
            crops.extend([item.object_crop] if strategy == regions.OBJECT_LEVEL else item.sub_crops)
        request = classify.export_scoring_request(crops, export_dir)
        print(request)
        return 0

    scores_path = opt.get("external_scores", None, str)
    if scores_path is not None:
        scorer = classify.external_scorer(classify.load_external_scores(scores_path))
    else:
        model_path = opt.require("model", str, "--model")
        scorer = classify.model_scorer(classify.load_model(model_path))

    region_report, image_report = evaluation._evaluate_strategy(
        strategy,
        items,
        scorer,
        opt.get("decision_rule", "any", str),
        opt.get("decision_tau", None, float),
    )
    result = evaluation.ComparisonResult(reports=[region_report, image_report])
    sys.stdout.write(result.to_text())
    csv_path = opt.get("csv", None, str)
    if csv_path is not None:
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write(result.to_csv())
        print(csv_path)
    return 0


def _cmd_compare(opt: _Options) -> int:
    manifest = opt.require("manifest", str, "--manifest")
    out_dir = Path(opt.get("out", ".", str))
    os.makedirs(out_dir, exist_ok=True)
    show_timing = opt.get("timing", True, bool)

    def progress(item: evaluation.ImageRegions) -> None:
        if show_timing:
            print(f"{item.image_id}: {item.seconds * 1000.0:.1f} ms")

    start = time.perf_counter()
    result = evaluation.run_comparison(
        manifest,
        _slic_params(opt),
        _train_config(opt),
        tau=opt.get("tau", 0.25, float),
        decision_rule=opt.get("decision_rule", "any", str),
        decision_tau=opt.get("decision_tau", None, float),
        hidden_units=opt.get("hidden_units", 32, int),
        progress=progress,
    )
    elapsed = time.perf_counter() - start
    sys.stdout.write(result.to_text())
    if result.per_image_seconds:
        mean_ms = 1000.0 * sum(s for _, s in result.per_image_seconds) / len(
            result.per_image_seconds
        )
        print(f"mean per-image pipeline time: {mean_ms:.1f} ms (total {elapsed:.1f} s)")
    csv_path = out_dir / "comparison.csv"
    text_path = out_dir / "comparison.txt"
    csv_path.write_text(result.to_csv(), encoding="utf-8")
    text_path.write_text(result.to_text(), encoding="utf-8")
    print(csv_path)
    print(text_path)
    return 0


def _cmd_render(opt: _Options) -> int:
    image_path = opt.require("image", str, "image")
    map_path = opt.require("map", str, "--map")
    out_path = opt.require("out", str, "--out")
    img = load_rgb(image_path)
    spmap, _ = slic.load_superpixel_map(map_path)
    spec = render.OverlaySpec(contour_thickness=opt.get("thickness", 2, int))
    classes_path = opt.get("classes", None, str)
    if classes_path is not None:
        labels_by_segment: dict[int, str] = {}
        with open(classes_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("segment_id"):
                    continue
                sid, cls = line.split(",", 1)
                labels_by_segment[int(sid)] = cls.strip()
        out = render.draw_labeled_contours(img, spmap, labels_by_segment, spec)
    else:
        out = render.draw_segment_contours(img, spmap, spec)
    save_rgb(out_path, out)
    print(out_path)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_slic_flags(p: _Parser) -> None:
    p.add_argument("--k", type=int, help="desired superpixel count (required)")
    p.add_argument("--m", type=float, help="compactness weight (default 20)")
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--residual-threshold", dest="residual_threshold", type=float)
    p.add_argument(
        "--no-connectivity", dest="enforce_connectivity", action="store_false", default=None
    )
    p.add_argument("--min-segment-fraction", dest="min_segment_fraction", type=float)


def _add_train_flags(p: _Parser) -> None:
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--hidden-units", dest="hidden_units", type=int)
    p.add_argument(
        "--no-upsample", dest="upsample_minority", action="store_false", default=None
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="subseg", description=__doc__)
    parser.add_argument("--config", help="key=value config file")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--out")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--anomaly-prob", dest="anomaly_prob", type=float)
    p.add_argument("--anomaly-min-frac", dest="anomaly_min_frac", type=float)
    p.add_argument("--anomaly-max-frac", dest="anomaly_max_frac", type=float)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    p.add_argument("--texture-scale", dest="texture_scale", type=float)
    p.add_argument("--train-frac", dest="train_frac", type=float)

    p = sub.add_parser("segment", help="segment one image")
    p.add_argument("image")
    p.add_argument("--level", choices=[regions.OBJECT_LEVEL, regions.SUBCOMPONENT_LEVEL])
    p.add_argument("--threshold", type=float, help="object level: luminance threshold")
    p.add_argument("--mask", help="subcomponent level: isolate with this mask first")
    p.add_argument("--out")
    p.add_argument("--render", action="store_true", default=None)
    _add_slic_flags(p)

    p = sub.add_parser("train", help="train a region classifier")
    p.add_argument("--manifest")
    p.add_argument("--strategy", choices=[regions.OBJECT_LEVEL, regions.SUBCOMPONENT_LEVEL])
    p.add_argument("--out")
    p.add_argument("--tau", type=float)
    _add_slic_flags(p)
    _add_train_flags(p)

    p = sub.add_parser("eval", help="evaluate one strategy on the test split")
    p.add_argument("--manifest")
    p.add_argument("--strategy", choices=[regions.OBJECT_LEVEL, regions.SUBCOMPONENT_LEVEL])
    p.add_argument("--model")
    p.add_argument("--external-scores", dest="external_scores")
    p.add_argument("--export-crops", dest="export_crops")
    p.add_argument("--tau", type=float)
    p.add_argument("--decision-rule", dest="decision_rule", choices=["any", "fraction"])
    p.add_argument("--decision-tau", dest="decision_tau", type=float)
    p.add_argument("--csv")
    _add_slic_flags(p)

    p = sub.add_parser("compare", help="train and evaluate both strategies")
    p.add_argument("--manifest")
    p.add_argument("--out")
    p.add_argument("--tau", type=float)
    p.add_argument("--decision-rule", dest="decision_rule", choices=["any", "fraction"])
    p.add_argument("--decision-tau", dest="decision_tau", type=float)
    p.add_argument("--no-timing", dest="timing", action="store_false", default=None)
    _add_slic_flags(p)
    _add_train_flags(p)

    p = sub.add_parser("render", help="draw contour overlays")
    p.add_argument("image")
    p.add_argument("--map", help="serialized label map")
    p.add_argument("--classes", help="CSV of segment_id,label for colored contours")
    p.add_argument("--thickness", type=int)
    p.add_argument("--out")

    return parser


_HANDLERS = {
    "gen": _cmd_gen,
    "segment": _cmd_segment,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "compare": _cmd_compare,
    "render": _cmd_render,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise ParameterError("a command is required (gen, segment, train, eval, compare, render)")
        config_path = args.config or os.environ.get(CONFIG_ENV_VAR)
        config = _load_config_file(config_path) if config_path else {}
        return _HANDLERS[args.command](_Options(args, config))
    except ParameterError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


def run() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    run()
