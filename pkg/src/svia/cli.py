"""Command-line interface: anonymize, train, evaluate, gen-data."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .baselines import BaselineSpec
from .config import PipelineConfig
from .errors import SviaError
from .models import KINDS, train_component
from .pipeline import anonymize_batch
from .report import evaluate_methods
from .synthetic import generate_dataset

_COMPONENT_PATH_KEYS = {
    "segmenter": "segmenter",
    "denoiser": "denoiser",
    "codec": "codec",
    "city_classifier": "classifier",
    "feature_extractor": "feature_extractor",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="svia", description="Street-view image anonymization pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("anonymize", help="anonymize a directory of images")
    p.add_argument("--input", required=True, help="input dataset directory")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--config", default=None, help="flat key=value config file")
    p.add_argument("--no-harmonizer", action="store_true", help="skip the final harmonizer pass")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--baseline", choices=("blur", "pixelate", "graymask"), default=None)

    p = sub.add_parser("train", help="train a pipeline component")
    p.add_argument("--component", required=True, choices=KINDS)
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None, help="weight file path (default: the configured model path)")
    p.add_argument("--seed", type=int, default=None, help="training seed (default: config seed)")

    p = sub.add_parser("evaluate", help="compute the metric report for anonymized outputs")
    p.add_argument("--original", required=True)
    p.add_argument(
        "--anonymized",
        action="append",
        required=True,
        metavar="[NAME=]DIR",
        help="anonymized output dir; repeat for several methods",
    )
    p.add_argument("--config", default=None)
    p.add_argument("--report", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n-images", type=int, required=True)
    p.add_argument("--n-cities", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--style-jitter", type=float, default=0.0)

    p = sub.add_parser("convert-cityscapes", help="convert a Cityscapes-format tree to the dataset layout")
    p.add_argument("--images", required=True, help="leftImg8bit root")
    p.add_argument("--labels", required=True, help="gtFine root")
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=None, help="optional square downscale")
    return parser


def _cmd_anonymize(args) -> int:
    config = PipelineConfig.load(args.config)
    baseline = BaselineSpec(kind=args.baseline) if args.baseline else None
    manifest = anonymize_batch(
        args.input,
        args.output,
        config,
        workers=args.workers,
        baseline=baseline,
        no_harmonizer=args.no_harmonizer,
    )
    errors = [r for r in manifest.records if r["error"]]
    print(f"processed {len(manifest.records)} images ({len(errors)} errors) -> {args.output}")
    for r in errors:
        print(f"  error: {r['input']}: {r['error']}", file=sys.stderr)
    return 0


def _cmd_train(args) -> int:
    config = PipelineConfig.load(args.config)
    out = args.out or config.model_paths[_COMPONENT_PATH_KEYS[args.component]]
    if not out or out == "identity":
        raise SviaError(f"no output path: pass --out or set models.{_COMPONENT_PATH_KEYS[args.component]}")
    seed = config.seed if args.seed is None else args.seed
    path = train_component(args.component, args.dataset, config, seed, out)
    log = json.loads(Path(path).with_suffix(".trainlog.json").read_text())
    first, last = log["epochs"][0]["loss"], log["epochs"][-1]["loss"]
    print(f"trained {args.component}: loss {first:.5f} -> {last:.5f}, weights at {path}")
    return 0


def _cmd_evaluate(args) -> int:
    config = PipelineConfig.load(args.config)
    method_dirs = {}
    for spec in args.anonymized:
        if "=" in spec:
            name, d = spec.split("=", 1)
        else:
            name, d = Path(spec).name, spec
        method_dirs[name] = d
    report = evaluate_methods(args.original, method_dirs, config, report_path=args.report)
    for metric in ("fid", "kid", "lpips", "persim", "acr@1"):
        row = ", ".join(f"{m}: {v}" for m, v in report["formatted"][metric].items())
        print(f"{metric:7s} {row}")
    print(f"report written to {args.report}")
    return 0


def _cmd_gen_data(args) -> int:
    layout = generate_dataset(
        n_images=args.n_images,
        n_cities=args.n_cities,
        size=(args.size, args.size),
        seed=args.seed,
        out_dir=args.out,
        style_jitter=args.style_jitter,
    )
    print(f"wrote {args.n_images} scenes ({args.n_cities} cities) under {layout.root}")
    return 0


def _cmd_convert_cityscapes(args) -> int:
    from .convert import convert_cityscapes

    layout = convert_cityscapes(args.images, args.labels, args.out, size=args.size)
    n = len(list(layout.images_dir.glob("*.png")))
    print(f"converted {n} annotated images into {layout.root}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "anonymize": _cmd_anonymize,
        "train": _cmd_train,
        "evaluate": _cmd_evaluate,
        "gen-data": _cmd_gen_data,
        "convert-cityscapes": _cmd_convert_cityscapes,
    }
    try:
        return handlers[args.command](args)
    except SviaError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
