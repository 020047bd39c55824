"""End-to-end anonymization: segment, noise, inpaint per category,
composite, harmonize; plus batch processing with a JSON manifest.

Per-stage seeds are derived from (run seed, stage, category name), so the
category processing order never changes results, and batch runs derive one
independent seed per image as base_seed XOR image_index.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import BaselineSpec, apply_baseline
from .config import PipelineConfig
from .errors import PipelineStageError, ValidationError
from .image import add_masked_laplace, composite, read_png, validate_image, write_png
from .models import (
    ConvFeatureExtractor,
    HashedTextEncoder,
    IdentityCodec,
    ModelBundle,
    RandomPersonEmbedder,
    SinusoidalStepEncoder,
    load_model,
    segment,
)
from .sampler import build_schedule, harmonize, inpaint
from .seeds import batch_seed, derive_seed


def _load_optional(path: str):
    return load_model(path) if path else None


def load_models(config: PipelineConfig) -> ModelBundle:
    """Build the model bundle from configured weight paths.

    Components with empty paths load as None; the stages that need them
    raise with the stage name if they are missing.
    """
    size = config.image_size
    if config.model_paths["codec"] in ("", "identity"):
        codec = IdentityCodec(size, size)
    else:
        codec = load_model(config.model_paths["codec"])
    return ModelBundle(
        segmenter=_load_optional(config.model_paths["segmenter"]),
        denoiser=_load_optional(config.model_paths["denoiser"]),
        codec=codec,
        text_encoder=HashedTextEncoder(dim=config.text_dim),
        step_encoder=SinusoidalStepEncoder(dim=config.step_dim, total_steps=config.schedule_steps),
    )


def load_feature_extractor(config: PipelineConfig):
    spec = config.model_paths["feature_extractor"]
    if spec.startswith("random:"):
        return ConvFeatureExtractor.random(seed=int(spec.split(":", 1)[1]))
    if not spec:
        return ConvFeatureExtractor.random()
    return load_model(spec)


def load_person_embedder(config: PipelineConfig):
    spec = config.model_paths["person_embedder"]
    if spec.startswith("random:"):
        return RandomPersonEmbedder.random(seed=int(spec.split(":", 1)[1]))
    return RandomPersonEmbedder.random()


def _schedule(config: PipelineConfig):
    return build_schedule(config.schedule_steps, config.schedule_kind, config.schedule_eta)


def _require(models: ModelBundle, name: str, stage: str):
    model = getattr(models, name)
    if model is None:
        raise PipelineStageError(stage, f"no {name} model configured")
    return model


def _inpaint_composite(x: np.ndarray, config: PipelineConfig, models: ModelBundle, seed: int) -> np.ndarray:
    x = validate_image(x)
    segmenter = _require(models, "segmenter", "segment")
    try:
        maskset = segment(segmenter, x)
        config.sensitive.check_subset_of(maskset)
    except Exception as e:
        raise PipelineStageError("segment", str(e)) from e

    _require(models, "denoiser", "inpaint")
    sched = _schedule(config)
    masks, fakes = [], []
    for name in config.sensitive.names:
        mask = maskset.mask_for(name)
        if not mask.any():
            continue  # zero-area category: skipped, composite leaves it uncovered
        try:
            noised = add_masked_laplace(x, mask, config.laplace_scale, derive_seed(seed, "laplace", name))
            fake = inpaint(mask, noised, config.prompts[name], models, sched, derive_seed(seed, "inpaint", name))
        except Exception as e:
            raise PipelineStageError(f"inpaint:{name}", str(e)) from e
        masks.append(mask)
        fakes.append(fake)

    try:
        coarse = composite(x, masks, fakes)
    except Exception as e:
        raise PipelineStageError("composite", str(e)) from e

    covered = np.zeros(x.shape[1:], dtype=np.int64)
    for m in masks:
        covered += m
    uncovered = covered == 0
    if not np.array_equal(coarse[:, uncovered], x[:, uncovered]):
        raise PipelineStageError("composite", "pixels outside all sensitive masks were modified")
    return coarse


def anonymize_without_harmonizer(x: np.ndarray, config: PipelineConfig, models: ModelBundle, seed: int | None = None) -> np.ndarray:
    """The pipeline minus the final harmonizer pass."""
    return _inpaint_composite(x, config, models, config.seed if seed is None else seed)


def anonymize(
    x: np.ndarray,
    config: PipelineConfig,
    models: ModelBundle,
    seed: int | None = None,
    collect: dict | None = None,
) -> np.ndarray:
    """Full pipeline. `collect`, when given, receives the pre-harmonizer
    composite under the key "composite"."""
    seed = config.seed if seed is None else seed
    coarse = _inpaint_composite(x, config, models, seed)
    if collect is not None:
        collect["composite"] = coarse
    try:
        return harmonize(
            coarse,
            config.harmonizer_prompt,
            config.strength,
            models,
            _schedule(config),
            derive_seed(seed, "harmonize"),
        )
    except Exception as e:
        raise PipelineStageError("harmonize", str(e)) from e


def apply_baseline_anonymization(x: np.ndarray, config: PipelineConfig, models: ModelBundle, spec: BaselineSpec) -> np.ndarray:
    """Model-free baseline applied to the union of sensitive-category masks."""
    x = validate_image(x)
    segmenter = _require(models, "segmenter", "segment")
    try:
        maskset = segment(segmenter, x)
        config.sensitive.check_subset_of(maskset)
        union = maskset.union(config.sensitive.names)
    except Exception as e:
        raise PipelineStageError("segment", str(e)) from e
    return apply_baseline(x, union, spec)


@dataclass
class ResultManifest:
    config_hash: str
    base_seed: int
    records: list[dict] = field(default_factory=list)
    metrics: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "config_hash": self.config_hash,
                "base_seed": self.base_seed,
                "records": self.records,
                "metrics": self.metrics,
            },
            indent=2,
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "ResultManifest":
        data = json.loads(Path(path).read_text())
        return cls(
            config_hash=data["config_hash"],
            base_seed=data["base_seed"],
            records=data["records"],
            metrics=data.get("metrics", {}),
        )


def _input_images(input_dir: Path) -> list[Path]:
    images_dir = input_dir / "images"
    root = images_dir if images_dir.is_dir() else input_dir
    return sorted(root.glob("*.png"))


def anonymize_batch(
    input_dir: str | Path,
    output_dir: str | Path,
    config: PipelineConfig,
    models: ModelBundle | None = None,
    workers: int = 1,
    baseline: BaselineSpec | None = None,
    no_harmonizer: bool = False,
) -> ResultManifest:
    """Process every image under input_dir; write outputs and manifest.json.

    Unreadable or failing images produce an error record and processing
    continues. Outputs keep their input filenames.
    """
    input_dir = Path(input_dir)
    output_dir = Path(output_dir)
    if not input_dir.exists():
        raise ValidationError(f"input directory does not exist: {input_dir}")
    if workers < 1:
        raise ValidationError("workers must be >= 1")
    output_dir.mkdir(parents=True, exist_ok=True)
    if models is None:
        models = load_models(config)
    files = _input_images(input_dir)
    manifest = ResultManifest(config_hash=config.hash, base_seed=config.seed)

    def process(item: tuple[int, Path]) -> dict:
        index, path = item
        seed = batch_seed(config.seed, index)
        out_path = output_dir / path.name
        record = {
            "input": str(path),
            "output": str(out_path),
            "index": index,
            "seed": seed,
            "config_hash": config.hash,
            "wall_time_s": None,
            "error": None,
        }
        start = time.perf_counter()
        try:
            x = read_png(path)
            if baseline is not None:
                out = apply_baseline_anonymization(x, config, models, baseline)
            elif no_harmonizer:
                out = anonymize_without_harmonizer(x, config, models, seed=seed)
            else:
                out = anonymize(x, config, models, seed=seed)
            write_png(out_path, out)
        except Exception as e:  # record and continue with remaining images
            record["error"] = f"{type(e).__name__}: {e}"
            record["output"] = None
        record["wall_time_s"] = time.perf_counter() - start
        return record

    items = list(enumerate(files))
    if workers == 1:
        results = [process(it) for it in items]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(process, items))
    manifest.records = sorted(results, key=lambda r: r["index"])
    (output_dir / "manifest.json").write_text(manifest.to_json() + "\n")
    return manifest
