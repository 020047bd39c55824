"""Session fixtures: synthetic datasets, trained components, pipeline runs.

Training is expensive (minutes), so artifacts are cached on disk under
SVIA_TEST_CACHE (or a session tmp dir when unset), keyed by a fingerprint
of everything that influences them. Delete the cache dir for a cold run.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from svia.config import PipelineConfig, load_flat_config, write_config
from svia.models import train_component
from svia.pipeline import anonymize_batch, load_models
from svia.baselines import BaselineSpec
from svia.synthetic import generate_dataset, load_dataset

TRAIN_SEED = 7
DATASETS = {
    # name: (n_images, n_cities, seed, style_jitter)
    "train": (500, 8, 101, 0.0),
    "test": (100, 8, 202, 0.0),
    "generic": (500, 8, 303, 1.0),
}
COMPONENTS = {
    # kind: (dataset name, weight filename)
    "segmenter": ("train", "segmenter.svw"),
    "city_classifier": ("train", "classifier.svw"),
    "feature_extractor": ("train", "extractor.svw"),
    "denoiser": ("generic", "denoiser.svw"),
    "codec": ("train", "codec.svw"),
}


def _fingerprint() -> str:
    flat = {k: v for k, v in load_flat_config(None).items() if not k.startswith("models.")}
    payload = json.dumps({"flat": flat, "datasets": DATASETS, "train_seed": TRAIN_SEED}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@pytest.fixture(scope="session")
def assets(tmp_path_factory):
    cache_env = os.environ.get("SVIA_TEST_CACHE")
    base = Path(cache_env) if cache_env else tmp_path_factory.mktemp("svia_cache")
    root = base / f"assets_{_fingerprint()}"
    root.mkdir(parents=True, exist_ok=True)

    for name, (n, k, seed, jitter) in DATASETS.items():
        if not (root / name / "meta.json").exists():
            generate_dataset(n, k, (64, 64), seed, root / name, style_jitter=jitter)

    flat = load_flat_config(None)
    flat["models.segmenter"] = str(root / "segmenter.svw")
    flat["models.denoiser"] = str(root / "denoiser.svw")
    flat["models.codec"] = str(root / "codec.svw")
    flat["models.classifier"] = str(root / "classifier.svw")
    flat["models.feature_extractor"] = str(root / "extractor.svw")
    config = PipelineConfig.from_flat(flat)

    timing_file = root / "train_timing.json"
    timings = json.loads(timing_file.read_text()) if timing_file.exists() else {}
    for kind, (ds, fname) in COMPONENTS.items():
        out = root / fname
        if out.exists():
            continue
        t0 = time.perf_counter()
        train_component(kind, root / ds, config, seed=TRAIN_SEED, out_path=out)
        timings[kind] = time.perf_counter() - t0
        timing_file.write_text(json.dumps(timings, indent=2))

    # The pipeline diffuses in pixel space by default; the trained codec is
    # exercised separately. Point the pipeline config at the identity codec.
    pipeline_flat = dict(flat)
    pipeline_flat["models.codec"] = "identity"
    config_path = root / "config.txt"
    write_config(config_path, pipeline_flat)

    # Faster schedule for the 100-image evaluation runs; the canonical d=50
    # config still backs the determinism and throughput criteria.
    eval_flat = dict(pipeline_flat)
    eval_flat["schedule.steps"] = "25"

    return SimpleNamespace(
        root=root,
        config=PipelineConfig.from_flat(pipeline_flat),
        config_path=config_path,
        eval_config=PipelineConfig.from_flat(eval_flat),
        datasets={name: root / name for name in DATASETS},
        weights={kind: root / fname for kind, (_, fname) in COMPONENTS.items()},
        train_timings=timings,
        test_records=load_dataset(root / "test"),
    )


@pytest.fixture(scope="session")
def trained_models(assets):
    return load_models(assets.config)


@pytest.fixture(scope="session")
def anonymized_runs(assets):
    """Anonymize the held-out test set with SVIA, its no-harmonizer ablation,
    and the three baselines, under the d=25 evaluation config; cached across
    sessions by config hash."""
    config = assets.eval_config
    models = load_models(config)
    runs_root = assets.root / "runs"
    runs_root.mkdir(exist_ok=True)
    methods = {
        "svia": {},
        "svia_no_harmonizer": {"no_harmonizer": True},
        "blur": {"baseline": BaselineSpec(kind="blur")},
        "pixelate": {"baseline": BaselineSpec(kind="pixelate")},
        "graymask": {"baseline": BaselineSpec(kind="graymask")},
    }
    timings = {}
    timing_file = runs_root / "run_timing.json"
    if timing_file.exists():
        timings = json.loads(timing_file.read_text())
    dirs = {}
    for name, kwargs in methods.items():
        out_dir = runs_root / name
        manifest_path = out_dir / "manifest.json"
        fresh = True
        if manifest_path.exists():
            manifest = json.loads(manifest_path.read_text())
            fresh = manifest.get("config_hash") != config.hash
        if fresh:
            t0 = time.perf_counter()
            anonymize_batch(assets.datasets["test"], out_dir, config, models=models, **kwargs)
            timings[name] = time.perf_counter() - t0
            timing_file.write_text(json.dumps(timings, indent=2))
        dirs[name] = out_dir
    return SimpleNamespace(dirs=dirs, timings=timings)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
