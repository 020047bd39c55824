"""Assembles the evaluation report for one or more anonymization methods.

Each method directory holds PNG outputs named like the originals. The
report carries per-metric values, sample counts, extractor ids, the KID
bootstrap SE, and per-metric ranks formatted as "value (rank)". Quality
metrics (FID, KID) rank lower-is-better; LPIPS ranks higher-is-better;
PerSim and ACR rank lower-is-better (stronger privacy).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .errors import ValidationError
from .image import read_png
from .metrics import FeatureSet, acr_at_k, extract_features, fid, kid, kid_bootstrap, lpips, persim
from .pipeline import load_feature_extractor, load_person_embedder
from .models import load_model
from .seeds import derive_seed
from .synthetic import CATEGORIES, PERSON, load_dataset


def _rank(values: dict[str, float | None], reverse: bool) -> dict[str, int | None]:
    scored = [(name, v) for name, v in values.items() if v is not None]
    scored.sort(key=lambda kv: kv[1], reverse=reverse)
    ranks: dict[str, int | None] = {name: None for name in values}
    for i, (name, _) in enumerate(scored, start=1):
        ranks[name] = i
    return ranks


def _formatted(values: dict[str, float | None], ranks: dict[str, int | None]) -> dict[str, str]:
    out = {}
    for name, v in values.items():
        if v is None:
            out[name] = "n/a"
        else:
            out[name] = f"{v:.4f} ({ranks[name]})" if ranks[name] else f"{v:.4f}"
    return out


def evaluate_methods(
    original_root: str | Path,
    method_dirs: dict[str, str | Path],
    config: PipelineConfig,
    report_path: str | Path | None = None,
) -> dict:
    records = load_dataset(original_root)
    if not records:
        raise ValidationError(f"no originals found under {original_root}")
    by_name = {r.filename: r for r in records}
    extractor = load_feature_extractor(config)
    embedder = load_person_embedder(config)
    classifier = None
    if config.model_paths["classifier"]:
        classifier = load_model(config.model_paths["classifier"])

    pooled_cache: dict[str, np.ndarray] = {}

    def orig_features(names: list[str]) -> FeatureSet:
        for n in names:
            if n not in pooled_cache:
                pooled_cache[n] = extractor.pooled(by_name[n].image)
        return FeatureSet(np.stack([pooled_cache[n] for n in names]), extractor.extractor_id)

    kid_resamples = int(config.flat["metrics.kid_resamples"])
    methods: dict[str, dict] = {}
    for method, d in method_dirs.items():
        d = Path(d)
        files = [p for p in sorted(d.glob("*.png")) if p.name in by_name]
        if len(files) < 2:
            raise ValidationError(f"method {method!r}: fewer than 2 outputs matching originals in {d}")
        names = [p.name for p in files]
        anon = [read_png(p) for p in files]
        feats_orig = orig_features(names)
        feats_anon = extract_features(anon, extractor)

        kid_value = kid(feats_orig, feats_anon)
        _, kid_se = kid_bootstrap(
            feats_orig, feats_anon, n_resamples=kid_resamples, seed=derive_seed(config.seed, "kid", method)
        )
        lpips_vals = [lpips(by_name[n].image, img, extractor) for n, img in zip(names, anon)]

        persim_vals = []
        for n, img in zip(names, anon):
            rec = by_name[n]
            mask = (rec.labels == PERSON).astype(np.uint8)
            value = persim(rec.image, img, mask, embedder, min_area=config.person_min_area)
            if value is not None:
                persim_vals.append(value)

        entry = {
            "n_images": len(files),
            "fid": fid(feats_orig, feats_anon),
            "kid": kid_value,
            "kid_se": kid_se,
            "kid_resamples": kid_resamples,
            "lpips_mean": float(np.mean(lpips_vals)),
            "persim_mean": float(np.mean(persim_vals)) if persim_vals else None,
            "persim_images": len(persim_vals),
        }

        labels = [by_name[n].city_id for n in names]
        if classifier is not None and all(c >= 0 for c in labels):
            top = min(4, classifier.n_cities)
            entry["acr"] = {f"acr@{k}": acr_at_k(anon, labels, classifier, k) for k in range(1, top + 1)}
        else:
            entry["acr"] = None
        methods[method] = entry

    rankings = {
        "fid": _rank({m: e["fid"] for m, e in methods.items()}, reverse=False),
        "kid": _rank({m: e["kid"] for m, e in methods.items()}, reverse=False),
        "lpips": _rank({m: e["lpips_mean"] for m, e in methods.items()}, reverse=True),
        "persim": _rank({m: e["persim_mean"] for m, e in methods.items()}, reverse=False),
        "acr@1": _rank(
            {m: (e["acr"] or {}).get("acr@1") for m, e in methods.items()}, reverse=False
        ),
    }
    formatted = {
        "fid": _formatted({m: e["fid"] for m, e in methods.items()}, rankings["fid"]),
        "kid": _formatted({m: e["kid"] for m, e in methods.items()}, rankings["kid"]),
        "lpips": _formatted({m: e["lpips_mean"] for m, e in methods.items()}, rankings["lpips"]),
        "persim": _formatted({m: e["persim_mean"] for m, e in methods.items()}, rankings["persim"]),
        "acr@1": _formatted({m: (e["acr"] or {}).get("acr@1") for m, e in methods.items()}, rankings["acr@1"]),
    }

    report = {
        "original": str(original_root),
        "extractor_id": extractor.extractor_id,
        "categories": list(CATEGORIES),
        "config_hash": config.hash,
        "methods": methods,
        "rankings": rankings,
        "formatted": formatted,
    }
    if report_path is not None:
        Path(report_path).parent.mkdir(parents=True, exist_ok=True)
        Path(report_path).write_text(json.dumps(report, indent=2) + "\n")
    return report
