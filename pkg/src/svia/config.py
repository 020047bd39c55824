"""Flat key=value configuration files.

Lines are `namespaced.key = value`; `#` starts a comment; unknown keys are
rejected so typos fail loudly. Every effective setting (defaults included)
enters the config hash, which is recorded in manifests and weight files.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError
from .image import SensitiveCategorySet

DEFAULTS: dict[str, str] = {
    "seed": "0",
    "image.size": "64",
    "categories.sensitive": "person,vehicle,traffic_sign,road,building",
    "noise.laplace_scale": "0.25",
    "schedule.steps": "50",
    "schedule.kind": "linear",
    "schedule.eta": "0.0",
    "harmonizer.strength": "0.3",
    "harmonizer.prompt": "a coherent street view photo",
    "prompt.person": "a photo of pedestrians on a street",
    "prompt.vehicle": "a photo of a parked vehicle",
    "prompt.traffic_sign": "a photo of a traffic sign",
    "prompt.road": "a photo of an empty asphalt road",
    "prompt.building": "a photo of a generic building facade",
    "text.dim": "16",
    "step.dim": "32",
    "models.segmenter": "",
    "models.denoiser": "",
    "models.codec": "identity",
    "models.classifier": "",
    "models.feature_extractor": "random:17",
    "models.person_embedder": "random:23",
    "metrics.person_min_area": "4",
    "metrics.kid_resamples": "100",
    "train.segmenter.epochs": "12",
    "train.segmenter.batch_size": "16",
    "train.segmenter.lr": "2e-3",
    "train.city_classifier.epochs": "12",
    "train.city_classifier.batch_size": "32",
    "train.city_classifier.lr": "2e-3",
    "train.feature_extractor.epochs": "12",
    "train.feature_extractor.batch_size": "32",
    "train.feature_extractor.lr": "2e-3",
    "train.denoiser.epochs": "36",
    "train.denoiser.batch_size": "16",
    "train.denoiser.lr": "2e-3",
    "train.denoiser.harmonize_fraction": "0.3",
    "train.codec.epochs": "40",
    "train.codec.batch_size": "16",
    "train.codec.lr": "2e-3",
}


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ValidationError(f"config line {lineno}: empty key")
        if key in out:
            raise ValidationError(f"config line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def load_flat_config(path: str | Path | None) -> dict[str, str]:
    """Merge a config file over the defaults; unknown keys are errors."""
    flat = dict(DEFAULTS)
    if path is not None:
        overrides = parse_config_text(Path(path).read_text())
        unknown = sorted(set(overrides) - set(DEFAULTS))
        if unknown:
            raise ValidationError(f"unknown config keys: {unknown}")
        flat.update(overrides)
    return flat


def config_hash(flat: dict[str, str]) -> str:
    payload = "".join(f"{k}={flat[k]}\n" for k in sorted(flat))
    return hashlib.sha256(payload.encode()).hexdigest()


def write_config(path: str | Path, flat: dict[str, str]) -> None:
    Path(path).write_text("".join(f"{k} = {flat[k]}\n" for k in sorted(flat)))


def _as_float(flat, key) -> float:
    try:
        return float(flat[key])
    except ValueError:
        raise ValidationError(f"config {key}: not a number: {flat[key]!r}") from None


def _as_int(flat, key) -> int:
    try:
        return int(flat[key])
    except ValueError:
        raise ValidationError(f"config {key}: not an integer: {flat[key]!r}") from None


@dataclass
class PipelineConfig:
    """Typed view of the flat config used by the anonymization pipeline."""

    sensitive: SensitiveCategorySet
    laplace_scale: float
    prompts: dict[str, str]
    harmonizer_prompt: str
    schedule_steps: int
    schedule_kind: str
    schedule_eta: float
    strength: float
    seed: int
    image_size: int
    text_dim: int
    step_dim: int
    model_paths: dict[str, str]
    person_min_area: int
    flat: dict[str, str] = field(repr=False)

    @classmethod
    def from_flat(cls, flat: dict[str, str]) -> "PipelineConfig":
        names = tuple(n.strip() for n in flat["categories.sensitive"].split(",") if n.strip())
        sensitive = SensitiveCategorySet(names)
        prompts = {}
        for name in names:
            key = f"prompt.{name}"
            if key not in flat or not flat[key]:
                raise ValidationError(f"no prompt configured for sensitive category {name!r}")
            prompts[name] = flat[key]
        laplace_scale = _as_float(flat, "noise.laplace_scale")
        if laplace_scale <= 0:
            raise ValidationError("noise.laplace_scale must be > 0")
        strength = _as_float(flat, "harmonizer.strength")
        if not 0.0 < strength <= 1.0:
            raise ValidationError("harmonizer.strength must be in (0, 1]")
        return cls(
            sensitive=sensitive,
            laplace_scale=laplace_scale,
            prompts=prompts,
            harmonizer_prompt=flat["harmonizer.prompt"],
            schedule_steps=_as_int(flat, "schedule.steps"),
            schedule_kind=flat["schedule.kind"],
            schedule_eta=_as_float(flat, "schedule.eta"),
            strength=strength,
            seed=_as_int(flat, "seed"),
            image_size=_as_int(flat, "image.size"),
            text_dim=_as_int(flat, "text.dim"),
            step_dim=_as_int(flat, "step.dim"),
            model_paths={
                "segmenter": flat["models.segmenter"],
                "denoiser": flat["models.denoiser"],
                "codec": flat["models.codec"],
                "classifier": flat["models.classifier"],
                "feature_extractor": flat["models.feature_extractor"],
                "person_embedder": flat["models.person_embedder"],
            },
            person_min_area=_as_int(flat, "metrics.person_min_area"),
            flat=flat,
        )

    @classmethod
    def load(cls, path: str | Path | None) -> "PipelineConfig":
        return cls.from_flat(load_flat_config(path))

    @property
    def hash(self) -> str:
        return config_hash(self.flat)

    def train_params(self, kind: str) -> dict[str, float]:
        return {
            "epochs": _as_int(self.flat, f"train.{kind}.epochs"),
            "batch_size": _as_int(self.flat, f"train.{kind}.batch_size"),
            "lr": _as_float(self.flat, f"train.{kind}.lr"),
        }
