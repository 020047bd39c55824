"""Numpy-facing model implementations over the torch nets.

Wrappers convert float64 arrays at the boundary, run the nets in eval mode
under no_grad (except Grad-CAM's gradient query), and serialize through the
single-file weight format. Weights are immutable after load.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import ValidationError
from ..image import MaskSet, extract_masks, validate_image
from .nets import ClassifierNet, CodecNet, DenoiserNet, EmbedderNet, SegmenterNet
from .weights import load_into_module, load_weights, module_arrays, save_weights


def _to_t(x: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(x, dtype=np.float32))


def _np(t: torch.Tensor) -> np.ndarray:
    return t.detach().cpu().numpy().astype(np.float64)


def _seeded(builder, seed: int):
    torch.manual_seed(int(seed) & 0x7FFFFFFF)
    module = builder()
    module.eval()
    return module


class ToySegmenter:
    arch = "segmenter_unet_v1"

    def __init__(self, module: SegmenterNet, category_names: list[str]):
        self.module = module.eval()
        self.category_names = list(category_names)
        self.n_categories = module.n_categories
        if len(self.category_names) != self.n_categories:
            raise ValidationError("segmenter category names do not match head size")

    @classmethod
    def random(cls, category_names: list[str], seed: int = 0, base: int = 16) -> "ToySegmenter":
        module = _seeded(lambda: SegmenterNet(len(category_names), base=base), seed)
        return cls(module, category_names)

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = validate_image(x)
        with torch.no_grad():
            scores = self.module(_to_t(x)[None])[0]
        return _np(scores)

    def dims(self) -> dict:
        return {"n_categories": self.n_categories, "base": self.module.base, "category_names": self.category_names}

    def save(self, path, seed: int = 0, config_hash: str = "") -> None:
        save_weights(path, module_arrays(self.module), self.arch, self.dims(), seed, config_hash)


def segment(model, x: np.ndarray) -> MaskSet:
    """One-hot masks from per-pixel argmax; ties go to the lowest index."""
    x = validate_image(x)
    scores = np.asarray(model.predict(x), dtype=np.float64)
    if scores.ndim != 3 or scores.shape[1:] != x.shape[1:]:
        raise ValidationError(f"segmenter scores shape {scores.shape} incompatible with image {x.shape}")
    if not np.isfinite(scores).all():
        raise ValidationError("segmenter produced non-finite scores")
    segmap = np.argmax(scores, axis=0)
    names = getattr(model, "category_names", None)
    return extract_masks(segmap, scores.shape[0], category_names=names)


class ToyDenoiser:
    arch = "denoiser_unet_v1"

    def __init__(self, module: DenoiserNet, lat_h: int, lat_w: int):
        self.module = module.eval()
        self.lat_h = lat_h
        self.lat_w = lat_w
        self.latent_channels = module.latent_channels

    @classmethod
    def random(cls, lat_h: int, lat_w: int, seed: int = 0, latent_channels: int = 3, base: int = 16, text_dim: int = 16, step_dim: int = 32) -> "ToyDenoiser":
        module = _seeded(lambda: DenoiserNet(latent_channels, base=base, text_dim=text_dim, step_dim=step_dim), seed)
        return cls(module, lat_h, lat_w)

    def _split(self, e_img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n_mask = self.lat_h * self.lat_w
        n_lat = self.latent_channels * n_mask
        if e_img.shape != (n_lat + n_mask,):
            raise ValidationError(f"e_img size {e_img.shape} incompatible with denoiser dims")
        ctx = e_img[:n_lat].reshape(self.latent_channels, self.lat_h, self.lat_w)
        mask = e_img[n_lat:].reshape(self.lat_h, self.lat_w)
        return ctx, mask

    def predict_noise(self, y: np.ndarray, step: int, e_s: np.ndarray, e_t: np.ndarray, e_img: np.ndarray) -> np.ndarray:
        ctx, mask = self._split(np.asarray(e_img, dtype=np.float64))
        y_sp = np.asarray(y, dtype=np.float64).reshape(self.latent_channels, self.lat_h, self.lat_w)
        with torch.no_grad():
            out = self.module(
                _to_t(y_sp)[None],
                _to_t(mask)[None, None],
                _to_t(ctx)[None],
                _to_t(np.asarray(e_t))[None],
                _to_t(np.asarray(e_s))[None],
            )[0]
        return _np(out).ravel()

    def dims(self) -> dict:
        return {
            "latent_channels": self.latent_channels,
            "lat_h": self.lat_h,
            "lat_w": self.lat_w,
            "base": self.module.base,
            "text_dim": self.module.text_dim,
            "step_dim": self.module.step_dim,
        }

    def save(self, path, seed: int = 0, config_hash: str = "") -> None:
        save_weights(path, module_arrays(self.module), self.arch, self.dims(), seed, config_hash)


class TrainedCodec:
    """Autoencoder codec plug-in; x4 downsampling, clamped decode."""

    arch = "codec_ae_v1"
    downsample_factor = CodecNet.downsample_factor

    def __init__(self, module: CodecNet, height: int, width: int):
        f = self.downsample_factor
        if height % f or width % f:
            raise ValidationError(f"image dims {height}x{width} not divisible by codec factor {f}")
        self.module = module.eval()
        self.height = height
        self.width = width
        self.latent_channels = module.latent_channels

    @classmethod
    def random(cls, height: int, width: int, seed: int = 0, latent_channels: int = 12, base: int = 24) -> "TrainedCodec":
        module = _seeded(lambda: CodecNet(latent_channels, base=base), seed)
        return cls(module, height, width)

    def latent_size(self, height: int, width: int) -> int:
        if (height, width) != (self.height, self.width):
            raise ValidationError(f"codec built for {self.height}x{self.width}, got {height}x{width}")
        f = self.downsample_factor
        return self.latent_channels * (height // f) * (width // f)

    def encode(self, image: np.ndarray) -> np.ndarray:
        image = validate_image(image)
        if image.shape[1:] != (self.height, self.width):
            raise ValidationError("codec: image dims mismatch")
        with torch.no_grad():
            z = self.module.encode(_to_t(image)[None])[0]
        return _np(z).ravel()

    def decode(self, latent: np.ndarray) -> np.ndarray:
        f = self.downsample_factor
        shape = (self.latent_channels, self.height // f, self.width // f)
        z = np.asarray(latent, dtype=np.float64)
        if z.shape != (int(np.prod(shape)),):
            raise ValidationError(f"latent size {z.shape} incompatible with codec dims")
        with torch.no_grad():
            x = self.module.decode(_to_t(z.reshape(shape))[None])[0]
        return np.clip(_np(x), 0.0, 1.0)

    def dims(self) -> dict:
        return {"latent_channels": self.latent_channels, "base": self.module.base, "height": self.height, "width": self.width}

    def save(self, path, seed: int = 0, config_hash: str = "") -> None:
        save_weights(path, module_arrays(self.module), self.arch, self.dims(), seed, config_hash)


class ToyCityClassifier:
    arch = "city_classifier_v1"

    def __init__(self, module: ClassifierNet):
        self.module = module.eval()
        self.n_cities = module.n_classes

    @classmethod
    def random(cls, n_cities: int, seed: int = 0, base: int = 16) -> "ToyCityClassifier":
        module = _seeded(lambda: ClassifierNet(n_cities, base=base), seed)
        return cls(module)

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = validate_image(x)
        with torch.no_grad():
            logits = self.module(_to_t(x)[None])[0]
        return _np(logits)

    def feature_maps(self, x: np.ndarray) -> np.ndarray:
        x = validate_image(x)
        with torch.no_grad():
            acts = self.module.stages(_to_t(x)[None])[-1][0]
        return _np(acts)

    def class_gradients(self, x: np.ndarray, class_idx: int) -> tuple[np.ndarray, np.ndarray]:
        """Last-stage activations and the gradient of the class score w.r.t. them."""
        x = validate_image(x)
        if not 0 <= class_idx < self.n_cities:
            raise ValidationError(f"class_idx {class_idx} outside [0, {self.n_cities})")
        with torch.enable_grad():
            acts = self.module.stages(_to_t(x)[None])[-1]
            score = self.module.fc(acts.mean(dim=(2, 3)))[0, class_idx]
            grads = torch.autograd.grad(score, acts)[0]
        return _np(acts[0]), _np(grads[0])

    def dims(self) -> dict:
        return {"n_cities": self.n_cities, "base": self.module.base}

    def save(self, path, seed: int = 0, config_hash: str = "") -> None:
        save_weights(path, module_arrays(self.module), self.arch, self.dims(), seed, config_hash)


class ConvFeatureExtractor:
    """Feature stages for FID/KID/LPIPS; random by default, trainable."""

    arch = "feature_extractor_v1"

    def __init__(self, module: ClassifierNet, extractor_id: str):
        self.module = module.eval()
        self.extractor_id = extractor_id

    @classmethod
    def random(cls, seed: int = 17, base: int = 16) -> "ConvFeatureExtractor":
        module = _seeded(lambda: ClassifierNet(n_classes=2, base=base), seed)
        return cls(module, extractor_id=f"toyconv_rand_s{seed}")

    @classmethod
    def from_classifier(cls, classifier: ToyCityClassifier, tag: str) -> "ConvFeatureExtractor":
        return cls(classifier.module, extractor_id=f"toyconv_trained_{tag}")

    def stage_maps(self, x: np.ndarray) -> list[np.ndarray]:
        x = validate_image(x)
        with torch.no_grad():
            stages = self.module.stages(_to_t(x)[None])
        return [_np(a[0]) for a in stages]

    def pooled(self, x: np.ndarray) -> np.ndarray:
        x = validate_image(x)
        with torch.no_grad():
            feats = self.module.features(_to_t(x)[None])[0]
        return _np(feats)

    def dims(self) -> dict:
        return {"n_cities": self.module.n_classes, "base": self.module.base, "extractor_id": self.extractor_id}

    def save(self, path, seed: int = 0, config_hash: str = "") -> None:
        save_weights(path, module_arrays(self.module), self.arch, self.dims(), seed, config_hash)


class RandomPersonEmbedder:
    """Seeded random conv projection of 32x32-resized crops."""

    arch = "person_embedder_v1"

    def __init__(self, module: EmbedderNet):
        self.module = module.eval()
        self.out_dim = module.out_dim

    @classmethod
    def random(cls, seed: int = 23, out_dim: int = 64, base: int = 16) -> "RandomPersonEmbedder":
        module = _seeded(lambda: EmbedderNet(out_dim=out_dim, base=base), seed)
        return cls(module)

    def embed(self, crop: np.ndarray) -> np.ndarray:
        crop = np.asarray(crop, dtype=np.float64)
        if crop.ndim != 3 or crop.shape[0] != 3 or min(crop.shape[1:]) < 1:
            raise ValidationError(f"crop must be (3, h, w), got {crop.shape}")
        t = _to_t(crop)[None]
        t = F.interpolate(t, size=(32, 32), mode="bilinear", align_corners=False)
        with torch.no_grad():
            v = self.module(t)[0]
        return _np(v)


@dataclass
class ModelBundle:
    """Everything the sampling loops need, loaded once and read-only."""

    segmenter: object
    denoiser: object
    codec: object
    text_encoder: object
    step_encoder: object


def _build_segmenter(header, arrays):
    d = header["dims"]
    module = SegmenterNet(d["n_categories"], base=d["base"])
    load_into_module(module, header, arrays)
    return ToySegmenter(module, d["category_names"])


def _build_denoiser(header, arrays):
    d = header["dims"]
    module = DenoiserNet(d["latent_channels"], base=d["base"], text_dim=d["text_dim"], step_dim=d["step_dim"])
    load_into_module(module, header, arrays)
    return ToyDenoiser(module, d["lat_h"], d["lat_w"])


def _build_codec(header, arrays):
    d = header["dims"]
    module = CodecNet(d["latent_channels"], base=d["base"])
    load_into_module(module, header, arrays)
    return TrainedCodec(module, d["height"], d["width"])


def _build_classifier(header, arrays):
    d = header["dims"]
    module = ClassifierNet(d["n_cities"], base=d["base"])
    load_into_module(module, header, arrays)
    return ToyCityClassifier(module)


def _build_extractor(header, arrays):
    d = header["dims"]
    module = ClassifierNet(d["n_cities"], base=d["base"])
    load_into_module(module, header, arrays)
    return ConvFeatureExtractor(module, extractor_id=d["extractor_id"])


_BUILDERS = {
    ToySegmenter.arch: _build_segmenter,
    ToyDenoiser.arch: _build_denoiser,
    TrainedCodec.arch: _build_codec,
    ToyCityClassifier.arch: _build_classifier,
    ConvFeatureExtractor.arch: _build_extractor,
}


def load_model(path):
    """Rebuild a wrapper from a weight file via its architecture id."""
    header, arrays = load_weights(path)
    builder = _BUILDERS.get(header["arch"])
    if builder is None:
        raise ValidationError(f"unknown architecture id {header['arch']!r}")
    return builder(header, arrays)
