"""Training loops for the desk-scale components.

Every run is deterministic: torch and numpy streams are derived from the
given seed, data order comes from a seeded permutation, and the nets carry
no stochastic layers. Each run writes a weight file plus a JSON training
log with per-epoch losses; a run whose loss fails to decrease from the
first to the last epoch aborts rather than silently shipping bad weights.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import torch

from ..config import PipelineConfig
from ..errors import DatasetError, TrainingError
from ..sampler import build_schedule, image_conditioning
from ..seeds import derive_seed, make_rng
from ..synthetic import CATEGORIES, DatasetLayout, SceneRecord, load_dataset
from .encoders import HashedTextEncoder, IdentityCodec, SinusoidalStepEncoder
from .nets import ClassifierNet, CodecNet, DenoiserNet, SegmenterNet
from .wrappers import (
    ConvFeatureExtractor,
    ToyCityClassifier,
    ToyDenoiser,
    ToySegmenter,
    TrainedCodec,
)

KINDS = ("segmenter", "denoiser", "codec", "city_classifier", "feature_extractor")


def _dataset_categories(dataset: str | Path) -> list[str]:
    layout = DatasetLayout(Path(dataset))
    if layout.meta_json.exists():
        return list(json.loads(layout.meta_json.read_text()).get("categories", CATEGORIES))
    return list(CATEGORIES)


def _load_records(dataset: str | Path) -> list[SceneRecord]:
    records = load_dataset(dataset)
    if not records:
        raise DatasetError(f"dataset {dataset} is empty")
    return records


def _run_epochs(kind: str, epochs: int, n_items: int, batch_size: int, shuffle_rng, step_fn) -> list[float]:
    losses = []
    for epoch in range(1, epochs + 1):
        order = shuffle_rng.permutation(n_items)
        batch_losses = []
        for start in range(0, n_items, batch_size):
            idx = order[start : start + batch_size]
            loss = step_fn(idx, epoch)
            if not math.isfinite(loss):
                raise TrainingError(f"{kind}: non-finite loss at epoch {epoch}, batch starting {start}")
            batch_losses.append(loss)
        losses.append(float(np.mean(batch_losses)))
    if len(losses) > 1 and losses[-1] >= losses[0]:
        raise TrainingError(f"{kind}: loss did not decrease ({losses[0]:.6f} -> {losses[-1]:.6f})")
    return losses


def _write_log(out_path: Path, kind: str, seed: int, cfg_hash: str, dataset, losses: list[float]) -> None:
    log = {
        "component": kind,
        "seed": int(seed),
        "config_hash": cfg_hash,
        "dataset": str(dataset),
        "epochs": [{"epoch": i + 1, "loss": v} for i, v in enumerate(losses)],
    }
    out_path.with_suffix(".trainlog.json").write_text(json.dumps(log, indent=2) + "\n")


def train_component(kind: str, dataset: str | Path, config: PipelineConfig, seed: int, out_path: str | Path) -> Path:
    """Train one component on a DatasetLayout and serialize its weights."""
    if kind not in KINDS:
        raise TrainingError(f"unknown component kind {kind!r}; expected one of {KINDS}")
    out_path = Path(out_path)
    records = _load_records(dataset)
    params = config.train_params(kind)
    torch.manual_seed(derive_seed(seed, kind, "torch") & 0x7FFFFFFF)

    if kind == "segmenter":
        wrapper, losses = _train_segmenter(records, _dataset_categories(dataset), params, seed)
    elif kind in ("city_classifier", "feature_extractor"):
        wrapper, losses = _train_classifier(kind, records, params, seed, config)
    elif kind == "codec":
        wrapper, losses = _train_codec(records, params, seed)
    else:
        wrapper, losses = _train_denoiser(records, _dataset_categories(dataset), params, seed, config)

    wrapper.save(out_path, seed=seed, config_hash=config.hash)
    _write_log(out_path, kind, seed, config.hash, dataset, losses)
    return out_path


def _stack_images(records) -> np.ndarray:
    return np.stack([r.image for r in records]).astype(np.float32)


def _train_segmenter(records, categories, params, seed):
    X = _stack_images(records)
    Y = np.stack([r.labels for r in records]).astype(np.int64)
    module = SegmenterNet(len(categories))
    opt = torch.optim.Adam(module.parameters(), lr=params["lr"])
    ce = torch.nn.CrossEntropyLoss()
    shuffle_rng = make_rng(derive_seed(seed, "segmenter", "shuffle"))

    def step(idx, epoch):
        xb = torch.from_numpy(X[idx])
        yb = torch.from_numpy(Y[idx])
        opt.zero_grad(set_to_none=True)
        loss = ce(module(xb), yb)
        loss.backward()
        opt.step()
        return float(loss.item())

    losses = _run_epochs("segmenter", params["epochs"], len(records), params["batch_size"], shuffle_rng, step)
    return ToySegmenter(module, categories), losses


def _train_classifier(kind, records, params, seed, config: PipelineConfig):
    labels = np.array([r.city_id for r in records], dtype=np.int64)
    if labels.min() < 0:
        raise DatasetError(f"{kind}: dataset has images without city labels")
    n_cities = int(labels.max()) + 1
    X = _stack_images(records)
    module = ClassifierNet(n_cities)
    opt = torch.optim.Adam(module.parameters(), lr=params["lr"])
    ce = torch.nn.CrossEntropyLoss()
    shuffle_rng = make_rng(derive_seed(seed, kind, "shuffle"))

    def step(idx, epoch):
        xb = torch.from_numpy(X[idx])
        yb = torch.from_numpy(labels[idx])
        opt.zero_grad(set_to_none=True)
        loss = ce(module(xb), yb)
        loss.backward()
        opt.step()
        return float(loss.item())

    losses = _run_epochs(kind, params["epochs"], len(records), params["batch_size"], shuffle_rng, step)
    if kind == "feature_extractor":
        return ConvFeatureExtractor(module, extractor_id=f"toyconv_trained_{config.hash[:8]}"), losses
    return ToyCityClassifier(module), losses


def _train_codec(records, params, seed):
    X = _stack_images(records)
    h, w = X.shape[2], X.shape[3]
    module = CodecNet()
    opt = torch.optim.Adam(module.parameters(), lr=params["lr"])
    shuffle_rng = make_rng(derive_seed(seed, "codec", "shuffle"))

    def step(idx, epoch):
        xb = torch.from_numpy(X[idx])
        opt.zero_grad(set_to_none=True)
        loss = torch.mean((module(xb) - xb) ** 2)
        loss.backward()
        opt.step()
        return float(loss.item())

    losses = _run_epochs("codec", params["epochs"], len(records), params["batch_size"], shuffle_rng, step)
    return TrainedCodec(module, h, w), losses


def _train_denoiser(records, categories, params, seed, config: PipelineConfig):
    """Noise-prediction training with the pipeline's two conditioning modes.

    Inpaint mode: a ground-truth category mask, zeroed context inside it and
    that category's prompt. Harmonize mode (a configured fraction): an empty
    mask, the full image as context and the harmonizer prompt.
    """
    X = np.stack([r.image for r in records])
    Y = np.stack([r.labels for r in records])
    n, _, h, w = X.shape
    d = config.schedule_steps
    sched = build_schedule(d, config.schedule_kind, eta=0.0)
    text_enc = HashedTextEncoder(dim=config.text_dim)
    step_enc = SinusoidalStepEncoder(dim=config.step_dim, total_steps=d)
    h_frac = float(config.flat["train.denoiser.harmonize_fraction"])

    cat_index = {name: categories.index(name) for name in config.sensitive.names if name in categories}
    e_prompt = {name: text_enc.encode(config.prompts[name]) for name in cat_index}
    e_harm = text_enc.encode(config.harmonizer_prompt)
    abars = np.array([sched.abar(i) for i in range(d + 1)])

    module = DenoiserNet(latent_channels=3, text_dim=config.text_dim, step_dim=config.step_dim)
    opt = torch.optim.Adam(module.parameters(), lr=params["lr"])
    data_rng = make_rng(derive_seed(seed, "denoiser", "data"))
    shuffle_rng = make_rng(derive_seed(seed, "denoiser", "shuffle"))

    def step(idx, epoch):
        b = len(idx)
        masks = np.zeros((b, 1, h, w), dtype=np.float64)
        e_ts = np.zeros((b, config.text_dim), dtype=np.float64)
        e_ss = np.zeros((b, config.step_dim), dtype=np.float64)
        ts = data_rng.integers(1, d + 1, size=b)
        z = data_rng.standard_normal((b, 3, h, w))
        x = X[idx]
        for j, i_rec in enumerate(idx):
            if data_rng.random() < h_frac:
                e_ts[j] = e_harm
            else:
                present = [nm for nm, ci in cat_index.items() if (Y[i_rec] == ci).any()]
                name = present[int(data_rng.integers(0, len(present)))] if present else None
                if name is None:
                    e_ts[j] = e_harm
                else:
                    masks[j, 0] = Y[i_rec] == cat_index[name]
                    e_ts[j] = e_prompt[name]
            e_ss[j] = step_enc.encode(int(ts[j]))
        ab = abars[ts][:, None, None, None]
        y_t = np.sqrt(ab) * x + np.sqrt(1.0 - ab) * z
        ctx = x * (1.0 - masks)

        yb = torch.from_numpy(y_t.astype(np.float32))
        mb = torch.from_numpy(masks.astype(np.float32))
        cb = torch.from_numpy(ctx.astype(np.float32))
        tb = torch.from_numpy(e_ts.astype(np.float32))
        sb = torch.from_numpy(e_ss.astype(np.float32))
        zb = torch.from_numpy(z.astype(np.float32))
        opt.zero_grad(set_to_none=True)
        loss = torch.mean((module(yb, mb, cb, tb, sb) - zb) ** 2)
        loss.backward()
        opt.step()
        return float(loss.item())

    losses = _run_epochs("denoiser", params["epochs"], n, params["batch_size"], shuffle_rng, step)
    return ToyDenoiser(module, h, w), losses


def pixel_accuracy(segmenter, records) -> float:
    """Mean fraction of pixels whose argmax category matches ground truth."""
    accs = []
    for r in records:
        pred = np.argmax(segmenter.predict(r.image), axis=0)
        accs.append(float((pred == r.labels).mean()))
    return float(np.mean(accs))


def top1_accuracy(classifier, records) -> float:
    hits = [int(np.argmax(classifier.predict(r.image)) == r.city_id) for r in records]
    return float(np.mean(hits))


def noise_prediction_mse(denoiser, records, config: PipelineConfig, seed: int) -> float:
    """Validation MSE of predicted vs true noise over a seeded sample of
    (image, category mask, step) triples; compare against 1.0, the MSE of
    always predicting zero for unit-variance targets."""
    d = config.schedule_steps
    sched = build_schedule(d, config.schedule_kind, eta=0.0)
    text_enc = HashedTextEncoder(dim=config.text_dim)
    step_enc = SinusoidalStepEncoder(dim=config.step_dim, total_steps=d)
    rng = make_rng(derive_seed(seed, "denoiser", "val"))
    errs = []
    for r in records:
        h, w = r.labels.shape
        codec = IdentityCodec(h, w)
        names = [n for n in config.sensitive.names if n in CATEGORIES and (r.labels == CATEGORIES.index(n)).any()]
        if not names:
            continue
        name = names[int(rng.integers(0, len(names)))]
        mask = (r.labels == CATEGORIES.index(name)).astype(np.uint8)
        t = int(rng.integers(1, d + 1))
        z = rng.standard_normal((3, h, w))
        abar = sched.abar(t)
        y_t = np.sqrt(abar) * r.image + np.sqrt(1.0 - abar) * z
        ctx = r.image * (1.0 - mask)
        e_img = image_conditioning(codec, np.clip(ctx, 0.0, 1.0), mask)
        eps = denoiser.predict_noise(y_t.ravel(), t, step_enc.encode(t), text_enc.encode(config.prompts[name]), e_img)
        errs.append(float(np.mean((eps - z.ravel()) ** 2)))
    return float(np.mean(errs))


def codec_psnr(codec, records) -> float:
    """Mean reconstruction PSNR (dB) of decode(encode(x)) over records."""
    vals = []
    for r in records:
        rec = codec.decode(codec.encode(r.image))
        mse = float(np.mean((rec - r.image) ** 2))
        vals.append(200.0 if mse == 0 else 10.0 * math.log10(1.0 / mse))
    return float(np.mean(vals))
