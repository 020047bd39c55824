"""Pluggable model interfaces and their desk-scale implementations."""

from .encoders import HashedTextEncoder, IdentityCodec, SinusoidalStepEncoder
from .training import (
    KINDS,
    codec_psnr,
    noise_prediction_mse,
    pixel_accuracy,
    top1_accuracy,
    train_component,
)
from .weights import load_weights, save_weights
from .wrappers import (
    ConvFeatureExtractor,
    ModelBundle,
    RandomPersonEmbedder,
    ToyCityClassifier,
    ToyDenoiser,
    ToySegmenter,
    TrainedCodec,
    load_model,
    segment,
)

__all__ = [
    "HashedTextEncoder",
    "IdentityCodec",
    "SinusoidalStepEncoder",
    "KINDS",
    "train_component",
    "pixel_accuracy",
    "top1_accuracy",
    "noise_prediction_mse",
    "codec_psnr",
    "load_weights",
    "save_weights",
    "ConvFeatureExtractor",
    "ModelBundle",
    "RandomPersonEmbedder",
    "ToyCityClassifier",
    "ToyDenoiser",
    "ToySegmenter",
    "TrainedCodec",
    "load_model",
    "segment",
]
