"""Street-view image anonymization: segment, noise, inpaint, composite,
harmonize, with model-free baselines and a five-metric evaluation suite."""

__version__ = "0.1.0"

from .baselines import BaselineSpec, apply_baseline
from .config import PipelineConfig, load_flat_config
from .errors import (
    DatasetError,
    NumericsError,
    PipelineStageError,
    SviaError,
    TrainingError,
    ValidationError,
)
from .image import (
    MaskSet,
    SensitiveCategorySet,
    add_masked_laplace,
    composite,
    connected_person_crops,
    extract_masks,
    read_png,
    write_png,
)
from .metrics import FeatureSet, HeatMap, acr_at_k, fid, grad_cam, kid, lpips, persim
from .pipeline import ResultManifest, anonymize, anonymize_batch, anonymize_without_harmonizer, load_models
from .sampler import NoiseSchedule, OracleDenoiser, build_schedule, ddim_step, forward_noise, harmonize, inpaint, predict_x0
from .synthetic import SceneSpec, generate_dataset, generate_scene, load_dataset

__all__ = [
    "__version__",
    "BaselineSpec",
    "apply_baseline",
    "PipelineConfig",
    "load_flat_config",
    "SviaError",
    "ValidationError",
    "NumericsError",
    "DatasetError",
    "TrainingError",
    "PipelineStageError",
    "MaskSet",
    "SensitiveCategorySet",
    "add_masked_laplace",
    "composite",
    "connected_person_crops",
    "extract_masks",
    "read_png",
    "write_png",
    "FeatureSet",
    "HeatMap",
    "acr_at_k",
    "fid",
    "grad_cam",
    "kid",
    "lpips",
    "persim",
    "ResultManifest",
    "anonymize",
    "anonymize_batch",
    "anonymize_without_harmonizer",
    "load_models",
    "NoiseSchedule",
    "OracleDenoiser",
    "build_schedule",
    "ddim_step",
    "forward_noise",
    "harmonize",
    "inpaint",
    "predict_x0",
    "SceneSpec",
    "generate_dataset",
    "generate_scene",
    "load_dataset",
]
