"""Evaluation suite: FID, KID, LPIPS-style distance, PerSim, ACR@k, Grad-CAM.

FID and KID operate on pooled feature vectors tagged with the extractor id
that produced them; sets from different extractors never mix. KID uses the
unbiased MMD^2 estimator with the cubic polynomial kernel and reports a
bootstrap standard error over subsets drawn without replacement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .image import connected_component_boxes, validate_image, validate_mask
from .seeds import make_rng

_COV_EPS = 1e-6


@dataclass
class FeatureSet:
    """m feature vectors of dimension f from one extractor."""

    vectors: np.ndarray
    extractor_id: str

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise ValidationError(f"FeatureSet: expected (m, f) matrix, got {self.vectors.shape}")
        if not np.isfinite(self.vectors).all():
            raise ValidationError("FeatureSet: non-finite entries")

    @property
    def m(self) -> int:
        return self.vectors.shape[0]

    @property
    def f(self) -> int:
        return self.vectors.shape[1]


def extract_features(images, extractor) -> FeatureSet:
    vecs = np.stack([extractor.pooled(im) for im in images])
    return FeatureSet(vecs, extractor.extractor_id)


def _check_pair(a: FeatureSet, b: FeatureSet) -> None:
    if a.extractor_id != b.extractor_id:
        raise ValidationError(f"feature sets from different extractors: {a.extractor_id!r} vs {b.extractor_id!r}")
    if a.f != b.f:
        raise ValidationError(f"feature dimension mismatch: {a.f} vs {b.f}")
    if a.m < 2 or b.m < 2:
        raise ValidationError("insufficient samples: need m >= 2 per set")


def _sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition, negatives clipped."""
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def _mean_cov(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = v.mean(axis=0)
    cov = np.atleast_2d(np.cov(v, rowvar=False))
    return mu, cov + _COV_EPS * np.eye(cov.shape[0])


def fid(a: FeatureSet, b: FeatureSet) -> float:
    """Frechet distance between Gaussian fits of the two feature sets:
    ||mu_a - mu_b||^2 + Tr(C_a + C_b - 2 (C_a C_b)^{1/2})."""
    _check_pair(a, b)
    mu_a, cov_a = _mean_cov(a.vectors)
    mu_b, cov_b = _mean_cov(b.vectors)
    sqrt_a = _sqrtm_psd(cov_a)
    inner = sqrt_a @ cov_b @ sqrt_a
    vals = np.clip(np.linalg.eigvalsh((inner + inner.T) / 2.0), 0.0, None)
    tr_sqrt = float(np.sqrt(vals).sum())
    diff = mu_a - mu_b
    return float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * tr_sqrt)


def _poly_kernel(u: np.ndarray, v: np.ndarray, f: int) -> np.ndarray:
    return (u @ v.T / f + 1.0) ** 3


def kid(a: FeatureSet, b: FeatureSet) -> float:
    """Unbiased MMD^2 estimate with kernel k(u, v) = (u.v / f + 1)^3."""
    _check_pair(a, b)
    u, v = a.vectors, b.vectors
    m, n = a.m, b.m
    kaa = _poly_kernel(u, u, a.f)
    kbb = _poly_kernel(v, v, a.f)
    kab = _poly_kernel(u, v, a.f)
    term_a = (kaa.sum() - np.trace(kaa)) / (m * (m - 1))
    term_b = (kbb.sum() - np.trace(kbb)) / (n * (n - 1))
    return float(term_a + term_b - 2.0 * kab.sum() / (m * n))


def kid_bootstrap(
    a: FeatureSet,
    b: FeatureSet,
    n_resamples: int = 100,
    seed: int = 0,
    subset_size: int | None = None,
) -> tuple[np.ndarray, float]:
    """KID over subsets drawn without replacement; returns (estimates, SE).

    Each subset estimate is itself unbiased; the SE is the ddof=1 standard
    deviation of the estimates.
    """
    _check_pair(a, b)
    if subset_size is None:
        subset_size = max(2, min(a.m, b.m) // 2)
    if subset_size < 2 or subset_size > min(a.m, b.m):
        raise ValidationError(f"subset_size {subset_size} out of range")
    rng = make_rng(seed)
    est = np.empty(n_resamples, dtype=np.float64)
    for r in range(n_resamples):
        ia = rng.choice(a.m, size=subset_size, replace=False)
        ib = rng.choice(b.m, size=subset_size, replace=False)
        est[r] = kid(FeatureSet(a.vectors[ia], a.extractor_id), FeatureSet(b.vectors[ib], b.extractor_id))
    return est, float(np.std(est, ddof=1))


def lpips(x: np.ndarray, y: np.ndarray, extractor) -> float:
    """Perceptual distance: per stage, unit-normalize the channel vector at
    each pixel, take squared differences, average spatially, sum stages."""
    x = validate_image(x, "x")
    y = validate_image(y, "y")
    if x.shape != y.shape:
        raise ValidationError(f"lpips: shape mismatch {x.shape} vs {y.shape}")
    total = 0.0
    for fx, fy in zip(extractor.stage_maps(x), extractor.stage_maps(y)):
        nx = fx / (np.linalg.norm(fx, axis=0, keepdims=True) + 1e-10)
        ny = fy / (np.linalg.norm(fy, axis=0, keepdims=True) + 1e-10)
        total += float(((nx - ny) ** 2).sum(axis=0).mean())
    return total


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity clipped to [-1, 1]; bitwise-equal inputs give 1.0."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ValidationError("cosine: shape mismatch")
    if np.array_equal(u, v) and np.any(u != 0):
        return 1.0
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def persim(
    original: np.ndarray,
    anonymized: np.ndarray,
    person_mask: np.ndarray,
    embedder,
    min_area: int = 1,
) -> float | None:
    """Mean embedding cosine over person crops paired at the original's
    boxes; None (a no-sample result) when the mask has no components."""
    original = validate_image(original, "original")
    anonymized = validate_image(anonymized, "anonymized")
    if original.shape != anonymized.shape:
        raise ValidationError("persim: image shapes differ")
    person_mask = validate_mask(person_mask, original.shape[1:], "person_mask")
    boxes = connected_component_boxes(person_mask, min_area)
    if not boxes:
        return None
    sims = []
    for (r0, c0, r1, c1) in boxes:
        e_orig = embedder.embed(original[:, r0:r1, c0:c1])
        e_anon = embedder.embed(anonymized[:, r0:r1, c0:c1])
        sims.append(cosine_similarity(e_orig, e_anon))
    return float(np.mean(sims))


def acr_at_k(images, city_labels, classifier, k: int) -> float:
    """Fraction of images whose label is among the top-k city scores; ties
    broken toward the lowest city index."""
    labels = [int(c) for c in city_labels]
    n_cities = classifier.n_cities
    if not 1 <= k <= n_cities:
        raise ValidationError(f"k must be in [1, {n_cities}], got {k}")
    bad = [c for c in labels if not 0 <= c < n_cities]
    if bad:
        raise ValidationError(f"city labels outside classifier's set: {bad[:5]}")
    hits = 0
    count = 0
    for x, label in zip(images, labels):
        scores = np.asarray(classifier.predict(x), dtype=np.float64)
        topk = np.argsort(-scores, kind="stable")[:k]
        hits += int(label in topk)
        count += 1
    if count == 0:
        raise ValidationError("acr_at_k: no images")
    return hits / count


@dataclass
class HeatMap:
    """Nonnegative attribution map, max-normalized to 1 when nonzero."""

    values: np.ndarray
    class_idx: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValidationError("HeatMap: values must be 2-D")
        if self.values.min() < 0.0:
            raise ValidationError("HeatMap: negative values")
        mx = self.values.max()
        if mx > 0 and not np.isclose(mx, 1.0):
            raise ValidationError("HeatMap: nonzero map must have max 1")


def grad_cam(classifier, x: np.ndarray, class_idx: int) -> HeatMap:
    """Gradient-weighted class activation map over the last conv stage."""
    x = validate_image(x)
    acts, grads = classifier.class_gradients(x, class_idx)
    weights = grads.mean(axis=(1, 2))
    cam = np.maximum((weights[:, None, None] * acts).sum(axis=0), 0.0)
    mx = cam.max()
    if mx > 0:
        cam = cam / mx
    return HeatMap(values=cam, class_idx=class_idx)


def heatmap_mass_fraction(heatmap: HeatMap, mask: np.ndarray) -> float:
    """Fraction of heatmap mass inside a pixel mask; the map is replicated
    up to the mask resolution (integer factor)."""
    mask = np.asarray(mask)
    hh, hw = heatmap.values.shape
    mh, mw = mask.shape
    if mh % hh or mw % hw:
        raise ValidationError(f"mask {mask.shape} not an integer multiple of heatmap {heatmap.values.shape}")
    up = np.kron(heatmap.values, np.ones((mh // hh, mw // hw)))
    total = up.sum()
    if total == 0:
        return 0.0
    return float((up * (mask != 0)).sum() / total)
