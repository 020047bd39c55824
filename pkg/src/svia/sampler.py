"""Noise schedules and the diffusion sampling loops.

All latent math runs in float64. A latent is a flat vector of size s given
by the codec; conditioning is a bundle of (text embedding, image/mask
embedding, per-step embeddings). With eta = 0 every loop here is a pure
function of (seed, prompt, models, schedule).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericsError, ValidationError
from .image import validate_image, validate_mask
from .seeds import make_rng


@dataclass
class NoiseSchedule:
    """Per-step signal rates and stochasticity constants.

    alpha[i-1] is the step-i rate; alpha_bar[i] the cumulative product with
    alpha_bar[0] = 1; sigma[i-1] the step-i noise constant. eta in [0, 1]
    scales sigma; eta = 0 gives the deterministic sampler.
    """

    d: int
    alpha: np.ndarray
    alpha_bar: np.ndarray
    sigma: np.ndarray
    eta: float

    def abar(self, i: int) -> float:
        return float(self.alpha_bar[i])

    def sig(self, i: int) -> float:
        return float(self.sigma[i - 1])

    def validate(self) -> None:
        if self.d < 1:
            raise ValidationError("schedule: d must be >= 1")
        if self.alpha.shape != (self.d,) or self.sigma.shape != (self.d,):
            raise ValidationError("schedule: alpha and sigma must have length d")
        if self.alpha_bar.shape != (self.d + 1,):
            raise ValidationError("schedule: alpha_bar must have length d + 1")
        if self.alpha_bar[0] != 1.0:
            raise ValidationError("schedule: alpha_bar[0] must be 1")
        if np.any(np.diff(self.alpha_bar) > 0):
            raise ValidationError("schedule: alpha_bar must be non-increasing")
        if self.alpha_bar[-1] <= 0:
            raise ValidationError("schedule: alpha_bar must stay positive")
        for i in range(1, self.d + 1):
            if self.sig(i) ** 2 > 1.0 - self.abar(i - 1) + 1e-12:
                raise ValidationError(f"schedule: sigma_{i}^2 exceeds 1 - alpha_bar_{i - 1}")
        if self.eta == 0.0 and np.any(self.sigma != 0.0):
            raise ValidationError("schedule: eta = 0 requires all sigma = 0")


def build_schedule(d: int, kind: str = "linear", eta: float = 0.0) -> NoiseSchedule:
    """Construct a valid schedule of d steps.

    'linear' discretizes a variance-preserving process with linearly
    increasing rate; 'cosine' uses the squared-cosine signal curve. Both
    keep alpha_bar strictly decreasing and positive for any d >= 1. sigma
    follows the eta parameterization
    sigma_i = eta * sqrt((1 - abar_{i-1}) / (1 - abar_i)) * sqrt(1 - abar_i / abar_{i-1}).
    """
    if d < 1:
        raise ValidationError(f"build_schedule: d must be >= 1, got {d}")
    if not 0.0 <= eta <= 1.0:
        raise ValidationError(f"build_schedule: eta must be in [0, 1], got {eta}")

    s = np.arange(1, d + 1, dtype=np.float64) / d
    if kind == "linear":
        b_min, b_max = 0.1, 20.0
        abar_tail = np.exp(-(b_min * s + 0.5 * (b_max - b_min) * s * s))
    elif kind == "cosine":
        c = 0.008
        f = np.cos((s + c) / (1.0 + c) * math.pi / 2.0) ** 2
        abar_tail = f / math.cos(c / (1.0 + c) * math.pi / 2.0) ** 2
    else:
        raise ValidationError(f"build_schedule: unknown kind {kind!r}")

    alpha_bar = np.concatenate(([1.0], abar_tail))
    alpha = np.clip(alpha_bar[1:] / alpha_bar[:-1], 1e-4, 1.0 - 1e-9)
    alpha_bar = np.concatenate(([1.0], np.cumprod(alpha)))

    sigma = np.zeros(d, dtype=np.float64)
    if eta > 0.0:
        prev, cur = alpha_bar[:-1], alpha_bar[1:]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(cur < 1.0, (1.0 - prev) / (1.0 - cur), 0.0)
        sigma = eta * np.sqrt(ratio) * np.sqrt(1.0 - cur / prev)

    sched = NoiseSchedule(d=d, alpha=alpha, alpha_bar=alpha_bar, sigma=sigma, eta=float(eta))
    sched.validate()
    return sched


def _check_step(i: int, sched: NoiseSchedule) -> None:
    if not 1 <= i <= sched.d:
        raise ValidationError(f"step {i} outside [1, {sched.d}]")


def predict_x0(y_i: np.ndarray, eps_i: np.ndarray, i: int, sched: NoiseSchedule) -> np.ndarray:
    """Invert the forward process: (y_i - sqrt(1 - abar_i) * eps) / sqrt(abar_i)."""
    _check_step(i, sched)
    abar = sched.abar(i)
    if abar <= 0.0:
        raise NumericsError(f"alpha_bar_{i} is zero; cannot invert")
    return (np.asarray(y_i, dtype=np.float64) - math.sqrt(1.0 - abar) * np.asarray(eps_i, dtype=np.float64)) / math.sqrt(abar)


def ddim_step(
    y_i: np.ndarray,
    eps_i: np.ndarray,
    i: int,
    sched: NoiseSchedule,
    z: np.ndarray | float = 0.0,
) -> np.ndarray:
    """One reverse update: sqrt(abar_{i-1}) * x0_hat
    + sqrt(1 - abar_{i-1} - sigma_i^2) * eps_i + sigma_i * z.

    At i = 1 the caller must pass z = 0 (sigma_1 = 0 makes it moot).
    """
    _check_step(i, sched)
    abar_prev = sched.abar(i - 1)
    sig = sched.sig(i)
    radicand = 1.0 - abar_prev - sig * sig
    if radicand < 0.0:
        if radicand < -1e-12:
            raise ValidationError(f"ddim_step: negative radicand at step {i}")
        radicand = 0.0
    x0_hat = predict_x0(y_i, eps_i, i, sched)
    out = math.sqrt(abar_prev) * x0_hat + math.sqrt(radicand) * np.asarray(eps_i, dtype=np.float64)
    if sig > 0.0:
        out = out + sig * np.asarray(z, dtype=np.float64)
    if not np.isfinite(out).all():
        raise NumericsError(f"ddim_step: non-finite output at step {i}")
    return out


def forward_noise(x0_latent: np.ndarray, t: int, sched: NoiseSchedule, z: np.ndarray) -> np.ndarray:
    """Noise a clean latent to step t: sqrt(abar_t) * x0 + sqrt(1 - abar_t) * z."""
    _check_step(t, sched)
    abar = sched.abar(t)
    x0 = np.asarray(x0_latent, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if z.shape not in ((), x0.shape):
        raise ValidationError(f"forward_noise: z shape {z.shape} does not match latent {x0.shape}")
    return math.sqrt(abar) * x0 + math.sqrt(1.0 - abar) * z


@dataclass
class ConditioningBundle:
    """Per-run conditioning: text embedding, image/mask embedding, and a
    table of step embeddings with row i for step i (row 0 unused)."""

    e_t: np.ndarray
    e_img: np.ndarray
    e_s: np.ndarray

    def __post_init__(self):
        for name in ("e_t", "e_img", "e_s"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.isfinite(v).all():
                raise ValidationError(f"conditioning {name} has non-finite values")
            setattr(self, name, v)

    def step_embedding(self, i: int) -> np.ndarray:
        return self.e_s[i]


def downsample_mask(mask: np.ndarray, factor: int) -> np.ndarray:
    """Block-average a binary mask by an integer factor (exact division)."""
    mask = np.asarray(mask, dtype=np.float64)
    if factor == 1:
        return mask
    h, w = mask.shape
    if h % factor or w % factor:
        raise ValidationError(f"mask {mask.shape} not divisible by factor {factor}")
    return mask.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))


def image_conditioning(codec, context_image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Pack (encoded context image, downsampled mask) into one flat embedding."""
    latent = codec.encode(context_image)
    small = downsample_mask(mask, codec.downsample_factor)
    return np.concatenate([latent, small.ravel()])


def split_image_conditioning(e_img: np.ndarray, codec, h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of image_conditioning: (context latent, mask at latent resolution)."""
    f = codec.downsample_factor
    mh, mw = h // f, w // f
    n_mask = mh * mw
    latent = np.asarray(e_img[:-n_mask], dtype=np.float64)
    small = np.asarray(e_img[-n_mask:], dtype=np.float64).reshape(mh, mw)
    return latent, small


def make_conditioning(models, prompt: str, context_image: np.ndarray, mask: np.ndarray, sched: NoiseSchedule) -> ConditioningBundle:
    e_t = models.text_encoder.encode(prompt)
    e_img = image_conditioning(models.codec, context_image, mask)
    rows = [models.step_encoder.encode(i) for i in range(1, sched.d + 1)]
    e_s = np.vstack([np.zeros_like(rows[0]), *rows])
    return ConditioningBundle(e_t=e_t, e_img=e_img, e_s=e_s)


def denoise_conditioned(model, y: np.ndarray, step: int, cond: ConditioningBundle) -> np.ndarray:
    """Query the denoiser for a noise estimate; checks finiteness both ways."""
    y = np.asarray(y, dtype=np.float64)
    if not np.isfinite(y).all():
        raise NumericsError(f"non-finite latent at step {step}")
    eps = np.asarray(
        model.predict_noise(y, step, cond.step_embedding(step), cond.e_t, cond.e_img),
        dtype=np.float64,
    )
    if eps.shape != y.shape:
        raise ValidationError(f"denoiser returned shape {eps.shape}, expected {y.shape}")
    if not np.isfinite(eps).all():
        raise NumericsError(f"denoiser produced non-finite estimate at step {step}")
    return eps


class OracleDenoiser:
    """Exact noise oracle for a fixed target latent g:
    eps(y_i, i) = (y_i - sqrt(abar_i) * g) / sqrt(1 - abar_i).

    Feeding this into the eta = 0 reverse loop returns g to round-off;
    it is the independent check for predict_x0 and ddim_step combined.
    """

    def __init__(self, target_latent: np.ndarray, sched: NoiseSchedule):
        self.target = np.asarray(target_latent, dtype=np.float64)
        self.sched = sched

    def predict_noise(self, y, step, e_s, e_t, e_img):
        abar = self.sched.abar(step)
        denom = math.sqrt(max(1.0 - abar, 1e-300))
        return (np.asarray(y, dtype=np.float64) - math.sqrt(abar) * self.target) / denom


def _reverse_loop(y: np.ndarray, start: int, model, cond: ConditioningBundle, sched: NoiseSchedule, rng) -> np.ndarray:
    for i in range(start, 0, -1):
        eps = denoise_conditioned(model, y, i, cond)
        z = rng.standard_normal(y.shape[0]) if i != 1 else 0.0
        y = ddim_step(y, eps, i, sched, z)
    return y


def inpaint(
    mask: np.ndarray,
    noisy_image: np.ndarray,
    prompt: str,
    models,
    sched: NoiseSchedule,
    seed: int,
) -> np.ndarray:
    """Regenerate the masked region of a noised image, guided by the prompt.

    The denoiser is conditioned on the mask and on the context image (the
    noisy image with the masked region zeroed), sampling starts from seeded
    standard-normal noise, and the decoded output lives in [0, 1].
    """
    noisy_image = validate_image(noisy_image, name="noisy_image")
    mask = validate_mask(mask, noisy_image.shape[1:])
    context = noisy_image * (1.0 - mask[None, :, :])
    cond = make_conditioning(models, prompt, context, mask, sched)
    rng = make_rng(seed)
    y = rng.standard_normal(models.codec.latent_size(*noisy_image.shape[1:]))
    y = _reverse_loop(y, sched.d, models.denoiser, cond, sched, rng)
    return models.codec.decode(y)


def harmonize(
    coarse: np.ndarray,
    prompt: str,
    strength: float,
    models,
    sched: NoiseSchedule,
    seed: int,
) -> np.ndarray:
    """Image-to-image smoothing pass over a composited image.

    Encodes the coarse image, forward-noises it to step ceil(strength * d),
    then runs the reverse loop down to 1. strength = 1 reproduces the
    full-depth noising; small strengths stay close to the input.
    """
    if not 0.0 < strength <= 1.0:
        raise ValidationError(f"harmonize: strength must be in (0, 1], got {strength}")
    coarse = validate_image(coarse, name="coarse")
    mask = np.zeros(coarse.shape[1:], dtype=np.uint8)
    cond = make_conditioning(models, prompt, coarse, mask, sched)
    t_star = math.ceil(strength * sched.d)
    x0 = models.codec.encode(coarse)
    rng = make_rng(seed)
    z = rng.standard_normal(x0.shape[0])
    y = forward_noise(x0, t_star, sched, z)
    y = _reverse_loop(y, t_star, models.denoiser, cond, sched, rng)
    return models.codec.decode(y)
