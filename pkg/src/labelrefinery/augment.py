"""Stochastic image augmentation: random resized crop, color jitter,
Gaussian blur, random grayscale.

One policy object drives both contrastive view generation and pseudo-label
re-injection. All pixel math happens in float32 on [0, 1]; images are
quantized back to uint8 only at the return boundary. Every random draw
comes from the caller-supplied numpy Generator, so a fixed generator state
reproduces the output byte-for-byte.
"""

import math
from dataclasses import dataclass

import numpy as np

from labelrefinery import kernels
from labelrefinery.exceptions import AugmentationError, ConfigError, ContractError

# ITU-R BT.601 luma and FCC YIQ chroma coefficients.
_LUMA = (0.299, 0.587, 0.114)
_YIQ_I = (0.595716, -0.274453, -0.321263)
_YIQ_Q = (0.211456, -0.522591, 0.311135)


@dataclass(frozen=True)
class AugmentationPolicy:
    """Parameters of the strong augmentation pipeline.

    jitter_strengths are the (brightness, contrast, saturation, hue) maximum
    deltas; a strength of zero disables that component exactly.
    """

    crop_scale_range: tuple = (0.2, 1.0)
    jitter_strengths: tuple = (0.4, 0.4, 0.4, 0.1)
    blur_sigma_range: tuple = (0.1, 2.0)
    blur_apply_prob: float = 0.5
    grayscale_prob: float = 0.2
    output_size: tuple = (16, 16)

    def __post_init__(self):
        lo, hi = self.crop_scale_range
        if not (0.0 < lo <= hi <= 1.0):
            raise ConfigError(f"crop_scale_range must satisfy 0 < min <= max <= 1, got {self.crop_scale_range}")
        if len(self.jitter_strengths) != 4 or any(s < 0 for s in self.jitter_strengths):
            raise ConfigError(f"jitter_strengths must be four non-negative deltas, got {self.jitter_strengths}")
        slo, shi = self.blur_sigma_range
        if not (0.0 < slo <= shi):
            raise ConfigError(f"blur_sigma_range must satisfy 0 < min <= max, got {self.blur_sigma_range}")
        for name in ("blur_apply_prob", "grayscale_prob"):
            p = getattr(self, name)
            if not (0.0 <= p <= 1.0):
                raise ConfigError(f"{name} must lie in [0, 1], got {p}")
        oh, ow = self.output_size
        if oh < 1 or ow < 1:
            raise ConfigError(f"output_size must be positive, got {self.output_size}")

    @classmethod
    def identity(cls, output_size):
        """Policy that is a fixed point for images of shape output_size."""
        return cls(
            crop_scale_range=(1.0, 1.0),
            jitter_strengths=(0.0, 0.0, 0.0, 0.0),
            blur_sigma_range=(0.1, 0.1),
            blur_apply_prob=0.0,
            grayscale_prob=0.0,
            output_size=tuple(output_size),
        )

    def to_dict(self):
        return {
            "crop_scale_range": list(self.crop_scale_range),
            "jitter_strengths": list(self.jitter_strengths),
            "blur_sigma_range": list(self.blur_sigma_range),
            "blur_apply_prob": self.blur_apply_prob,
            "grayscale_prob": self.grayscale_prob,
            "output_size": list(self.output_size),
        }

    @classmethod
    def from_dict(cls, d):
        known = {"crop_scale_range", "jitter_strengths", "blur_sigma_range",
                 "blur_apply_prob", "grayscale_prob", "output_size"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown augmentation policy keys: {sorted(unknown)}")
        kwargs = {k: tuple(v) if isinstance(v, (list, tuple)) else v for k, v in d.items()}
        return cls(**kwargs)


def _gaussian_taps(sigma):
    radius = max(1, int(math.ceil(3.0 * sigma)))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-(xs * xs) / (2.0 * sigma * sigma))
    taps /= taps.sum()
    return taps.astype(np.float32)


def _resample_axis(window, out, offset):
    """Source indices and fractions mapping `window` pixels onto `out`."""
    src = (np.arange(out, dtype=np.float64) + 0.5) * (window / out) - 0.5
    src = np.clip(src, 0.0, window - 1.0)
    i0 = np.floor(src)
    frac = (src - i0).astype(np.float32)
    i0 = i0.astype(np.intp)
    i1 = np.minimum(i0 + 1, window - 1)
    return i0 + offset, i1 + offset, frac


def _luma(x):
    return x[..., 0] * np.float32(_LUMA[0]) + x[..., 1] * np.float32(_LUMA[1]) + x[..., 2] * np.float32(_LUMA[2])


def _rotate_hue(x, delta):
    """Hue shift as a rotation of the YIQ chroma plane by delta turns."""
    y = _luma(x)
    ci = x[..., 0] * np.float32(_YIQ_I[0]) + x[..., 1] * np.float32(_YIQ_I[1]) + x[..., 2] * np.float32(_YIQ_I[2])
    cq = x[..., 0] * np.float32(_YIQ_Q[0]) + x[..., 1] * np.float32(_YIQ_Q[1]) + x[..., 2] * np.float32(_YIQ_Q[2])
    angle = 2.0 * math.pi * delta
    cos_a = np.float32(math.cos(angle))
    sin_a = np.float32(math.sin(angle))
    ri = ci * cos_a - cq * sin_a
    rq = ci * sin_a + cq * cos_a
    out = np.empty_like(x)
    out[..., 0] = y + ri * np.float32(0.9563) + rq * np.float32(0.6210)
    out[..., 1] = y - ri * np.float32(0.2721) - rq * np.float32(0.6474)
    out[..., 2] = y - ri * np.float32(1.1070) + rq * np.float32(1.7046)
    return out


def _check_image(image):
    if image.ndim != 3 or image.shape[2] != 3:
        raise ContractError(f"expected an (H, W, 3) image, got shape {image.shape}")
    if image.dtype != np.uint8:
        raise ContractError(f"expected uint8 channel values, got dtype {image.dtype}")


def apply_policy(image, policy, rng):
    """Augment one uint8 (H, W, 3) image; returns a new uint8 image of
    policy.output_size.

    Draw order is fixed (crop scale, crop offsets, four jitter factors,
    grayscale coin, blur coin, blur sigma) so a seeded generator replays
    the exact output.
    """
    _check_image(image)
    h, w = image.shape[0], image.shape[1]
    out_h, out_w = policy.output_size

    scale = rng.uniform(policy.crop_scale_range[0], policy.crop_scale_range[1])
    win_h = int(round(h * math.sqrt(scale)))
    win_w = int(round(w * math.sqrt(scale)))
    if win_h < 1 or win_w < 1:
        raise AugmentationError(f"crop scale {scale:.6f} yields a zero-area window on a {h}x{w} image")
    win_h = min(win_h, h)
    win_w = min(win_w, w)
    top = int(rng.integers(0, h - win_h + 1))
    left = int(rng.integers(0, w - win_w + 1))

    x = image.astype(np.float32) / np.float32(255.0)
    if (win_h, win_w) == (out_h, out_w):
        x = x[top:top + win_h, left:left + win_w].copy()
    else:
        y0, y1, fy = _resample_axis(win_h, out_h, top)
        x0, x1, fx = _resample_axis(win_w, out_w, left)
        x = kernels.crop_resize_bilinear(np.ascontiguousarray(x), y0, y1, fy, x0, x1, fx)

    sb, sc, ss, sh = policy.jitter_strengths
    brightness = rng.uniform(max(0.0, 1.0 - sb), 1.0 + sb)
    contrast = rng.uniform(max(0.0, 1.0 - sc), 1.0 + sc)
    saturation = rng.uniform(max(0.0, 1.0 - ss), 1.0 + ss)
    hue = rng.uniform(-sh, sh)
    if brightness != 1.0:
        x = x * np.float32(brightness)
    if contrast != 1.0:
        mean = _luma(x).mean(dtype=np.float32)
        x = (x - mean) * np.float32(contrast) + mean
    if saturation != 1.0:
        gray = _luma(x)[..., None]
        x = gray + (x - gray) * np.float32(saturation)
    if hue != 0.0:
        x = _rotate_hue(x, hue)

    if rng.random() < policy.grayscale_prob:
        gray = _luma(x)
        x = np.repeat(gray[..., None], 3, axis=2)

    if rng.random() < policy.blur_apply_prob:
        sigma = rng.uniform(policy.blur_sigma_range[0], policy.blur_sigma_range[1])
        x = kernels.gaussian_blur(np.ascontiguousarray(x), _gaussian_taps(sigma))

    x = np.clip(x, 0.0, 1.0)
    return np.rint(x * np.float32(255.0)).astype(np.uint8)


def make_view_pair(image, policy, rng):
    """Two independent augmentations of the same image (a contrastive pair)."""
    return apply_policy(image, policy, rng), apply_policy(image, policy, rng)


def pad_crop_flip(image, rng, pad=2):
    """Light supervised-training augmentation: zero-pad, random crop back to
    the original size, random horizontal flip. uint8 in, uint8 out."""
    _check_image(image)
    h, w = image.shape[0], image.shape[1]
    padded = np.zeros((h + 2 * pad, w + 2 * pad, 3), dtype=np.uint8)
    padded[pad:pad + h, pad:pad + w] = image
    top = int(rng.integers(0, 2 * pad + 1))
    left = int(rng.integers(0, 2 * pad + 1))
    out = padded[top:top + h, left:left + w]
    if rng.random() < 0.5:
        out = out[:, ::-1]
    return np.ascontiguousarray(out)
