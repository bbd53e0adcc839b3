"""Deterministic image transforms that build visual prompts for the scorer.

Images are numpy arrays of shape (height, width, 3), dtype uint8, RGB. All
transforms are pure: identical inputs produce identical bytes.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from scipy.signal import fftconvolve

from .geometry import Box

# Translucent red overlay used by the shading score method.
SHADE_RGB = (240, 0, 30)
SHADE_ALPHA = 127  # out of 255


class EmptyRegionError(ValueError):
    """A box rasterizes to zero area inside the image."""


@dataclass(frozen=True)
class BlurConfig:
    """Gaussian filter width for background blurring."""

    sigma: float = 100.0

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


def validate_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError(f"expected (h, w, 3) uint8 image, got {img.shape} {img.dtype}")
    if img.shape[0] == 0 or img.shape[1] == 0:
        raise ValueError("image has zero area")
    return img


def load_image(path: str | Path) -> np.ndarray:
    with PILImage.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def encode_png(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    PILImage.fromarray(validate_image(img), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def save_png(img: np.ndarray, path: str | Path) -> None:
    Path(path).write_bytes(encode_png(img))


def rasterize_box(b: Box, width: int, height: int) -> tuple[int, int, int, int]:
    """Clamp a box to the image, then round edges half-up to integer pixels.

    The result indexes pixel edges: slice [y1:y2, x1:x2]. Raises
    EmptyRegionError when the clamped box covers no pixels.
    """
    x1 = math.floor(min(max(b.x1, 0.0), float(width)) + 0.5)
    x2 = math.floor(min(max(b.x2, 0.0), float(width)) + 0.5)
    y1 = math.floor(min(max(b.y1, 0.0), float(height)) + 0.5)
    y2 = math.floor(min(max(b.y2, 0.0), float(height)) + 0.5)
    if x2 <= x1 or y2 <= y1:
        raise EmptyRegionError(f"box {b.as_tuple()} is empty on a {width}x{height} image")
    return x1, y1, x2, y2


def crop_isolate(img: np.ndarray, b: Box) -> np.ndarray:
    """Cut out exactly the pixels inside the (clamped, rasterized) box."""
    img = validate_image(img)
    x1, y1, x2, y2 = rasterize_box(b, img.shape[1], img.shape[0])
    return img[y1:y2, x1:x2].copy()


def gaussian_kernel(sigma: float) -> np.ndarray:
    """1-D Gaussian taps truncated at radius ceil(3*sigma), normalized to sum 1."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _gaussian_blur_float(img: np.ndarray, sigma: float) -> np.ndarray:
    kernel = gaussian_kernel(sigma)
    radius = (len(kernel) - 1) // 2
    padded = np.pad(img.astype(np.float64), ((radius, radius), (radius, radius), (0, 0)),
                    mode="edge")
    out = np.empty(img.shape, dtype=np.float64)
    for c in range(3):
        rows = fftconvolve(padded[:, :, c], kernel[None, :], mode="valid")
        out[:, :, c] = fftconvolve(rows, kernel[:, None], mode="valid")
    return out


def gaussian_blur(img: np.ndarray, cfg: BlurConfig) -> np.ndarray:
    """Blur the whole image: separable Gaussian, edge-replicate padding.

    Convolution runs per channel in float64 and is quantized to uint8 once at
    the end.
    """
    img = validate_image(img)
    return np.clip(np.rint(_gaussian_blur_float(img, cfg.sigma)), 0, 255).astype(np.uint8)


def blur_isolate(
    img: np.ndarray,
    b: Box,
    cfg: BlurConfig,
    *,
    blurred: np.ndarray | None = None,
) -> np.ndarray:
    """Blur everything except the box region, which keeps its original pixels.

    ``blurred`` may carry a precomputed ``gaussian_blur(img, cfg)`` so the
    expensive pass runs once per image rather than once per proposal.
    """
    img = validate_image(img)
    x1, y1, x2, y2 = rasterize_box(b, img.shape[1], img.shape[0])
    out = (gaussian_blur(img, cfg) if blurred is None else validate_image(blurred)).copy()
    out[y1:y2, x1:x2] = img[y1:y2, x1:x2]
    return out


def shade_red(img: np.ndarray, b: Box) -> np.ndarray:
    """Alpha-blend a translucent red overlay over the box region.

    out = round((127 * shade + 128 * original) / 255) inside the box,
    unchanged outside.
    """
    img = validate_image(img)
    x1, y1, x2, y2 = rasterize_box(b, img.shape[1], img.shape[0])
    out = img.copy()
    region = out[y1:y2, x1:x2].astype(np.uint32)
    shade = np.array(SHADE_RGB, dtype=np.uint32)
    # (val + 127) // 255 rounds half-up; exact halves cannot occur (255 is odd).
    blended = (SHADE_ALPHA * shade + (255 - SHADE_ALPHA) * region + 127) // 255
    out[y1:y2, x1:x2] = blended.astype(np.uint8)
    return out


def _cubic_weight(t: np.ndarray) -> np.ndarray:
    """Catmull-Rom bicubic kernel (a = -0.5) evaluated at |t|."""
    a = -0.5
    t = np.abs(t)
    w = np.zeros_like(t)
    near = t <= 1.0
    far = (t > 1.0) & (t < 2.0)
    w[near] = ((a + 2.0) * t[near] - (a + 3.0)) * t[near] ** 2 + 1.0
    w[far] = a * (t[far] ** 3 - 5.0 * t[far] ** 2 + 8.0 * t[far] - 4.0)
    return w


def _resample_axis(arr: np.ndarray, out_size: int, axis: int) -> np.ndarray:
    in_size = arr.shape[axis]
    scale = in_size / out_size
    src = (np.arange(out_size, dtype=np.float64) + 0.5) * scale - 0.5
    base = np.floor(src).astype(np.int64)
    frac = src - base
    result = np.zeros(arr.shape[:axis] + (out_size,) + arr.shape[axis + 1:], dtype=np.float64)
    for offset in (-1, 0, 1, 2):
        idx = np.clip(base + offset, 0, in_size - 1)
        weights = _cubic_weight(frac - offset)
        shape = [1] * arr.ndim
        shape[axis] = out_size
        result += np.take(arr, idx, axis=axis) * weights.reshape(shape)
    return result


def _resize_bicubic_float(img: np.ndarray, width: int, height: int) -> np.ndarray:
    out = _resample_axis(img.astype(np.float64), width, axis=1)
    return _resample_axis(out, height, axis=0)


def resize_bicubic(img: np.ndarray, width: int, height: int) -> np.ndarray:
    """Resample to (height, width) with the classic bicubic kernel, clamped to [0, 255]."""
    img = validate_image(img)
    if width <= 0 or height <= 0:
        raise ValueError(f"target dimensions must be positive, got {width}x{height}")
    return np.clip(np.rint(_resize_bicubic_float(img, width, height)), 0, 255).astype(np.uint8)
