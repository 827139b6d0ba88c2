"""Pixel-level image operations backing the enhancement tools.

All functions take and return H x W x C uint8 rasters (C in {1, 3}) and
never modify their input. Arithmetic is done in float64 and rounded
half-to-even before clamping back to [0, 255].
"""

from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image

from .data import check_raster
from .errors import ImageTooSmall

BRIGHTNESS_FACTOR = 1.5  # "by 50%"
CONTRAST_UP = 1.5
CONTRAST_DOWN = 0.5
CONTRAST_PIVOT = 128.0

SHARPEN_KERNEL = np.array([[0, -1, 0], [-1, 5, -1], [0, -1, 0]], dtype=np.float64)
SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
SOBEL_Y = np.array([[-1, -2, -1], [0, 0, 0], [1, 2, 1]], dtype=np.float64)

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def _to_uint8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


def adjust_brightness(img: np.ndarray) -> np.ndarray:
    """Scale every channel by 1.5, clamped to [0, 255]."""
    check_raster(img)
    return _to_uint8(img.astype(np.float64) * BRIGHTNESS_FACTOR)


def adjust_contrast(img: np.ndarray, direction: str) -> np.ndarray:
    """Stretch (increase) or compress (decrease) values about mid-grey 128."""
    check_raster(img)
    if direction == "increase":
        factor = CONTRAST_UP
    elif direction == "decrease":
        factor = CONTRAST_DOWN
    else:
        raise ValueError(f"direction must be 'increase' or 'decrease', got {direction!r}")
    return _to_uint8(CONTRAST_PIVOT + factor * (img.astype(np.float64) - CONTRAST_PIVOT))


def _convolve3(channel: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """3x3 convolution with replicated borders; channel is H x W float64."""
    padded = np.pad(channel, 1, mode="edge")
    h, w = channel.shape
    out = np.zeros_like(channel)
    for dy in range(3):
        for dx in range(3):
            out += kernel[dy, dx] * padded[dy : dy + h, dx : dx + w]
    return out


def sharpen(img: np.ndarray) -> np.ndarray:
    """Unsharp 3x3 kernel per channel; requires at least a 3x3 image."""
    check_raster(img)
    if min(img.shape[0], img.shape[1]) < 3:
        raise ImageTooSmall(f"sharpen needs at least 3x3, got {img.shape[0]}x{img.shape[1]}")
    work = img.astype(np.float64)
    out = np.stack(
        [_convolve3(work[:, :, c], SHARPEN_KERNEL) for c in range(img.shape[2])], axis=2
    )
    return _to_uint8(out)


def luminance(img: np.ndarray) -> np.ndarray:
    """Integer luminance plane (H x W uint8): BT.601 weights for color input."""
    check_raster(img)
    if img.shape[2] == 1:
        return img[:, :, 0].copy()
    work = img.astype(np.float64)
    r, g, b = LUMA_WEIGHTS
    return _to_uint8(r * work[:, :, 0] + g * work[:, :, 1] + b * work[:, :, 2])


def edge_detect(img: np.ndarray) -> np.ndarray:
    """Sobel gradient magnitude of the luminance, rescaled so max -> 255.

    Output replicates the single edge plane across the input's channels.
    """
    check_raster(img)
    if min(img.shape[0], img.shape[1]) < 3:
        raise ImageTooSmall(f"edge detection needs at least 3x3, got {img.shape[0]}x{img.shape[1]}")
    lum = luminance(img).astype(np.float64)
    gx = _convolve3(lum, SOBEL_X)
    gy = _convolve3(lum, SOBEL_Y)
    mag = np.sqrt(gx * gx + gy * gy)
    peak = mag.max()
    if peak > 0:
        mag = mag * (255.0 / peak)
    plane = _to_uint8(mag)
    return np.repeat(plane[:, :, None], img.shape[2], axis=2)


def histogram_equalize(img: np.ndarray) -> np.ndarray:
    """Equalize the luminance histogram via the standard CDF remapping.

    Grey input is remapped directly; color input is rescaled per pixel by
    the ratio of equalized to original luminance. A single-level image is
    returned unchanged (the CDF mapping is degenerate there).
    """
    check_raster(img)
    lum = luminance(img)
    hist = np.bincount(lum.ravel(), minlength=256)
    cdf = np.cumsum(hist) / lum.size
    occupied = np.nonzero(hist)[0]
    cdf_min = cdf[occupied[0]]
    if cdf_min >= 1.0:
        return img.copy()
    lut = _to_uint8(255.0 * (cdf - cdf_min) / (1.0 - cdf_min))

    if img.shape[2] == 1:
        return lut[img[:, :, 0]][:, :, None]

    new_lum = lut[lum].astype(np.float64)
    old_lum = lum.astype(np.float64)
    ratio = np.divide(new_lum, old_lum, out=np.ones_like(new_lum), where=old_lum > 0)
    out = img.astype(np.float64) * ratio[:, :, None]
    # pixels with zero original luminance have no color to scale: paint grey
    zero = old_lum == 0
    if zero.any():
        out[zero] = new_lum[zero][:, None]
    return _to_uint8(out)


# --- raster <-> bytes plumbing ---


def to_png_bytes(img: np.ndarray) -> bytes:
    check_raster(img)
    arr = img[:, :, 0] if img.shape[2] == 1 else img
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def from_png_bytes(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        if im.mode == "L":
            return np.asarray(im, dtype=np.uint8)[:, :, None]
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def to_png_base64(img: np.ndarray) -> str:
    return base64.b64encode(to_png_bytes(img)).decode("ascii")


def from_png_base64(text: str) -> np.ndarray:
    return from_png_bytes(base64.b64decode(text))
