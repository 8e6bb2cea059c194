"""Integer-factor image resampling with an align-centers convention.

Pixel i of an n-pixel axis sits at (i + 0.5) / n in unit coordinates, so
output sample o of a downscale by factor s reads from source coordinate
(o + 0.5) * s - 0.5 and an upscale reads from (o + 0.5) / s - 0.5.
Downscaling widens the kernel by s (anti-aliasing); upscaling keeps the
unit kernel.  Out-of-range taps clamp to the edge, each tap window is
renormalized to sum 1, and results are clipped back to [0, 1].

Downscalers: box (tile mean), nearest (top-left of each tile), bilinear,
bicubic (Keys, a = -0.5), lanczos3, dpid (detail-weighted tile mean).
Upscalers: nearest and box (pixel replication), bilinear, bicubic,
lanczos3.
"""

from __future__ import annotations

import functools
import math
from typing import Callable

import numpy as np

from . import _kernels
from .errors import InvalidArgumentError, InvalidScaleError
from .imagecore import Raster, clipped


def kernel_linear(t: np.ndarray) -> np.ndarray:
    at = np.abs(t)
    return np.where(at < 1.0, 1.0 - at, 0.0)


def kernel_cubic(t: np.ndarray) -> np.ndarray:
    """Keys cubic with a = -0.5."""
    a = -0.5
    at = np.abs(t)
    inner = (a + 2.0) * at**3 - (a + 3.0) * at**2 + 1.0
    outer = a * (at**3 - 5.0 * at**2 + 8.0 * at - 4.0)
    return np.where(at <= 1.0, inner, np.where(at < 2.0, outer, 0.0))


def kernel_lanczos3(t: np.ndarray) -> np.ndarray:
    at = np.abs(t)
    val = np.sinc(t) * np.sinc(t / 3.0)
    return np.where(at < 3.0, val, 0.0)


_KERNELS: dict[str, tuple[Callable[[np.ndarray], np.ndarray], int]] = {
    "bilinear": (kernel_linear, 1),
    "bicubic": (kernel_cubic, 2),
    "lanczos3": (kernel_lanczos3, 3),
}

DOWNSCALE_METHODS = ("box", "nearest", "bilinear", "bicubic", "lanczos3", "dpid")
UPSCALE_METHODS = ("nearest", "box", "bilinear", "bicubic", "lanczos3")


def _check_factor(factor: int) -> int:
    if not isinstance(factor, (int, np.integer)) or isinstance(factor, bool):
        raise InvalidScaleError(f"scale factor must be an integer, got {factor!r}")
    if factor < 1:
        raise InvalidScaleError(f"scale factor must be >= 1, got {factor}")
    return int(factor)


@functools.lru_cache(maxsize=256)
def _axis_weights(
    n_in: int, factor: int, method: str, down: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Tap indices (O, K) and normalized weights for one axis."""
    kfunc, radius = _KERNELS[method]
    if down:
        n_out = -(-n_in // factor)
        scale = float(factor)
        centers = (np.arange(n_out, dtype=np.float64) + 0.5) * factor - 0.5
    else:
        n_out = n_in * factor
        scale = 1.0
        centers = (np.arange(n_out, dtype=np.float64) + 0.5) / factor - 0.5
    support = radius * scale
    k = int(math.floor(2.0 * support)) + 1
    first = np.ceil(centers - support).astype(np.int64)
    offsets = np.arange(k, dtype=np.int64)
    taps = first[:, None] + offsets[None, :]
    dist = (taps.astype(np.float64) - centers[:, None]) / scale
    wts = kfunc(dist)
    wts /= np.add.reduce(wts, axis=1)[:, None]
    idx = np.clip(taps, 0, n_in - 1).astype(np.int32)
    idx = np.ascontiguousarray(idx)
    wts = np.ascontiguousarray(wts)
    idx.setflags(write=False)
    wts.setflags(write=False)
    return idx, wts


def _apply_separable(plane: np.ndarray, factor: int, method: str, down: bool) -> np.ndarray:
    idx_r, wts_r = _axis_weights(plane.shape[0], factor, method, down)
    out = _kernels.gather_axis0(np.ascontiguousarray(plane), idx_r, wts_r)
    idx_c, wts_c = _axis_weights(plane.shape[1], factor, method, down)
    out = _kernels.gather_axis0(np.ascontiguousarray(out.T), idx_c, wts_c)
    return out.T


def _per_channel(data: np.ndarray, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    return np.stack([fn(data[:, :, c]) for c in range(data.shape[2])], axis=-1)


def downscale(
    img: Raster, factor: int, method: str = "bicubic", *, dpid_lambda: float = 1.0
) -> Raster:
    """Downscale by an integer factor; factor 1 is the identity mapping."""
    factor = _check_factor(factor)
    if method not in DOWNSCALE_METHODS:
        raise InvalidArgumentError(
            f"unknown downscale method {method!r}; expected one of {DOWNSCALE_METHODS}"
        )
    if factor > img.height or factor > img.width:
        raise InvalidScaleError(
            f"scale factor {factor} exceeds image dims {img.height}x{img.width}"
        )
    data = img.data
    if method == "box":
        out = _per_channel(data, lambda p: _kernels.block_mean2d(np.ascontiguousarray(p), factor))
    elif method == "nearest":
        out = data[::factor, ::factor, :]
    elif method == "dpid":
        src = np.ascontiguousarray(data)
        guide = _per_channel(data, lambda p: _kernels.block_mean2d(np.ascontiguousarray(p), factor))
        out = _kernels.dpid_reduce(src, np.ascontiguousarray(guide), factor, float(dpid_lambda))
    else:
        out = _per_channel(data, lambda p: _apply_separable(p, factor, method, True))
    return clipped(out)


def upscale(img: Raster, factor: int, method: str = "bicubic") -> Raster:
    """Upscale by an integer factor; factor 1 is the identity mapping."""
    factor = _check_factor(factor)
    if method not in UPSCALE_METHODS:
        raise InvalidArgumentError(
            f"unknown upscale method {method!r}; expected one of {UPSCALE_METHODS}"
        )
    data = img.data
    if method in ("nearest", "box"):
        out = np.repeat(np.repeat(data, factor, axis=0), factor, axis=1)
    else:
        out = _per_channel(data, lambda p: _apply_separable(p, factor, method, False))
    return clipped(out)
