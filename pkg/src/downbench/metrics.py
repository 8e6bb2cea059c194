"""Full-reference image quality metrics and aggregate statistics.

SSIM follows the standard recipe: 11x11 Gaussian window (sigma 1.5),
K1 = 0.01, K2 = 0.03, dynamic range 1, valid-mode windows, mean over
the map and then over channels.  Images narrower than the window fall
back to the largest odd window that fits.  MS-SSIM is the usual
five-scale product with weights (0.0448, 0.2856, 0.3001, 0.2363,
0.1333); between scales both images are cropped to even dims and
2x2-box downsampled.  Trailing scales that no longer fit are dropped
and the remaining weights renormalized; per-scale terms are floored at
0 before exponentiation.
"""

from __future__ import annotations

import functools
import math
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import (
    BackendError,
    DimensionError,
    InvalidArgumentError,
    UndefinedCorrelationError,
)
from .imagecore import Raster

K1 = 0.01
K2 = 0.03
WINDOW = 11
WINDOW_SIGMA = 1.5
MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)

SIMILARITY_KINDS = ("psnr", "ssim", "ms_ssim")
DISTORTION_KINDS = ("one_minus_msssim", "lpips_remote")


def _check_same_shape(a: Raster, b: Raster) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")


@functools.lru_cache(maxsize=32)
def _gauss_taps(win: int, sigma: float) -> np.ndarray:
    x = np.arange(win, dtype=np.float64) - (win - 1) / 2.0
    taps = np.exp(-(x**2) / (2.0 * sigma**2))
    taps /= taps.sum()
    taps.setflags(write=False)
    return taps


def _conv2_valid(plane: np.ndarray, taps: np.ndarray) -> np.ndarray:
    out = _kernels.conv_valid_axis0(np.ascontiguousarray(plane), taps)
    out = _kernels.conv_valid_axis0(np.ascontiguousarray(out.T), taps)
    return out.T


def _ssim_maps(a: np.ndarray, b: np.ndarray, win: int) -> tuple[np.ndarray, np.ndarray]:
    """Luminance and contrast-structure maps for one channel plane."""
    taps = _gauss_taps(win, WINDOW_SIGMA)
    c1 = K1 * K1
    c2 = K2 * K2
    mu_a = _conv2_valid(a, taps)
    mu_b = _conv2_valid(b, taps)
    var_a = _conv2_valid(a * a, taps) - mu_a * mu_a
    var_b = _conv2_valid(b * b, taps) - mu_b * mu_b
    cov = _conv2_valid(a * b, taps) - mu_a * mu_b
    lum = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1)
    cs = (2.0 * cov + c2) / (var_a + var_b + c2)
    return lum, cs


def _fitting_window(a: Raster) -> int:
    win = min(WINDOW, a.height, a.width)
    return win if win % 2 == 1 else win - 1


def mse_psnr(a: Raster, b: Raster) -> tuple[float, float]:
    """Mean squared error and PSNR against peak 1.0; mse 0 gives psnr inf."""
    _check_same_shape(a, b)
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return 0.0, math.inf
    return mse, 10.0 * math.log10(1.0 / mse)


def psnr(a: Raster, b: Raster) -> float:
    return mse_psnr(a, b)[1]


def ssim(a: Raster, b: Raster) -> float:
    _check_same_shape(a, b)
    win = _fitting_window(a)
    vals = []
    for c in range(a.channels):
        lum, cs = _ssim_maps(a.data[:, :, c], b.data[:, :, c], win)
        vals.append(float(np.mean(lum * cs)))
    return float(np.mean(vals))


def _cs_mean(a: Raster, b: Raster) -> float:
    vals = []
    for c in range(a.channels):
        _, cs = _ssim_maps(a.data[:, :, c], b.data[:, :, c], WINDOW)
        vals.append(float(np.mean(cs)))
    return float(np.mean(vals))


def _halve(img: Raster) -> Raster:
    h = img.height - img.height % 2
    w = img.width - img.width % 2
    data = img.data[:h, :w, :]
    out = np.stack(
        [
            _kernels.block_mean2d(np.ascontiguousarray(data[:, :, c]), 2)
            for c in range(img.channels)
        ],
        axis=-1,
    )
    return Raster(out)


def ms_ssim(a: Raster, b: Raster) -> float:
    _check_same_shape(a, b)
    min_dim = min(a.height, a.width)
    n_scales = 0
    while n_scales < 5 and min_dim >= WINDOW * 2**n_scales:
        n_scales += 1
    if n_scales == 0:
        raise DimensionError(
            f"image {a.height}x{a.width} too small for ms_ssim (min dim {WINDOW})"
        )
    weights = np.asarray(MSSSIM_WEIGHTS[:n_scales])
    weights = weights / weights.sum()
    result = 1.0
    for k in range(n_scales):
        if k == n_scales - 1:
            term = ssim(a, b)
        else:
            term = _cs_mean(a, b)
            a, b = _halve(a), _halve(b)
        result *= max(term, 0.0) ** weights[k]
    return float(result)


def one_minus_msssim(a: Raster, b: Raster) -> float:
    return max(0.0, 1.0 - ms_ssim(a, b))


def distortion(kind: str, a: Raster, b: Raster, backend=None) -> float:
    """Distortion D(a, b) >= 0: lower is better."""
    if kind == "one_minus_msssim":
        return one_minus_msssim(a, b)
    if kind == "lpips_remote":
        if backend is None:
            raise BackendError(
                "lpips_remote needs a connected backend", endpoint="<none configured>"
            )
        return float(backend.metric("lpips", a, b))
    raise InvalidArgumentError(
        f"unknown distortion kind {kind!r}; expected one of {DISTORTION_KINDS}"
    )


def mean_std(samples: Sequence[float]) -> tuple[float, float]:
    """Arithmetic mean and population (divide-by-N) standard deviation."""
    if len(samples) == 0:
        raise InvalidArgumentError("mean_std of an empty list")
    arr = np.asarray(samples, dtype=np.float64)
    return float(arr.mean()), float(arr.std(ddof=0))


def _ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks, ties averaged."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Rank correlation: Pearson correlation of average-tied ranks."""
    if len(xs) != len(ys):
        raise InvalidArgumentError(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise InvalidArgumentError("spearman needs at least 2 points")
    ax = np.asarray(xs, dtype=np.float64)
    ay = np.asarray(ys, dtype=np.float64)
    if np.all(ax == ax[0]) or np.all(ay == ay[0]):
        raise UndefinedCorrelationError("correlation undefined for a constant list")
    rx = _ranks(ax)
    ry = _ranks(ay)
    rx -= rx.mean()
    ry -= ry.mean()
    return float((rx * ry).sum() / math.sqrt((rx * rx).sum() * (ry * ry).sum()))
