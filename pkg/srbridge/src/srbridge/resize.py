"""Separable bicubic upscaling for the mock backend.

Align-centers convention: pixel i of an n-pixel axis sits at
(i + 0.5) / n in unit coordinates, so output sample o of an upscale by
integer factor s reads from source coordinate (o + 0.5) / s - 0.5 with
the unit-width Keys kernel (a = -0.5).  Out-of-range taps clamp to the
edge, each tap window is renormalized to sum 1, and the result is
clipped to [0, 1].
"""

from __future__ import annotations

import functools
import math

import numpy as np

_SUPPORT = 2.0  # Keys cubic radius


def _keys_cubic(t: np.ndarray) -> np.ndarray:
    a = -0.5
    at = np.abs(t)
    inner = (a + 2.0) * at**3 - (a + 3.0) * at**2 + 1.0
    outer = a * (at**3 - 5.0 * at**2 + 8.0 * at - 4.0)
    return np.where(at <= 1.0, inner, np.where(at < 2.0, outer, 0.0))


@functools.lru_cache(maxsize=128)
def _axis_weights(n_in: int, factor: int) -> tuple[np.ndarray, np.ndarray]:
    """Clamped tap indices (O, K) and normalized weights for one axis."""
    n_out = n_in * factor
    centers = (np.arange(n_out, dtype=np.float64) + 0.5) / factor - 0.5
    k = int(math.floor(2.0 * _SUPPORT)) + 1
    first = np.ceil(centers - _SUPPORT).astype(np.int64)
    taps = first[:, None] + np.arange(k, dtype=np.int64)[None, :]
    wts = _keys_cubic(taps.astype(np.float64) - centers[:, None])
    wts /= np.add.reduce(wts, axis=1)[:, None]
    idx = np.clip(taps, 0, n_in - 1)
    idx.setflags(write=False)
    wts.setflags(write=False)
    return idx, wts


def _gather_axis0(plane: np.ndarray, idx: np.ndarray, wts: np.ndarray) -> np.ndarray:
    out = np.zeros((idx.shape[0], plane.shape[1]), dtype=np.float64)
    for j in range(idx.shape[1]):
        out += wts[:, j : j + 1] * plane[idx[:, j], :]
    return out


def bicubic_upscale(arr: np.ndarray, factor: int) -> np.ndarray:
    """Upscale a (h, w, c) array by an integer factor >= 1."""
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    if factor == 1:
        return np.clip(arr, 0.0, 1.0)
    planes = []
    for c in range(arr.shape[2]):
        plane = np.ascontiguousarray(arr[:, :, c], dtype=np.float64)
        idx_r, wts_r = _axis_weights(plane.shape[0], factor)
        out = _gather_axis0(plane, idx_r, wts_r)
        idx_c, wts_c = _axis_weights(plane.shape[1], factor)
        out = _gather_axis0(np.ascontiguousarray(out.T), idx_c, wts_c).T
        planes.append(out)
    return np.clip(np.stack(planes, axis=-1), 0.0, 1.0)
