"""Pure NumPy kernel backend.

Drop-in twin of the compiled backend in ``_fast``.  Per output element
both backends accumulate contributions in the same order (ascending tap
index, row-major within blocks), so results agree to within last-ulp
rounding differences; bitwise guarantees hold only within one backend.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "pure"


def conv_valid_axis0(src: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Valid-mode 1-D correlation along axis 0, vectorized over axis 1."""
    k = taps.shape[0]
    n = src.shape[0] - k + 1
    out = np.zeros((n, src.shape[1]), dtype=np.float64)
    for j in range(k):
        out += taps[j] * src[j : j + n, :]
    return out


def gather_axis0(src: np.ndarray, idx: np.ndarray, wts: np.ndarray) -> np.ndarray:
    """out[o, x] = sum_k wts[o, k] * src[idx[o, k], x]."""
    k = idx.shape[1]
    out = np.zeros((idx.shape[0], src.shape[1]), dtype=np.float64)
    for j in range(k):
        out += wts[:, j : j + 1] * src[idx[:, j], :]
    return out


def _block_sum2d(src: np.ndarray, s: int) -> np.ndarray:
    h, w = src.shape
    tmp = np.add.reduceat(src, np.arange(0, h, s), axis=0)
    return np.add.reduceat(tmp, np.arange(0, w, s), axis=1)


def _block_counts(h: int, w: int, s: int) -> np.ndarray:
    ys = np.arange(0, h, s)
    xs = np.arange(0, w, s)
    heights = np.minimum(ys + s, h) - ys
    widths = np.minimum(xs + s, w) - xs
    return (heights[:, None] * widths[None, :]).astype(np.float64)


def block_mean2d(src: np.ndarray, s: int) -> np.ndarray:
    """Unweighted mean over s-by-s tiles; edge tiles cover the remainder."""
    return _block_sum2d(src, s) / _block_counts(*src.shape, s)


def dpid_reduce(src: np.ndarray, guide: np.ndarray, s: int, lam: float) -> np.ndarray:
    """Detail-weighted tile reduction against a smooth guide.

    Pixels far from the guide value of their tile get weight
    (distance / sqrt(C)) ** lam.  lam == 0 reproduces block_mean2d
    bit for bit; a tile with zero total weight falls back to its
    unweighted mean.
    """
    h, w, c = src.shape
    gup = np.repeat(np.repeat(guide, s, axis=0), s, axis=1)[:h, :w]
    dist = np.sqrt(np.add.reduce((src - gup) ** 2, axis=2)) / math.sqrt(c)
    wts = dist ** lam
    den = _block_sum2d(wts, s)
    num = np.stack([_block_sum2d(wts * src[..., j], s) for j in range(c)], axis=-1)
    dead = den == 0.0
    out = num / np.where(dead, 1.0, den)[..., None]
    if np.any(dead):
        counts = _block_counts(h, w, s)
        fallback = np.stack(
            [_block_sum2d(src[..., j], s) / counts for j in range(c)], axis=-1
        )
        out = np.where(dead[..., None], fallback, out)
    return out
