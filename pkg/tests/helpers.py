"""Independent reference implementations used as oracles.

Everything here is written directly from the defining formulas, without
reusing package internals, so agreement is evidence rather than
tautology.  The implementations favor obviousness over speed.
"""

from __future__ import annotations

import math

import numpy as np


# --- SSIM ---------------------------------------------------------------

def gauss_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def naive_ssim(a: np.ndarray, b: np.ndarray, window: int = 11,
               sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03) -> float:
    """Sliding-window SSIM straight from the definition (L = 1)."""
    c1 = k1**2
    c2 = k2**2
    channel_means = []
    for c in range(a.shape[2]):
        x = a[:, :, c]
        y = b[:, :, c]
        win = min(window, x.shape[0], x.shape[1])
        if win % 2 == 0:
            win -= 1
        w = gauss_window(win, sigma)
        values = []
        for i in range(x.shape[0] - win + 1):
            for j in range(x.shape[1] - win + 1):
                px = x[i:i + win, j:j + win]
                py = y[i:i + win, j:j + win]
                mx = float((w * px).sum())
                my = float((w * py).sum())
                vx = float((w * px * px).sum()) - mx * mx
                vy = float((w * py * py).sum()) - my * my
                cxy = float((w * px * py).sum()) - mx * my
                values.append(
                    ((2 * mx * my + c1) * (2 * cxy + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2))
                )
        channel_means.append(float(np.mean(values)))
    return float(np.mean(channel_means))


# --- Resampling ---------------------------------------------------------

_RADIUS = {"bilinear": 1.0, "bicubic": 2.0, "lanczos3": 3.0}


def _kernel(name: str, t: float) -> float:
    at = abs(t)
    if name == "bilinear":
        return max(0.0, 1.0 - at)
    if name == "bicubic":
        # Keys kernel, a = -0.5
        if at <= 1.0:
            return 1.5 * at**3 - 2.5 * at**2 + 1.0
        if at < 2.0:
            return -0.5 * at**3 + 2.5 * at**2 - 4.0 * at + 2.0
        return 0.0
    if name == "lanczos3":
        if at >= 3.0:
            return 0.0
        if at == 0.0:
            return 1.0
        return (3.0 * math.sin(math.pi * t) * math.sin(math.pi * t / 3.0)
                / (math.pi**2 * t**2))
    raise ValueError(name)


def naive_resample_axis(plane: np.ndarray, factor: int, name: str,
                        down: bool) -> np.ndarray:
    """Resample axis 0 by looping output pixels and integer taps."""
    n = plane.shape[0]
    if down:
        n_out = -(-n // factor)
        scale = float(factor)
    else:
        n_out = n * factor
        scale = 1.0 / factor
    support = _RADIUS[name] * (scale if down else 1.0)
    out = np.zeros((n_out,) + plane.shape[1:], dtype=np.float64)
    for o in range(n_out):
        center = (o + 0.5) * scale - 0.5
        lo = math.floor(center - support) - 1
        hi = math.ceil(center + support) + 1
        acc = np.zeros(plane.shape[1:], dtype=np.float64)
        wsum = 0.0
        for k in range(lo, hi + 1):
            t = (k - center) / (scale if down else 1.0)
            w = _kernel(name, t)
            if w == 0.0:
                continue
            src = min(max(k, 0), n - 1)
            acc = acc + w * plane[src]
            wsum += w
        out[o] = acc / wsum
    return out


def naive_resample(plane: np.ndarray, factor: int, name: str,
                   down: bool) -> np.ndarray:
    tmp = naive_resample_axis(plane, factor, name, down)
    return naive_resample_axis(tmp.T, factor, name, down).T


# --- Otsu ---------------------------------------------------------------

def between_class_variance(hist: np.ndarray, thresholds) -> float:
    """sigma_B^2 from the definition: sum of W_k (mu_k - mu)^2."""
    p = np.asarray(hist, dtype=np.float64)
    p = p / p.sum()
    mu = float((p * np.arange(256)).sum())
    edges = [-1] + list(thresholds) + [255]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        w = float(p[a + 1:b + 1].sum())
        if w > 0:
            mu_k = float((p[a + 1:b + 1] * np.arange(a + 1, b + 1)).sum()) / w
            total += w * (mu_k - mu) ** 2
    return total


def exhaustive_otsu(hist: np.ndarray, n: int):
    """Best thresholds by exhaustive argmax of sigma_B^2, n in {1, 2, 3}.

    Evaluates every threshold combination on grids of the definitional
    class term W_k (mu_k - mu)^2; np.argmax keeps the first (lowest)
    combination on exact ties.
    """
    p = np.asarray(hist, dtype=np.float64)
    p = p / p.sum()
    idx = np.arange(256, dtype=np.float64)
    w_cum = np.concatenate(([0.0], np.cumsum(p)))
    s_cum = np.concatenate(([0.0], np.cumsum(p * idx)))
    mu = s_cum[-1]

    def cls(a, b):
        # bins a..b inclusive; a/b may be integer arrays
        w = w_cum[b + 1] - w_cum[a]
        s = s_cum[b + 1] - s_cum[a]
        mu_k = np.divide(s, w, out=np.zeros_like(w + 0.0), where=w > 0)
        return np.where(w > 0, w * (mu_k - mu) ** 2, 0.0)

    if n == 1:
        t = np.arange(255)
        total = cls(np.zeros(255, dtype=int), t) + cls(t + 1, np.full(255, 255))
        best = int(np.argmax(total))
        return (best,), float(total[best])
    if n == 2:
        t1 = np.arange(254)[:, None]
        t2 = np.arange(255)[None, :]
        total = np.where(
            t2 > t1,
            cls(np.zeros_like(t1), t1) + cls(t1 + 1, t2)
            + cls(t2 + 1, np.full_like(t2, 255)),
            -np.inf,
        )
        flat = int(np.argmax(total))
        a, b = divmod(flat, total.shape[1])
        return (int(a), int(b)), float(total[a, b])
    if n == 3:
        t2g = np.arange(255)[:, None]
        t3g = np.arange(255)[None, :]
        best_v, best_t = -np.inf, None
        for t1 in range(253):
            total = np.where(
                (t2g > t1) & (t3g > t2g),
                cls(np.array(0), np.array(t1))
                + cls(np.full_like(t2g, t1 + 1), t2g)
                + cls(t2g + 1, t3g)
                + cls(t3g + 1, np.full_like(t3g, 255)),
                -np.inf,
            )
            v = float(np.max(total))
            if v > best_v + 1e-15:
                r, c = divmod(int(np.argmax(total)), total.shape[1])
                best_v, best_t = v, (t1, int(r), int(c))
        return best_t, best_v
    raise ValueError("n must be 1, 2 or 3")
