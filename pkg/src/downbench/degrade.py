"""Parametric image degradations and their composition.

Each degradation is a small frozen dataclass with an
``apply(img, rng_parts=...)`` method.  ``rng_parts`` seeds any stochastic
part of the operator; deterministic operators ignore it.  The noise
field is keyed independently of its strength, so sweeping the strength
rescales one fixed field per image instead of redrawing it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rng
from .errors import InvalidArgumentError
from .imagecore import Raster, clipped


class Degradation:
    """Base class; subclasses implement apply()."""

    def apply(self, img: Raster, rng_parts: tuple = ()) -> Raster:
        raise NotImplementedError


@dataclass(frozen=True)
class GaussBlur(Degradation):
    """Separable Gaussian blur with replicated edges.

    Taps are exp(-x^2 / (2 sigma^2)) over the ksize-wide window,
    normalized to sum 1, so constants pass through unchanged.
    """

    sigma: float
    ksize: int = 3

    def apply(self, img: Raster, rng_parts: tuple = ()) -> Raster:
        if self.sigma <= 0:
            raise InvalidArgumentError(f"blur sigma must be > 0, got {self.sigma}")
        if self.ksize < 1 or self.ksize % 2 == 0:
            raise InvalidArgumentError(f"blur ksize must be odd and >= 1, got {self.ksize}")
        taps = blur_taps(self.sigma, self.ksize)
        data = img.data
        out = np.stack(
            [_conv_clamp_2d(data[:, :, c], taps) for c in range(img.channels)], axis=-1
        )
        return clipped(out)


def blur_taps(sigma: float, ksize: int) -> np.ndarray:
    half = (ksize - 1) // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    taps = np.exp(-(x**2) / (2.0 * sigma**2))
    return taps / taps.sum()


def _conv_clamp_1d(plane: np.ndarray, taps: np.ndarray) -> np.ndarray:
    n = plane.shape[0]
    half = taps.shape[0] // 2
    out = np.zeros_like(plane)
    for j, t in enumerate(taps):
        src = np.clip(np.arange(n) + j - half, 0, n - 1)
        out += t * plane[src, :]
    return out


def _conv_clamp_2d(plane: np.ndarray, taps: np.ndarray) -> np.ndarray:
    out = _conv_clamp_1d(plane, taps)
    return _conv_clamp_1d(out.T, taps).T


@dataclass(frozen=True)
class GaussNoise(Degradation):
    """Additive Gaussian noise, clipped to [0, 1]; sigma 0 is a no-op.

    The unit-variance field depends only on ``rng_parts``, the salt and
    the image shape, never on sigma, so a sigma sweep rescales one
    fixed field per image.
    """

    sigma: float
    seed_salt: int = 0

    def apply(self, img: Raster, rng_parts: tuple = ()) -> Raster:
        if self.sigma < 0:
            raise InvalidArgumentError(f"noise sigma must be >= 0, got {self.sigma}")
        if self.sigma == 0:
            return img
        field = noise_field(img.shape, rng_parts, self.seed_salt)
        return clipped(img.data + self.sigma * field)


def noise_field(shape: tuple, rng_parts: tuple, seed_salt: int = 0) -> np.ndarray:
    """The standard-normal field GaussNoise scales by sigma."""
    gen = rng.stream(*rng_parts, "gauss_noise", seed_salt)
    return gen.standard_normal(shape)


@dataclass(frozen=True)
class Contrast(Degradation):
    """Scale contrast about mid-gray: out = 0.5 + gain * (in - 0.5), clipped."""

    gain: float

    def apply(self, img: Raster, rng_parts: tuple = ()) -> Raster:
        if self.gain < 0:
            raise InvalidArgumentError(f"contrast gain must be >= 0, got {self.gain}")
        return clipped(0.5 + self.gain * (img.data - 0.5))


@dataclass(frozen=True)
class QuantizeOtsu(Degradation):
    """Posterize via multilevel Otsu thresholds fit on the luma histogram.

    ``levels`` is the threshold count n; the image collapses to n + 1
    values per channel.  Thresholds maximize between-class variance of
    the 256-bin luma histogram (exhaustive search for n <= 2, dynamic
    programming above).  Each channel value is then replaced by the
    midpoint of the class its own bin falls in.
    """

    levels: int

    def apply(self, img: Raster, rng_parts: tuple = ()) -> Raster:
        if not 1 <= self.levels <= 254:
            raise InvalidArgumentError(
                f"threshold count must be in [1, 254], got {self.levels}"
            )
        luma_bins = _to_bins(img.luminance().data[:, :, 0])
        hist = np.bincount(luma_bins.ravel(), minlength=256).astype(np.float64)
        hist /= hist.sum()
        if np.count_nonzero(hist) == 1:
            # constant luma: no thresholds to fit, map each channel value
            # to the midpoint of its own single bin
            data = img.data
            out = np.empty_like(data)
            for c in range(img.channels):
                out[:, :, c] = _to_bins(data[:, :, c]) / 255.0
            return clipped(out)
        thresholds = otsu_thresholds(hist, self.levels)
        edges = np.concatenate(([-1], thresholds, [255]))
        mids = (edges[:-1] + 1 + edges[1:]) / 2.0 / 255.0
        data = img.data
        out = np.empty_like(data)
        for c in range(img.channels):
            bins = _to_bins(data[:, :, c])
            cls = np.searchsorted(thresholds, bins, side="left")
            out[:, :, c] = mids[cls]
        return clipped(out)


def _to_bins(plane: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(plane * 256.0), 0, 255).astype(np.int64)


def _interval_scores(hist: np.ndarray) -> np.ndarray:
    """sc[a, b] = w * mu^2 of bins a..b inclusive (0 where the mass is 0)."""
    p = np.asarray(hist, dtype=np.float64)
    w = np.concatenate(([0.0], np.cumsum(p)))
    s = np.concatenate(([0.0], np.cumsum(p * np.arange(256.0))))
    ww = w[1:][None, :] - w[:-1][:, None]  # ww[a, b] = total mass of bins a..b
    ss = s[1:][None, :] - s[:-1][:, None]
    sc = np.where(ww > 0.0, ss**2 / np.where(ww > 0.0, ww, 1.0), 0.0)
    return np.triu(sc)


def otsu_thresholds(hist: np.ndarray, n: int) -> tuple[int, ...]:
    """n thresholds in [0, 254] maximizing between-class variance.

    Returns bin indices t_1 < ... < t_n; class k spans bins
    [t_k + 1, t_{k+1}].  Ties resolve toward the lowest thresholds.
    """
    if len(hist) != 256:
        raise InvalidArgumentError(f"histogram must have 256 bins, got {len(hist)}")
    if not 1 <= n <= 254:
        raise InvalidArgumentError(f"threshold count must be in [1, 254], got {n}")
    sc = _interval_scores(hist)
    if n == 1:
        best, best_t = -1.0, 0
        for t in range(255):
            v = sc[0, t] + sc[t + 1, 255]
            if v > best:
                best, best_t = v, t
        return (best_t,)
    if n == 2:
        best, best_t = -1.0, (0, 1)
        for t1 in range(254):
            head = sc[0, t1]
            for t2 in range(t1 + 1, 255):
                v = head + sc[t1 + 1, t2] + sc[t2 + 1, 255]
                if v > best:
                    best, best_t = v, (t1, t2)
        return best_t
    return _otsu_dp(sc, n)


def _otsu_dp(sc: np.ndarray, n: int) -> tuple[int, ...]:
    # f[j] = best score of splitting bins 0..j into the classes so far;
    # cand[i, j] = f[i] + score of a new class spanning bins i+1..j
    ii = np.arange(255)[:, None]
    jj = np.arange(256)[None, :]
    f = sc[0, :].copy()
    arg = np.zeros((n + 2, 256), dtype=np.int64)
    for k in range(2, n + 2):
        cand = np.where(ii < jj, f[:255, None] + sc[1:256, :], -np.inf)
        best_i = np.argmax(cand, axis=0)
        f = cand[best_i, np.arange(256)]
        f[: k - 1] = -np.inf  # k classes need at least k bins
        arg[k] = best_i
    out = []
    j = 255
    for k in range(n + 1, 1, -1):
        j = int(arg[k][j])
        out.append(j)
    return tuple(reversed(out))


class Compose(Degradation):
    """Apply member degradations left to right.

    Each member's rng key is extended with its position, so identical
    stochastic members in one stack draw independent fields.
    """

    def __init__(self, members: Sequence[Degradation]):
        self.members = tuple(members)

    def apply(self, img: Raster, rng_parts: tuple = ()) -> Raster:
        out = img
        for i, member in enumerate(self.members):
            out = member.apply(out, rng_parts + (i,))
        return out

    def __repr__(self) -> str:
        return f"Compose({list(self.members)!r})"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Compose) and self.members == other.members


# Function forms of the operators, for direct use and the CLI.

def gaussian_blur(img: Raster, sigma: float, ksize: int = 3) -> Raster:
    return GaussBlur(sigma=sigma, ksize=ksize).apply(img)


def gaussian_noise(img: Raster, sigma: float, stream_key: tuple = ()) -> Raster:
    return GaussNoise(sigma=sigma).apply(img, stream_key)


def contrast(img: Raster, gain: float) -> Raster:
    return Contrast(gain=gain).apply(img)


def quantize_otsu(img: Raster, n: int) -> Raster:
    return QuantizeOtsu(levels=n).apply(img)


ORDERS = ("after_downscale", "before_downscale")


@dataclass(frozen=True)
class SyntheticDownscaler:
    """A downscaler built from a base kernel plus optional degradation.

    order picks whether the degradation hits the LR output
    (after_downscale, the default) or the HR input (before_downscale).
    A None spec is the plain base downscaler.
    """

    factor: int
    base: str = "bicubic"
    spec: Degradation | None = None
    order: str = "after_downscale"

    def __post_init__(self) -> None:
        if self.order not in ORDERS:
            raise InvalidArgumentError(
                f"unknown order {self.order!r}; expected one of {ORDERS}"
            )

    def __call__(self, img: Raster, rng_parts: tuple = ()) -> Raster:
        from . import resample

        if self.spec is None:
            return resample.downscale(img, self.factor, self.base)
        if self.order == "after_downscale":
            lr = resample.downscale(img, self.factor, self.base)
            return self.spec.apply(lr, rng_parts)
        degraded = self.spec.apply(img, rng_parts)
        return resample.downscale(degraded, self.factor, self.base)

    def describe(self) -> dict:
        return {
            "base": self.base,
            "factor": self.factor,
            "order": self.order,
            "degradation": repr(self.spec) if self.spec is not None else None,
        }


def apply_spec(
    spec: Degradation | None,
    base_downscale,
    img: Raster,
    order: str = "after_downscale",
    rng_parts: tuple = (),
) -> Raster:
    """Run base_downscale and spec in the order named by ``order``."""
    if order not in ORDERS:
        raise InvalidArgumentError(f"unknown order {order!r}; expected one of {ORDERS}")
    if spec is None:
        return base_downscale(img)
    if order == "after_downscale":
        return spec.apply(base_downscale(img), rng_parts)
    return base_downscale(spec.apply(img, rng_parts))


FAMILIES = {
    "gauss_blur": lambda level: GaussBlur(sigma=float(level)),
    "gauss_noise": lambda level: GaussNoise(sigma=float(level)),
    "contrast": lambda level: Contrast(gain=float(level)),
    "quantize_otsu": lambda level: QuantizeOtsu(levels=_int_level(level)),
}


def _int_level(level: float) -> int:
    if float(level) != int(level):
        raise InvalidArgumentError(f"quantize_otsu level must be an integer, got {level}")
    return int(level)


def build(spec: dict) -> Degradation:
    """Build one degradation from a {"kind": ..., <params>} mapping."""
    if "kind" not in spec:
        raise InvalidArgumentError(f"degradation spec missing 'kind': {spec!r}")
    kind = spec["kind"]
    params = {k: v for k, v in spec.items() if k != "kind"}
    table = {
        "gauss_blur": (GaussBlur, {"sigma"}, {"ksize"}),
        "gauss_noise": (GaussNoise, {"sigma"}, {"seed_salt"}),
        "contrast": (Contrast, {"gain"}, set()),
        "quantize_otsu": (QuantizeOtsu, {"levels"}, set()),
    }
    if kind not in table:
        raise InvalidArgumentError(
            f"unknown degradation kind {kind!r}; expected one of {sorted(table)}"
        )
    cls, required, optional = table[kind]
    extra = set(params) - required - optional
    if extra:
        raise InvalidArgumentError(f"unknown parameters {sorted(extra)} for {kind!r}")
    missing = required - set(params)
    if missing:
        raise InvalidArgumentError(f"missing parameters {sorted(missing)} for {kind!r}")
    return cls(**params)


def build_stack(specs: Sequence[dict]) -> Compose:
    """Build a left-to-right stack from a sequence of spec mappings."""
    return Compose([build(s) for s in specs])
