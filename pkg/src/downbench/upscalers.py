"""Blind stochastic upscalers and chaining.

An upscaler sees only the LR raster, a 1-based sample index i and an
rng stream key; it can never observe which downscaler produced its
input.  Given the same (lr, i, key) the output is bit-identical.

The built-in stochastic baseline perturbs a deterministic interpolation
with a seeded high-pass field: white noise minus its own box filtering
at the scale factor, renormalized to unit variance.  The field carries
no energy below the LR Nyquist, so box-reducing a sample recovers the
box reduction of the plain interpolation almost exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels, resample, rng
from .errors import InvalidArgumentError, InvalidScaleError
from .imagecore import Raster, clipped


def _check_index(i: int) -> int:
    if i < 1:
        raise InvalidArgumentError(f"sample index must be >= 1, got {i}")
    return int(i)


class Upscaler:
    """Base class; subclasses set .factor and implement sample()."""

    factor: int

    def sample(self, lr: Raster, i: int, key: tuple = ()) -> Raster:
        raise NotImplementedError

    def samples(self, lr: Raster, n: int, key: tuple = ()) -> list[Raster]:
        """The first n samples; overridden where batching is cheaper."""
        return [self.sample(lr, i, key) for i in range(1, n + 1)]

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Interp(Upscaler):
    """Deterministic interpolation; every sample index yields the same image."""

    factor: int
    kernel: str = "bicubic"

    def sample(self, lr: Raster, i: int, key: tuple = ()) -> Raster:
        _check_index(i)
        return resample.upscale(lr, self.factor, self.kernel)

    def describe(self) -> dict:
        return {"kind": "interp", "factor": self.factor, "kernel": self.kernel}


@dataclass(frozen=True)
class Perturbed(Upscaler):
    """Interpolation plus tau times a seeded unit-variance high-pass field."""

    factor: int
    kernel: str = "bicubic"
    tau: float = 0.02

    def sample(self, lr: Raster, i: int, key: tuple = ()) -> Raster:
        _check_index(i)
        if self.tau < 0:
            raise InvalidArgumentError(f"tau must be >= 0, got {self.tau}")
        base = resample.upscale(lr, self.factor, self.kernel)
        if self.tau == 0:
            return base
        gen = rng.stream(*key, i)
        noise = gen.standard_normal(base.shape)
        low = np.stack(
            [
                np.repeat(
                    np.repeat(
                        _block_mean(noise[:, :, c], self.factor), self.factor, axis=0
                    ),
                    self.factor,
                    axis=1,
                )
                for c in range(base.channels)
            ],
            axis=-1,
        )
        resid = noise - low
        spread = resid.std()
        if spread > 0:
            resid = resid / spread
        return clipped(base.data + self.tau * resid)

    def describe(self) -> dict:
        return {
            "kind": "perturbed",
            "factor": self.factor,
            "kernel": self.kernel,
            "tau": self.tau,
        }


def _block_mean(plane: np.ndarray, s: int) -> np.ndarray:
    return _kernels.block_mean2d(np.ascontiguousarray(plane), s)


class Remote(Upscaler):
    """Upscaler served over the wire protocol by a connected backend.

    The stream key is folded into a 64-bit wire seed plus a stable id
    string; latent sampling lives server-side.  Sample i is defined as
    the last of the first i samples, so indexing is a prefix property
    the server must honor.
    """

    def __init__(self, factor: int, client):
        if factor < 1:
            raise InvalidScaleError(f"scale factor must be >= 1, got {factor}")
        self.factor = int(factor)
        self.client = client
        client.check_factor(self.factor)

    def sample(self, lr: Raster, i: int, key: tuple = ()) -> Raster:
        _check_index(i)
        return self.samples(lr, i, key)[-1]

    def samples(self, lr: Raster, n: int, key: tuple = ()) -> list[Raster]:
        if n < 1:
            raise InvalidArgumentError(f"sample count must be >= 1, got {n}")
        seed = rng.derive_u64(*key)
        image_id = "|".join(str(p) for p in key)
        return self.client.upscale(lr, self.factor, n, seed, image_id)

    def describe(self) -> dict:
        return {
            "kind": "remote",
            "factor": self.factor,
            "endpoint": getattr(self.client, "endpoint", "?"),
        }


class Chain(Upscaler):
    """Apply first then second; the combined factor is the product.

    The final stage runs on the caller's key unchanged (so chaining an
    identity in front of an upscaler reproduces it sample for sample);
    earlier stages run on keys extended with ("pre", stage index).
    """

    def __init__(self, first: Upscaler, second: Upscaler):
        self.first = first
        self.second = second
        self.factor = first.factor * second.factor

    def sample(self, lr: Raster, i: int, key: tuple = ()) -> Raster:
        _check_index(i)
        mid = self.first.sample(lr, i, key + ("pre", 0))
        return self.second.sample(mid, i, key)

    def describe(self) -> dict:
        return {
            "kind": "chain",
            "factor": self.factor,
            "stages": [self.first.describe(), self.second.describe()],
        }


def chain(first: Upscaler, second: Upscaler) -> Upscaler:
    return Chain(first, second)


def sample_upscale(u: Upscaler, lr: Raster, i: int, key: tuple = ()) -> Raster:
    """Draw the i-th (1-based) reconstruction from upscaler u."""
    return u.sample(lr, i, key)


def build(spec: dict, factor: int, client=None) -> Upscaler:
    """Build an upscaler from a {"kind": ..., <params>} mapping."""
    kind = spec.get("kind", "perturbed")
    params = {k: v for k, v in spec.items() if k != "kind"}
    if kind == "interp":
        return Interp(factor=factor, kernel=params.pop("kernel", "bicubic"), **_none(params, kind))
    if kind == "perturbed":
        return Perturbed(
            factor=factor,
            kernel=params.pop("kernel", "bicubic"),
            tau=float(params.pop("tau", 0.02)),
            **_none(params, kind),
        )
    if kind == "remote":
        params.pop("endpoint", None)
        if client is None:
            raise InvalidArgumentError("remote upscaler needs a connected backend")
        return Remote(factor=factor, client=client, **_none(params, kind))
    raise InvalidArgumentError(
        f"unknown upscaler kind {kind!r}; expected interp, perturbed or remote"
    )


def _none(params: dict, kind: str) -> dict:
    if params:
        raise InvalidArgumentError(f"unknown parameters {sorted(params)} for {kind!r}")
    return {}
