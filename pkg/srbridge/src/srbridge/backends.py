"""Backend implementations and the adapter registry.

A backend answers three questions: what it supports (hello), what n
stochastic reconstructions of an LR image look like (upscale), and how
far apart two images are (metric).  Faults a well-behaved client could
still trigger, like asking for an unregistered metric kind, raise
BackendFault; the server turns those into ERROR frames and keeps the
connection alive.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .resize import bicubic_upscale


class BackendFault(Exception):
    """Request was well-framed but cannot be served."""


class MockBackend:
    """Deterministic stand-in for a real super-resolution model.

    Sample i (0-based) is bicubic interpolation plus a constant offset
    field of amplitude offset_step * (i mod 3), clipped to [0, 1], so
    tests can assert exact pixel values.  Seed and image id do not
    enter: the same request always yields identical payload bytes.
    The metric is mean absolute difference, which makes identical
    inputs score exactly 0.0.
    """

    offset_step = 0.01
    factors = (4, 8)
    metrics = ("lpips",)

    def hello(self) -> dict:
        return {
            "mode": "mock",
            "factors": list(self.factors),
            "metrics": list(self.metrics),
            "offset_step": self.offset_step,
            "name": "srbridge",
        }

    def upscale(
        self, lr: np.ndarray, factor: int, n_samples: int, seed: int, image_id: str
    ) -> list[np.ndarray]:
        del seed, image_id  # constant offsets: deterministic without them
        base = bicubic_upscale(lr, factor)
        return [
            np.clip(base + self.offset_step * (i % 3), 0.0, 1.0)
            for i in range(n_samples)
        ]

    def metric(self, kind: str, a: np.ndarray, b: np.ndarray) -> float:
        if kind not in self.metrics:
            raise BackendFault(f"unsupported metric {kind!r}")
        if a.shape != b.shape:
            raise BackendFault(f"shape mismatch: {a.shape} vs {b.shape}")
        return float(np.abs(a - b).mean())


class AdapterBackend:
    """Wraps an arbitrary sampler callable behind the wire contract.

    sampler(lr, factor, n_samples, seed, image_id) must return a
    sequence of (h*factor, w*factor, c) arrays in [0, 1].  An optional
    metric_fn(a, b) -> float serves the declared metric kinds.
    """

    def __init__(
        self,
        tag: str,
        sampler: Callable[..., Sequence[np.ndarray]],
        factors: Sequence[int],
        metric_fn: Callable[[np.ndarray, np.ndarray], float] | None = None,
        metrics: Sequence[str] = (),
    ):
        if metric_fn is None and metrics:
            raise ValueError(f"adapter {tag!r} declares metrics but has no metric_fn")
        self.tag = tag
        self._sampler = sampler
        self.factors = tuple(int(f) for f in factors)
        self._metric_fn = metric_fn
        self.metrics = tuple(metrics)

    def hello(self) -> dict:
        return {
            "mode": "adapter",
            "model": self.tag,
            "factors": list(self.factors),
            "metrics": list(self.metrics),
            "name": "srbridge",
        }

    def upscale(
        self, lr: np.ndarray, factor: int, n_samples: int, seed: int, image_id: str
    ) -> list[np.ndarray]:
        samples = list(self._sampler(lr, factor, n_samples, seed, image_id))
        if len(samples) != n_samples:
            raise BackendFault(
                f"adapter {self.tag!r} returned {len(samples)} samples, wanted {n_samples}"
            )
        return [np.clip(np.asarray(s, dtype=np.float64), 0.0, 1.0) for s in samples]

    def metric(self, kind: str, a: np.ndarray, b: np.ndarray) -> float:
        if kind not in self.metrics or self._metric_fn is None:
            raise BackendFault(f"unsupported metric {kind!r}")
        if a.shape != b.shape:
            raise BackendFault(f"shape mismatch: {a.shape} vs {b.shape}")
        return float(self._metric_fn(a, b))


_REGISTRY: dict[str, Callable[[], AdapterBackend]] = {}


def register(tag: str, factory: Callable[[], AdapterBackend]) -> None:
    """Make ``--mode adapter:tag`` resolve to factory()."""
    _REGISTRY[tag] = factory


def registered_tags() -> list[str]:
    return sorted(_REGISTRY)


def create(mode: str):
    """Build the backend for a CLI mode string."""
    if mode == "mock":
        return MockBackend()
    if mode.startswith("adapter:"):
        tag = mode[len("adapter:") :]
        if tag not in _REGISTRY:
            known = ", ".join(registered_tags()) or "none registered"
            raise KeyError(f"unknown adapter {tag!r} (known: {known})")
        return _REGISTRY[tag]()
    raise KeyError(f"unknown mode {mode!r}; expected 'mock' or 'adapter:<tag>'")
