"""Keyed deterministic random streams.

Every stochastic operation draws from a stream keyed by a tuple such as
(global_seed, image_id, stage, sample_index).  Keys are hashed to a
128-bit Philox counter key, so results are independent of execution
order and worker count.  Determinism is guaranteed within this
implementation only; bit-exactness across implementations is a non-goal.
"""

from __future__ import annotations

import hashlib

import numpy as np

StreamKey = tuple


def _digest(parts: StreamKey, size: int) -> bytes:
    h = hashlib.blake2b(digest_size=size)
    for part in parts:
        if isinstance(part, bytes):
            raw = part
        elif isinstance(part, (str, int, float)):
            raw = repr(part).encode()
        else:
            raise TypeError(f"unsupported key part {part!r}")
        # Length-prefixed so ("ab", "c") and ("a", "bc") never collide.
        h.update(len(raw).to_bytes(4, "little"))
        h.update(raw)
    return h.digest()


def stream(*parts) -> np.random.Generator:
    """Fresh generator for the stream named by ``parts``.

    Same parts, same stream: two calls return generators that produce
    bit-identical draws.
    """
    key = int.from_bytes(_digest(parts, 16), "little")
    return np.random.Generator(np.random.Philox(key=key))


def derive_u64(*parts) -> int:
    """64-bit value derived from ``parts``; used as a wire-protocol seed."""
    return int.from_bytes(_digest(parts, 8), "little")
