"""Framed wire protocol, server side.

Frame layout (little-endian throughout):

    magic "IDRD" (4 bytes) | version u16 = 1 | kind u16 | payload length u32 | payload

Kinds: 1 HELLO, 2 UPSCALE_REQ, 3 UPSCALE_RESP, 4 METRIC_REQ,
5 METRIC_RESP, 6 ERROR.  Rasters travel as height u32 | width u32 |
channels u8 | float32 samples, row-major, values in [0, 1] up to a
small slack that receivers clip away.

Deliberately standalone: this module is the full wire contract so the
service has no dependency on any particular client implementation.
Every read is bounds-checked and payload lengths are capped, so
arbitrary bytes raise FramingError instead of crashing the parser.
"""

from __future__ import annotations

import json
import struct
from typing import BinaryIO

import numpy as np

MAGIC = b"IDRD"
VERSION = 1
MAX_PAYLOAD = 64 * 1024 * 1024
RANGE_SLACK = 1e-3

KIND_HELLO = 1
KIND_UPSCALE_REQ = 2
KIND_UPSCALE_RESP = 3
KIND_METRIC_REQ = 4
KIND_METRIC_RESP = 5
KIND_ERROR = 6

_KINDS = frozenset(range(1, 7))
_HEADER = struct.Struct("<4sHHI")


class FramingError(Exception):
    """Malformed frame or payload."""


class _Reader:
    """Bounds-checked cursor over one payload."""

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.buf):
            raise FramingError(
                f"payload truncated at offset {self.pos} (need {n} bytes, "
                f"have {len(self.buf) - self.pos})"
            )
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise FramingError(
                f"{len(self.buf) - self.pos} trailing bytes after offset {self.pos}"
            )


def pack_frame(kind: int, payload: bytes) -> bytes:
    return _HEADER.pack(MAGIC, VERSION, kind, len(payload)) + payload


def read_frame(stream: BinaryIO) -> tuple[int, bytes]:
    """Read one frame; raises FramingError for any malformed input."""
    header = _read_exact(stream, _HEADER.size, "frame header")
    magic, version, kind, length = _HEADER.unpack(header)
    if magic != MAGIC:
        raise FramingError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FramingError(f"unsupported protocol version {version}")
    if kind not in _KINDS:
        raise FramingError(f"unknown message kind {kind}")
    if length > MAX_PAYLOAD:
        raise FramingError(f"payload length {length} exceeds cap {MAX_PAYLOAD}")
    return kind, _read_exact(stream, length, "payload")


def _read_exact(stream: BinaryIO, n: int, what: str) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = stream.read(remaining)
        if not chunk:
            raise FramingError(f"stream ended inside {what} ({remaining} bytes short)")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def encode_raster(arr: np.ndarray) -> bytes:
    """Serialize a (h, w, c) float array; values must already be in [0, 1]."""
    h, w, c = arr.shape
    head = struct.pack("<IIB", h, w, c)
    return head + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def decode_raster(r: _Reader) -> np.ndarray:
    height = r.u32()
    width = r.u32()
    channels = r.u8()
    if height < 1 or width < 1:
        raise FramingError(f"bad raster dims {height}x{width}")
    if channels not in (1, 3):
        raise FramingError(f"bad raster channel count {channels}")
    count = height * width * channels
    body = r.take(count * 4)
    arr = np.frombuffer(body, dtype="<f4").astype(np.float64).reshape(height, width, channels)
    if not np.all(np.isfinite(arr)):
        raise FramingError("non-finite raster samples")
    if arr.min() < -RANGE_SLACK or arr.max() > 1.0 + RANGE_SLACK:
        raise FramingError(
            f"raster samples outside [0,1]: min={arr.min()}, max={arr.max()}"
        )
    return np.clip(arr, 0.0, 1.0)


def pack_hello(info: dict) -> bytes:
    return pack_frame(KIND_HELLO, json.dumps(info, sort_keys=True).encode("utf-8"))


def parse_hello(payload: bytes) -> dict:
    try:
        info = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FramingError(f"bad HELLO payload: {exc}") from exc
    if not isinstance(info, dict):
        raise FramingError("HELLO payload is not a JSON object")
    return info


def parse_upscale_req(payload: bytes) -> tuple[int, int, int, str, np.ndarray]:
    """-> (factor, n_samples, seed, image_id, lr)."""
    r = _Reader(payload)
    factor = r.u16()
    n_samples = r.u16()
    seed = r.u64()
    ident = r.take(r.u16()).decode("utf-8", errors="replace")
    lr = decode_raster(r)
    r.done()
    if factor < 1:
        raise FramingError(f"bad upscale factor {factor}")
    if n_samples < 1:
        raise FramingError(f"bad sample count {n_samples}")
    return factor, n_samples, seed, ident, lr


def pack_upscale_resp(index: int, arr: np.ndarray) -> bytes:
    return pack_frame(KIND_UPSCALE_RESP, struct.pack("<H", index) + encode_raster(arr))


def parse_metric_req(payload: bytes) -> tuple[str, np.ndarray, np.ndarray]:
    r = _Reader(payload)
    kind = r.take(r.u16()).decode("utf-8", errors="replace")
    a = decode_raster(r)
    b = decode_raster(r)
    r.done()
    return kind, a, b


def pack_metric_resp(value: float) -> bytes:
    return pack_frame(KIND_METRIC_RESP, struct.pack("<d", value))


def pack_error(message: str) -> bytes:
    return pack_frame(KIND_ERROR, message.encode("utf-8"))
