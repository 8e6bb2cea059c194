"""Framed wire protocol for upscale/metric backends, plus the client.

Frame layout (all integers little-endian):

    magic "IDRD" (4 bytes) | version u16 = 1 | kind u16 | payload length u32 | payload

Kinds: 1 HELLO, 2 UPSCALE_REQ, 3 UPSCALE_RESP, 4 METRIC_REQ,
5 METRIC_RESP, 6 ERROR.

Payloads:
    HELLO         UTF-8 JSON.  The client sends {"role": "client"}; the
                  server answers with at least {"mode", "factors",
                  "metrics"} plus free-form metadata.
    raster        height u32 | width u32 | channels u8 | f32 samples,
                  row-major (h, w, c).  Values must lie in [0, 1] up to
                  f32 rounding slack; receivers clip the slack away.
    UPSCALE_REQ   factor u16 | n_samples u16 | seed u64 | id length u16 |
                  id UTF-8 | raster
    UPSCALE_RESP  one frame per sample: sample index u16 (0-based) | raster
    METRIC_REQ    kind length u16 | kind UTF-8 | raster a | raster b
    METRIC_RESP   f64 scalar
    ERROR         UTF-8 message

Framing violations raise ProtocolError; transport failures and ERROR
frames raise BackendError naming the endpoint.  The parser never trusts
a length field: payloads are capped and every read is bounds-checked,
so arbitrary bytes cannot crash it.
"""

from __future__ import annotations

import json
import socket
import struct
import subprocess
from typing import BinaryIO, Optional, Sequence

import numpy as np

from .errors import BackendError, ProtocolError
from .imagecore import Raster

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


class _Reader:
    """Bounds-checked cursor over one payload."""

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.buf):
            raise ProtocolError(
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

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise ProtocolError(
                f"{len(self.buf) - self.pos} trailing bytes after offset {self.pos}"
            )


def pack_frame(kind: int, payload: bytes) -> bytes:
    return _HEADER.pack(MAGIC, VERSION, kind, len(payload)) + payload


def read_frame(stream: BinaryIO) -> tuple[int, bytes]:
    """Read one frame; raises ProtocolError for any malformed input."""
    header = _read_exact(stream, _HEADER.size, "frame header")
    magic, version, kind, length = _HEADER.unpack(header)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ProtocolError(f"unsupported protocol version {version}")
    if kind not in _KINDS:
        raise ProtocolError(f"unknown message kind {kind}")
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"payload length {length} exceeds cap {MAX_PAYLOAD}")
    return kind, _read_exact(stream, length, "payload")


def _read_exact(stream: BinaryIO, n: int, what: str) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = stream.read(remaining)
        if not chunk:
            raise ProtocolError(f"stream ended inside {what} ({remaining} bytes short)")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def encode_raster(img: Raster) -> bytes:
    head = struct.pack("<IIB", img.height, img.width, img.channels)
    return head + np.ascontiguousarray(img.data, dtype="<f4").tobytes()


def decode_raster(r: _Reader) -> Raster:
    height = r.u32()
    width = r.u32()
    channels = r.u8()
    if height < 1 or width < 1:
        raise ProtocolError(f"bad raster dims {height}x{width}")
    if channels not in (1, 3):
        raise ProtocolError(f"bad raster channel count {channels}")
    count = height * width * channels
    body = r.take(count * 4)
    arr = np.frombuffer(body, dtype="<f4").astype(np.float64).reshape(height, width, channels)
    if not np.all(np.isfinite(arr)):
        raise ProtocolError("non-finite raster samples")
    if arr.min() < -RANGE_SLACK or arr.max() > 1.0 + RANGE_SLACK:
        raise ProtocolError(
            f"raster samples outside [0,1]: min={arr.min()}, max={arr.max()}"
        )
    return Raster(np.clip(arr, 0.0, 1.0))


def pack_hello(info: dict) -> bytes:
    return pack_frame(KIND_HELLO, json.dumps(info, sort_keys=True).encode("utf-8"))


def parse_hello(payload: bytes) -> dict:
    try:
        info = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"bad HELLO payload: {exc}") from exc
    if not isinstance(info, dict):
        raise ProtocolError("HELLO payload is not a JSON object")
    return info


def pack_upscale_req(
    lr: Raster, factor: int, n_samples: int, seed: int, image_id: str
) -> bytes:
    ident = image_id.encode("utf-8")
    if len(ident) > 0xFFFF:
        raise ProtocolError(f"image id too long ({len(ident)} bytes)")
    head = struct.pack("<HHQH", factor, n_samples, seed, len(ident))
    return pack_frame(KIND_UPSCALE_REQ, head + ident + encode_raster(lr))


def parse_upscale_req(payload: bytes) -> tuple[int, int, int, str, Raster]:
    r = _Reader(payload)
    factor = r.u16()
    n_samples = r.u16()
    seed = r.u64()
    ident = r.take(r.u16()).decode("utf-8", errors="replace")
    lr = decode_raster(r)
    r.done()
    if factor < 1:
        raise ProtocolError(f"bad upscale factor {factor}")
    if n_samples < 1:
        raise ProtocolError(f"bad sample count {n_samples}")
    return factor, n_samples, seed, ident, lr


def pack_upscale_resp(index: int, img: Raster) -> bytes:
    return pack_frame(KIND_UPSCALE_RESP, struct.pack("<H", index) + encode_raster(img))


def parse_upscale_resp(payload: bytes) -> tuple[int, Raster]:
    r = _Reader(payload)
    index = r.u16()
    img = decode_raster(r)
    r.done()
    return index, img


def pack_metric_req(kind: str, a: Raster, b: Raster) -> bytes:
    name = kind.encode("utf-8")
    head = struct.pack("<H", len(name))
    return pack_frame(KIND_METRIC_REQ, head + name + encode_raster(a) + encode_raster(b))


def parse_metric_req(payload: bytes) -> tuple[str, Raster, Raster]:
    r = _Reader(payload)
    kind = r.take(r.u16()).decode("utf-8", errors="replace")
    a = decode_raster(r)
    b = decode_raster(r)
    r.done()
    return kind, a, b


def pack_metric_resp(value: float) -> bytes:
    return pack_frame(KIND_METRIC_RESP, struct.pack("<d", value))


def parse_metric_resp(payload: bytes) -> float:
    r = _Reader(payload)
    value = r.f64()
    r.done()
    return value


def pack_error(message: str) -> bytes:
    return pack_frame(KIND_ERROR, message.encode("utf-8"))


# ---------------------------------------------------------------------------
# Transports

class StdioTransport:
    """Backend as a subprocess speaking frames over stdin/stdout."""

    def __init__(self, command: Sequence[str]):
        self.describe = "stdio:" + " ".join(command)
        try:
            self._proc = subprocess.Popen(
                list(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
            )
        except OSError as exc:
            raise BackendError(
                f"cannot start backend process: {exc}", endpoint=self.describe
            ) from exc
        self.reader = self._proc.stdout
        self.writer = self._proc.stdin

    def close(self) -> None:
        try:
            if self._proc.stdin:
                self._proc.stdin.close()
            self._proc.wait(timeout=5)
        except (OSError, subprocess.TimeoutExpired):
            self._proc.kill()
            self._proc.wait()


class TcpTransport:
    """Backend behind a TCP socket."""

    def __init__(self, host: str, port: int, timeout: Optional[float] = 120.0):
        self.describe = f"tcp:{host}:{port}"
        try:
            self._sock = socket.create_connection((host, port), timeout=10.0)
            self._sock.settimeout(timeout)
        except OSError as exc:
            raise BackendError(
                f"cannot connect: {exc}", endpoint=self.describe
            ) from exc
        self.reader = self._sock.makefile("rb")
        self.writer = self._sock.makefile("wb")

    def close(self) -> None:
        for closer in (self.reader, self.writer, self._sock):
            try:
                closer.close()
            except OSError:
                pass


def open_transport(spec: dict):
    """Build a transport from {"transport": "stdio", "command": [...]}
    or {"transport": "tcp", "host": ..., "port": ...}."""
    kind = spec.get("transport")
    if kind == "stdio":
        command = spec.get("command")
        if not command:
            raise BackendError("stdio transport needs a command", endpoint="stdio:?")
        if isinstance(command, str):
            command = command.split()
        return StdioTransport(command)
    if kind == "tcp":
        host = spec.get("host", "127.0.0.1")
        port = spec.get("port")
        if port is None:
            raise BackendError("tcp transport needs a port", endpoint=f"tcp:{host}:?")
        return TcpTransport(host, int(port))
    raise BackendError(
        f"unknown transport {kind!r}; expected 'stdio' or 'tcp'",
        endpoint=str(kind),
    )


# ---------------------------------------------------------------------------
# Client

class Client:
    """Handshaken connection to an upscale/metric backend.

    One request is in flight at a time per client; open several clients
    for parallelism.
    """

    def __init__(self, transport):
        self._transport = transport
        self.endpoint = transport.describe
        self.hello: dict = {}
        self.factors: frozenset[int] = frozenset()
        self.metrics: frozenset[str] = frozenset()
        self._handshake()

    def _handshake(self) -> None:
        self._send(pack_hello({"role": "client"}))
        kind, payload = self._recv()
        if kind != KIND_HELLO:
            raise ProtocolError(f"expected HELLO, got kind {kind}")
        self.hello = parse_hello(payload)
        try:
            self.factors = frozenset(int(f) for f in self.hello.get("factors", []))
            self.metrics = frozenset(str(m) for m in self.hello.get("metrics", []))
        except (TypeError, ValueError) as exc:
            raise ProtocolError(f"bad capability declaration: {exc}") from exc

    def check_factor(self, factor: int) -> None:
        if factor not in self.factors:
            raise BackendError(
                f"backend does not support factor {factor} "
                f"(declares {sorted(self.factors)})",
                endpoint=self.endpoint,
                kind="capability",
            )

    def check_metric(self, kind: str) -> None:
        if kind not in self.metrics:
            raise BackendError(
                f"backend does not support metric {kind!r} "
                f"(declares {sorted(self.metrics)})",
                endpoint=self.endpoint,
                kind="capability",
            )

    def upscale(
        self, lr: Raster, factor: int, n_samples: int, seed: int, image_id: str
    ) -> list[Raster]:
        self.check_factor(factor)
        self._send(pack_upscale_req(lr, factor, n_samples, seed, image_id))
        out: list[Optional[Raster]] = [None] * n_samples
        for _ in range(n_samples):
            kind, payload = self._recv()
            if kind == KIND_ERROR:
                raise BackendError(
                    payload.decode("utf-8", errors="replace"),
                    endpoint=self.endpoint,
                    kind="UPSCALE",
                )
            if kind != KIND_UPSCALE_RESP:
                raise ProtocolError(f"expected UPSCALE_RESP, got kind {kind}")
            index, img = parse_upscale_resp(payload)
            if not 0 <= index < n_samples:
                raise ProtocolError(f"sample index {index} out of range 0..{n_samples - 1}")
            if out[index] is not None:
                raise ProtocolError(f"duplicate sample index {index}")
            if img.shape != (lr.height * factor, lr.width * factor, lr.channels):
                raise ProtocolError(
                    f"sample {index} has dims {img.shape}, expected "
                    f"{(lr.height * factor, lr.width * factor, lr.channels)}"
                )
            out[index] = img
        return [img for img in out if img is not None]

    def metric(self, kind: str, a: Raster, b: Raster) -> float:
        self.check_metric(kind)
        self._send(pack_metric_req(kind, a, b))
        frame_kind, payload = self._recv()
        if frame_kind == KIND_ERROR:
            raise BackendError(
                payload.decode("utf-8", errors="replace"),
                endpoint=self.endpoint,
                kind="METRIC",
            )
        if frame_kind != KIND_METRIC_RESP:
            raise ProtocolError(f"expected METRIC_RESP, got kind {frame_kind}")
        return parse_metric_resp(payload)

    def _send(self, frame: bytes) -> None:
        try:
            self._transport.writer.write(frame)
            self._transport.writer.flush()
        except OSError as exc:
            raise BackendError(f"send failed: {exc}", endpoint=self.endpoint) from exc

    def _recv(self) -> tuple[int, bytes]:
        try:
            return read_frame(self._transport.reader)
        except OSError as exc:
            raise BackendError(f"receive failed: {exc}", endpoint=self.endpoint) from exc

    def close(self) -> None:
        self._transport.close()

    def __enter__(self) -> "Client":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def connect(spec: dict) -> Client:
    """Open a transport per ``spec`` and complete the handshake."""
    return Client(open_transport(spec))
