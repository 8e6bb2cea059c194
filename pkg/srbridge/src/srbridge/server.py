"""Serve loop and transports.

One connection is handled at a time per process; run several processes
for parallel backends.  A malformed frame gets one ERROR reply and the
connection closes, because a length-prefixed stream cannot be
resynchronized after a framing fault.  Well-framed but unservable
requests get an ERROR and the loop continues.
"""

from __future__ import annotations

import socket
import sys

from . import framing
from .backends import BackendFault


class _Prefixed:
    """Byte stream with a few already-read bytes pushed back on front."""

    def __init__(self, first: bytes, stream):
        self._first = first
        self._stream = stream

    def read(self, n: int) -> bytes:
        if self._first:
            out, self._first = self._first[:n], self._first[n:]
            return out
        return self._stream.read(n)


def _handle_upscale(backend, payload: bytes, writer) -> None:
    factor, n_samples, seed, image_id, lr = framing.parse_upscale_req(payload)
    samples = backend.upscale(lr, factor, n_samples, seed, image_id)
    for i, arr in enumerate(samples):
        writer.write(framing.pack_upscale_resp(i, arr))
    writer.flush()


def _handle_metric(backend, payload: bytes, writer) -> None:
    kind, a, b = framing.parse_metric_req(payload)
    writer.write(framing.pack_metric_resp(backend.metric(kind, a, b)))
    writer.flush()


def serve(backend, reader, writer) -> None:
    """Answer frames until EOF or an unrecoverable framing fault."""
    while True:
        first = reader.read(1)
        if not first:
            return
        try:
            kind, payload = framing.read_frame(_Prefixed(first, reader))
        except framing.FramingError as exc:
            writer.write(framing.pack_error(f"protocol: {exc}"))
            writer.flush()
            return
        try:
            if kind == framing.KIND_HELLO:
                framing.parse_hello(payload)
                writer.write(framing.pack_hello(backend.hello()))
                writer.flush()
            elif kind == framing.KIND_UPSCALE_REQ:
                _handle_upscale(backend, payload, writer)
            elif kind == framing.KIND_METRIC_REQ:
                _handle_metric(backend, payload, writer)
            else:
                writer.write(framing.pack_error(f"unexpected message kind {kind}"))
                writer.flush()
        except (framing.FramingError, BackendFault) as exc:
            writer.write(framing.pack_error(str(exc)))
            writer.flush()


def serve_stdio(backend) -> int:
    serve(backend, sys.stdin.buffer, sys.stdout.buffer)
    return 0


def serve_tcp(backend, host: str, port: int) -> int:
    """Accept and serve connections sequentially; port 0 picks a free one."""
    with socket.create_server((host, port)) as srv:
        bound = srv.getsockname()[1]
        print(f"srbridge: listening on {host}:{bound}", file=sys.stderr, flush=True)
        while True:
            conn, _ = srv.accept()
            with conn:
                reader = conn.makefile("rb")
                writer = conn.makefile("wb")
                try:
                    serve(backend, reader, writer)
                except OSError:
                    pass  # peer vanished mid-reply; next accept
                finally:
                    for stream in (reader, writer):
                        try:
                            stream.close()
                        except OSError:
                            pass
