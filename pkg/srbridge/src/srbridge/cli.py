"""Command-line entry point.

    srbridge --mode mock --transport stdio
    srbridge --mode mock --transport tcp:5555
    srbridge --mode adapter:mymodel --transport tcp:0   # ephemeral port

The TCP server prints "srbridge: listening on HOST:PORT" to stderr
once bound, which is how callers learn an ephemeral port.
"""

from __future__ import annotations

import argparse

from . import backends, server


def _parse_transport(text: str) -> tuple[str, int]:
    if text == "stdio":
        return "stdio", 0
    if text.startswith("tcp:"):
        try:
            return "tcp", int(text[len("tcp:") :])
        except ValueError:
            pass
    raise argparse.ArgumentTypeError(
        f"bad transport {text!r}; expected 'stdio' or 'tcp:<port>'"
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="srbridge",
        description="Super-resolution backend service speaking framed requests.",
    )
    parser.add_argument(
        "--mode", default="mock", help="'mock' or 'adapter:<registered tag>'"
    )
    parser.add_argument(
        "--transport",
        type=_parse_transport,
        default=("stdio", 0),
        help="'stdio' (default) or 'tcp:<port>' (0 for an ephemeral port)",
    )
    parser.add_argument(
        "--host", default="127.0.0.1", help="bind address for tcp (default 127.0.0.1)"
    )
    args = parser.parse_args(argv)

    try:
        backend = backends.create(args.mode)
    except KeyError as exc:
        parser.error(str(exc.args[0]))

    kind, port = args.transport
    try:
        if kind == "stdio":
            return server.serve_stdio(backend)
        return server.serve_tcp(backend, args.host, port)
    except KeyboardInterrupt:
        return 0


if __name__ == "__main__":
    raise SystemExit(main())
