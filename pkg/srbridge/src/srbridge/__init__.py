"""Backend service exposing super-resolution models over framed stdio/TCP."""

from .backends import AdapterBackend, BackendFault, MockBackend, create, register
from .server import serve, serve_stdio, serve_tcp

__version__ = "0.1.0"

__all__ = [
    "AdapterBackend",
    "BackendFault",
    "MockBackend",
    "create",
    "register",
    "serve",
    "serve_stdio",
    "serve_tcp",
    "__version__",
]
