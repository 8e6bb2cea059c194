"""Kernel backend selection.

The compiled backend is preferred when its extension module built;
set DOWNBENCH_KERNELS=fast|pure|auto to force a choice.
"""

from __future__ import annotations

import os

_choice = os.environ.get("DOWNBENCH_KERNELS", "auto")
if _choice not in {"auto", "fast", "pure"}:
    raise ValueError(
        f"DOWNBENCH_KERNELS={_choice!r}; expected 'auto', 'fast' or 'pure'"
    )

if _choice == "pure":
    from . import pure as _impl
elif _choice == "fast":
    from . import _fast as _impl  # type: ignore[no-redef]
else:
    try:
        from . import _fast as _impl  # type: ignore[no-redef]
    except ImportError:
        from . import pure as _impl

BACKEND: str = _impl.BACKEND
conv_valid_axis0 = _impl.conv_valid_axis0
gather_axis0 = _impl.gather_axis0
block_mean2d = _impl.block_mean2d
dpid_reduce = _impl.dpid_reduce

__all__ = [
    "BACKEND",
    "conv_valid_axis0",
    "gather_axis0",
    "block_mean2d",
    "dpid_reduce",
]
