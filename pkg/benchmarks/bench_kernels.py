"""Timing comparison of the compiled and pure kernel backends.

Runs each hot kernel on shapes typical of scoring a 256px image at
factor 8 (plus one larger size so vectorization costs show), prints a
table of per-call times and the speedup of the compiled path, and
finishes with an end-to-end downscale timing per backend.  The
end-to-end rows run in subprocesses because the backend is frozen at
import time via DOWNBENCH_KERNELS.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time
from typing import Callable

import numpy as np

from downbench._kernels import pure

try:
    from downbench._kernels import _fast
except ImportError:
    _fast = None


def _time_call(fn: Callable[[], object], repeats: int) -> float:
    """Best-of-N wall time in seconds; one warmup call."""
    fn()
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _cases(g: np.random.Generator) -> list[tuple[str, str, tuple]]:
    """(label, kernel name, args) for every benchmarked call."""
    taps = np.ascontiguousarray(np.hanning(13) / np.hanning(13).sum())
    cases: list[tuple[str, str, tuple]] = []
    for side in (256, 1024):
        plane = np.ascontiguousarray(g.random((side, side)))
        k = 4 * 8  # bicubic support at factor 8
        idx = np.ascontiguousarray(
            np.clip(
                np.arange(side // 8)[:, None] * 8 + np.arange(k)[None, :] - k // 2,
                0,
                side - 1,
            ).astype(np.int32)
        )
        wts = np.ascontiguousarray(g.random((side // 8, k)))
        stack = np.ascontiguousarray(g.random((side, side, 3)))
        guide = np.ascontiguousarray(
            stack.reshape(side // 8, 8, side // 8, 8, 3).mean(axis=(1, 3))
        )
        cases += [
            (f"conv_valid_axis0 {side}x{side}, 13 taps", "conv_valid_axis0", (plane, taps)),
            (f"gather_axis0 {side}->{side // 8} rows, k={k}", "gather_axis0", (plane, idx, wts)),
            (f"block_mean2d {side}x{side}, s=8", "block_mean2d", (plane, 8)),
            (f"dpid_reduce {side}x{side}x3, s=8", "dpid_reduce", (stack, guide, 8, 1.0)),
        ]
    return cases


def _end_to_end(backend: str, repeats: int) -> float:
    """Time downscale(512px, factor 8, dpid) in a fresh process."""
    code = (
        "import time, numpy as np\n"
        "from downbench import resample\n"
        "from downbench.imagecore import Raster\n"
        "img = Raster(np.random.default_rng(0).random((512, 512, 3)))\n"
        "resample.downscale(img, 8, 'dpid')\n"
        "best = float('inf')\n"
        f"for _ in range({repeats}):\n"
        "    t0 = time.perf_counter()\n"
        "    resample.downscale(img, 8, 'dpid')\n"
        "    best = min(best, time.perf_counter() - t0)\n"
        "print(best)\n"
    )
    env = dict(os.environ, DOWNBENCH_KERNELS=backend)
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True
    )
    return float(out.stdout.strip())


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5, help="timing repeats per case")
    args = parser.parse_args()

    if _fast is None:
        print("compiled backend not built; showing pure timings only")
    g = np.random.default_rng(99)
    width = 44
    print(f"{'case':<{width}} {'pure':>10} {'fast':>10} {'speedup':>8}")
    for label, name, call_args in _cases(g):
        t_pure = _time_call(lambda: getattr(pure, name)(*call_args), args.repeats)
        if _fast is None:
            print(f"{label:<{width}} {t_pure * 1e3:>8.2f}ms {'-':>10} {'-':>8}")
            continue
        t_fast = _time_call(lambda: getattr(_fast, name)(*call_args), args.repeats)
        print(
            f"{label:<{width}} {t_pure * 1e3:>8.2f}ms {t_fast * 1e3:>8.2f}ms"
            f" {t_pure / t_fast:>7.1f}x"
        )

    label = "downscale 512px f=8 dpid (subprocess)"
    t_pure = _end_to_end("pure", args.repeats)
    if _fast is not None:
        t_fast = _end_to_end("fast", args.repeats)
        print(
            f"{label:<{width}} {t_pure * 1e3:>8.2f}ms {t_fast * 1e3:>8.2f}ms"
            f" {t_pure / t_fast:>7.1f}x"
        )
    else:
        print(f"{label:<{width}} {t_pure * 1e3:>8.2f}ms {'-':>10} {'-':>8}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
