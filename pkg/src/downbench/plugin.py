"""External downscalers run as child processes via a command template.

The template names placeholders {in}, {out} and {factor}; the harness
writes the HR image to a temp PNG, substitutes the placeholders, runs
the command, and decodes {out}.  The plugin sees nothing but files, so
the scoring path cannot depend on what produced the LR image.
"""

from __future__ import annotations

import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

from . import imagecore
from .errors import DecodeError, DimensionError, InvalidArgumentError, PluginError
from .imagecore import Raster

DEFAULT_TIMEOUT = 120.0


@dataclass(frozen=True)
class PluginDownscaler:
    """Command template with {in}, {out}, {factor} placeholders."""

    command: Union[str, tuple]
    timeout: float = DEFAULT_TIMEOUT

    def argv(self, in_path: str, out_path: str, factor: int) -> list[str]:
        tokens = (
            shlex.split(self.command)
            if isinstance(self.command, str)
            else [str(t) for t in self.command]
        )
        subst = {"in": in_path, "out": out_path, "factor": str(factor)}
        argv = [t.format(**subst) for t in tokens]
        joined = " ".join(tokens)
        if "{in}" not in joined or "{out}" not in joined:
            raise InvalidArgumentError(
                f"plugin command must use {{in}} and {{out}}: {self.command!r}"
            )
        return argv


def run_plugin(plugin: PluginDownscaler, img: Raster, factor: int) -> Raster:
    """Run the plugin once; returns its LR output, dimension-checked."""
    expect = (-(-img.height // factor), -(-img.width // factor), img.channels)
    with tempfile.TemporaryDirectory(prefix="downbench-plugin-") as tmp:
        in_path = str(Path(tmp) / "in.png")
        out_path = str(Path(tmp) / "out.png")
        imagecore.write_image(img, in_path)
        argv = plugin.argv(in_path, out_path, factor)
        try:
            proc = subprocess.run(
                argv, capture_output=True, timeout=plugin.timeout
            )
        except subprocess.TimeoutExpired as exc:
            stderr = (exc.stderr or b"").decode("utf-8", errors="replace")
            raise PluginError(
                f"plugin timed out after {plugin.timeout}s: {argv}", stderr=stderr
            ) from exc
        except OSError as exc:
            raise PluginError(f"cannot run plugin {argv}: {exc}") from exc
        stderr = proc.stderr.decode("utf-8", errors="replace")
        if proc.returncode != 0:
            raise PluginError(
                f"plugin exited {proc.returncode}: {argv}",
                returncode=proc.returncode,
                stderr=stderr,
            )
        try:
            out = imagecore.read_image(out_path)
        except FileNotFoundError:
            raise PluginError(
                f"plugin wrote no output file: {argv}", returncode=0, stderr=stderr
            ) from None
        except DecodeError as exc:
            raise PluginError(
                f"plugin output is not decodable: {exc}", returncode=0, stderr=stderr
            ) from exc
    if out.shape != expect:
        raise DimensionError(
            f"plugin output dims {out.shape} != expected {expect} "
            f"(factor {factor} on {img.height}x{img.width}x{img.channels})"
        )
    return out
