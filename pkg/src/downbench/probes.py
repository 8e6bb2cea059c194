"""Deterministic synthetic probe images for self-contained runs.

Each probe mixes a random directional ramp, a few octaves of smooth
value noise and a light fine-detail field, then stretches the result
to nearly full range.  The ramp keeps long smooth gradients in every
image, so degradations that destroy gradient structure (banding,
clipping) register at every strength; the octaves carry the mid-scale
structure that blur and noise act on.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import datatools, resample, rng
from .errors import InvalidArgumentError
from .imagecore import Raster, clipped, write_image

DEFAULT_SEED = 77

_OCTAVES = ((2, 0.35), (8, 0.25), (32, 0.15), (64, 0.1))
_RAMP_WEIGHT = 0.55
_DETAIL_WEIGHT = 0.02


def probe_image(index: int, size: int = 256, seed: int = DEFAULT_SEED) -> Raster:
    """The index-th probe image, size x size x 3."""
    if size % 64 != 0 or size <= 0:
        raise InvalidArgumentError(f"size must be a positive multiple of 64, got {size}")
    gen = rng.stream(seed, "probe", index)

    theta = float(gen.uniform(0.0, 2.0 * np.pi))
    axis = np.linspace(0.0, 1.0, size)
    yy, xx = np.meshgrid(axis, axis, indexing="ij")
    ramp = np.cos(theta) * xx + np.sin(theta) * yy
    ramp = (ramp - ramp.min()) / (ramp.max() - ramp.min())
    channel_gain = 0.5 + 0.5 * gen.random(3)
    field = _RAMP_WEIGHT * ramp[:, :, None] * channel_gain[None, None, :]

    for octave, weight in _OCTAVES:
        grid = Raster(gen.random((octave, octave, 3)))
        field = field + weight * resample.upscale(grid, size // octave, "bicubic").data
    field = field + _DETAIL_WEIGHT * gen.standard_normal(field.shape)

    lo, hi = np.quantile(field, [0.005, 0.995])
    stretched = np.clip((field - lo) / (hi - lo), 0.0, 1.0)
    return clipped(0.02 + stretched * 0.95)


def probe_corpus(count: int = 30, size: int = 256, seed: int = DEFAULT_SEED):
    """(image id, image) pairs p000..."""
    return [(f"p{idx:03d}", probe_image(idx, size, seed)) for idx in range(count)]


def write_corpus(
    out_dir: str | Path, count: int = 30, size: int = 256, seed: int = DEFAULT_SEED
) -> Path:
    """Write PNG probes plus a labeled manifest; returns the manifest path.

    Labels cycle through all 24 demographic cells so the corpus has
    maximal joint label entropy when count is a multiple of 24.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = datatools.all_cells()
    rows = []
    for i, (image_id, img) in enumerate(probe_corpus(count, size, seed)):
        name = f"{image_id}.png"
        write_image(img, out / name)
        age, eth, gender = cells[i % len(cells)]
        rows.append(
            datatools.ManifestRow(
                id=image_id, path=name, age=age, ethnicity=eth, gender=gender
            )
        )
    manifest = datatools.Manifest(tuple(rows))
    manifest_path = out / "manifest.csv"
    datatools.write_manifest(manifest, manifest_path)
    return manifest_path
