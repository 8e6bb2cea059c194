"""Benchmark image downscalers by how well a blind stochastic upscaler
can reconstruct their output.

The score of a downscaler is the expected distortion between an image
and reconstructions drawn from a super-resolution model that only sees
the downscaled result: the more faithfully detail-predictive the
downscale, the lower the score.  Validation runs the score over
synthetically degraded downscalers and checks that known quality
orderings come back with the right Spearman sign.
"""

from . import (
    datatools,
    degrade,
    imagecore,
    metrics,
    pipeline,
    plugin,
    probes,
    protocol,
    resample,
    rng,
    upscalers,
)
from ._kernels import BACKEND as KERNEL_BACKEND
from .errors import (
    BackendError,
    ConfigError,
    DecodeError,
    DimensionError,
    DownbenchError,
    InvalidArgumentError,
    InvalidScaleError,
    PluginError,
    ProtocolError,
    UndefinedCorrelationError,
    UnsupportedFormatError,
)
from .imagecore import Raster, read_image, write_image
from .pipeline import RunConfig, ScoreReport, SweepResult, idard_score, scale_sweep, sweep

__version__ = "0.1.0"

__all__ = [
    "BackendError",
    "ConfigError",
    "DecodeError",
    "DimensionError",
    "DownbenchError",
    "InvalidArgumentError",
    "InvalidScaleError",
    "KERNEL_BACKEND",
    "PluginError",
    "ProtocolError",
    "Raster",
    "RunConfig",
    "ScoreReport",
    "SweepResult",
    "UndefinedCorrelationError",
    "UnsupportedFormatError",
    "datatools",
    "degrade",
    "idard_score",
    "imagecore",
    "metrics",
    "pipeline",
    "plugin",
    "probes",
    "protocol",
    "read_image",
    "resample",
    "rng",
    "scale_sweep",
    "sweep",
    "upscalers",
    "write_image",
]
