"""Scoring engine: expected-distortion estimation, sweeps, reports.

A run downscales each image, draws N_Q blind stochastic reconstructions
of the result, and averages a distortion between the original and each
reconstruction.  The per-image mean is s_x; the reported score S is the
mean of s_x over images with a population std across images.  All
randomness is keyed by (global seed, image id, stage tag, sample
index), so results are bit-identical regardless of worker count or
scheduling.

A persisted report directory holds report.json (aggregates plus
metadata) and samples.csv (one row per reconstruction, byte-stable
across reruns), plus optional reconstruction PNGs.
"""

from __future__ import annotations

import concurrent.futures
import csv
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels, datatools, degrade, metrics, plugin, protocol, resample, upscalers
from .errors import (
    BackendError,
    ConfigError,
    DecodeError,
    DownbenchError,
    InvalidArgumentError,
)
from .imagecore import Raster, read_image, write_image

try:
    from importlib.metadata import version as _dist_version

    _VERSION = _dist_version("downbench")
except Exception:  # pragma: no cover - metadata missing in odd installs
    _VERSION = "unknown"

CONVENTIONS = {
    "intensity_domain": "[0,1] float64",
    "luma_weights": "Rec. 601 (0.299, 0.587, 0.114)",
    "sample_grid": "align-centers, pixel centers at (i + 0.5)/n",
    "antialias": "kernel support scaled by the factor when downscaling",
    "ssim": "11x11 Gaussian window sigma 1.5, K1 0.01, K2 0.03, L 1",
    "std": "population (divide by N)",
    "quantize_values": "bin midpoints",
    "contrast_pivot": "0.5",
    "noise": "clipped to [0,1] after addition",
}


@dataclass(frozen=True)
class RunConfig:
    """Everything one scoring run depends on."""

    images: tuple    # ((image id, resolved path), ...)
    factor: int
    downscale: dict = field(default_factory=lambda: {"method": "bicubic"})
    degrade_specs: tuple = ()
    order: str = "after_downscale"
    upscale: dict = field(default_factory=lambda: {"kind": "perturbed"})
    backend: Optional[dict] = None
    distortion: str = "one_minus_msssim"
    n_q: int = 5
    seed: int = 0
    workers: int = 1
    out_dir: Optional[Path] = None
    keep_samples: bool = False
    on_bad_image: str = "abort"

    def __post_init__(self) -> None:
        if self.n_q < 1:
            raise ConfigError(f"n_q must be >= 1, got {self.n_q}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.factor < 1:
            raise ConfigError(f"factor must be >= 1, got {self.factor}")
        if self.distortion not in metrics.DISTORTION_KINDS:
            raise ConfigError(
                f"distortion must be one of {metrics.DISTORTION_KINDS}, "
                f"got {self.distortion!r}"
            )
        if self.order not in degrade.ORDERS:
            raise ConfigError(f"order must be one of {degrade.ORDERS}, got {self.order!r}")
        if self.on_bad_image not in ("abort", "skip"):
            raise ConfigError(
                f"on_bad_image must be 'abort' or 'skip', got {self.on_bad_image!r}"
            )

    def replace(self, **changes) -> "RunConfig":
        import dataclasses

        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, raw: dict, base_dir: str | Path = ".") -> "RunConfig":
        base = Path(base_dir)
        try:
            dataset = raw.get("dataset", {})
            manifest_path = base / dataset["manifest"]
        except KeyError:
            raise ConfigError("config needs [dataset] manifest = <path>") from None
        manifest = datatools.read_manifest(manifest_path)
        images = [
            (row.id, manifest_path.parent / row.path) for row in manifest
        ]
        cap = dataset.get("cap")
        if cap is not None:
            if int(cap) < 1:
                raise ConfigError(f"dataset cap must be >= 1, got {cap}")
            images = images[: int(cap)]

        down = dict(raw.get("downscale", {}))
        if "factor" not in down:
            raise ConfigError("config needs [downscale] factor = <int>")
        factor = int(down.pop("factor"))
        order = down.pop("order", "after_downscale")

        score = dict(raw.get("score", {}))
        out = score.get("out")
        return cls(
            images=tuple(images),
            factor=factor,
            downscale=down,
            degrade_specs=tuple(raw.get("degrade", [])),
            order=order,
            upscale=dict(raw.get("upscale", {"kind": "perturbed"})),
            backend=raw.get("backend"),
            distortion=score.get("distortion", "one_minus_msssim"),
            n_q=int(score.get("n_q", 5)),
            seed=int(score.get("seed", 0)),
            workers=int(score.get("workers", 1)),
            out_dir=(base / out) if out else None,
            keep_samples=bool(score.get("keep_samples", False)),
            on_bad_image=score.get("on_bad_image", "abort"),
        )


@dataclass(frozen=True)
class ImageRecord:
    id: str
    samples: tuple
    mean: float


@dataclass
class ScoreReport:
    score: Optional[float]
    std: Optional[float]
    sample_spread: Optional[float]
    images: tuple
    skipped: tuple
    metadata: dict
    timings: dict

    def samples_csv(self) -> str:
        """Byte-stable CSV of every per-sample distortion."""
        lines = ["image_id,sample_index,distortion"]
        for rec in self.images:
            for i, d in enumerate(rec.samples, start=1):
                lines.append(f"{rec.id},{i},{d!r}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "score": self.score,
            "std": self.std,
            "sample_spread": self.sample_spread,
            "n_images": len(self.images),
            "images": [
                {"id": r.id, "mean": r.mean, "samples": list(r.samples)}
                for r in self.images
            ],
            "skipped": list(self.skipped),
            "metadata": self.metadata,
            "timings": self.timings,
        }

    def write(self, out_dir: str | Path, reconstructions=None) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        )
        with open(out / "samples.csv", "w", newline="") as fh:
            fh.write(self.samples_csv())
        if reconstructions:
            for image_id, samples in reconstructions:
                for i, img in enumerate(samples, start=1):
                    write_image(img, out / f"{image_id}_s{i:02d}.png")
        return out


@dataclass
class SweepResult:
    levels: tuple
    reports: tuple
    rho: float
    kind: str
    parameter: str

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "parameter": self.parameter,
            "rho": self.rho,
            "levels": list(self.levels),
            "scores": [r.score for r in self.reports],
            "stds": [r.std for r in self.reports],
            "reports": [r.to_dict() for r in self.reports],
        }


class _LockedClient:
    """Serializes concurrent use of one protocol client."""

    def __init__(self, client: protocol.Client):
        self._client = client
        self._lock = threading.Lock()
        self.endpoint = client.endpoint
        self.hello = client.hello

    def check_factor(self, factor: int) -> None:
        self._client.check_factor(factor)

    def upscale(self, lr, factor, n, seed, image_id):
        with self._lock:
            return self._client.upscale(lr, factor, n, seed, image_id)

    def metric(self, kind, a, b):
        with self._lock:
            return self._client.metric(kind, a, b)

    def close(self) -> None:
        self._client.close()


def _build_downscale_fn(cfg: RunConfig) -> tuple[Callable, dict]:
    """Returns (fn(img, rng_parts) -> lr, description dict)."""
    down = dict(cfg.downscale)
    method = down.pop("method", "bicubic")
    if method == "plugin":
        command = down.pop("command", None)
        if not command:
            raise ConfigError("plugin downscaler needs command = [...]")
        timeout = float(down.pop("timeout", plugin.DEFAULT_TIMEOUT))
        if down:
            raise ConfigError(f"unknown downscale options {sorted(down)}")
        p = plugin.PluginDownscaler(
            command=tuple(command) if isinstance(command, list) else command,
            timeout=timeout,
        )
        base = lambda img: plugin.run_plugin(p, img, cfg.factor)
        desc = {"method": "plugin", "command": command, "factor": cfg.factor}
    elif method in resample.DOWNSCALE_METHODS:
        lam = float(down.pop("dpid_lambda", 1.0))
        if down:
            raise ConfigError(f"unknown downscale options {sorted(down)}")
        if method == "dpid":
            base = lambda img: resample.downscale(img, cfg.factor, "dpid", dpid_lambda=lam)
            desc = {"method": "dpid", "dpid_lambda": lam, "factor": cfg.factor}
        else:
            base = lambda img: resample.downscale(img, cfg.factor, method)
            desc = {"method": method, "factor": cfg.factor}
    else:
        raise ConfigError(
            f"unknown downscale method {method!r}; expected plugin or one of "
            f"{resample.DOWNSCALE_METHODS}"
        )
    stack = degrade.build_stack(cfg.degrade_specs) if cfg.degrade_specs else None
    desc["degradations"] = list(cfg.degrade_specs)
    desc["order"] = cfg.order

    def fn(img: Raster, rng_parts: tuple) -> Raster:
        return degrade.apply_spec(stack, base, img, cfg.order, rng_parts)

    return fn, desc


def _build_upscaler(
    cfg: RunConfig, client, factor: Optional[int] = None, chains: Optional[dict] = None
) -> upscalers.Upscaler:
    factor = cfg.factor if factor is None else factor
    stages = (chains or {}).get(factor)
    if stages is None:
        return upscalers.build(cfg.upscale, factor, client)
    prod = 1
    for s in stages:
        prod *= int(s)
    if prod != factor:
        raise ConfigError(f"chain {stages} multiplies to {prod}, not {factor}")
    built = [upscalers.build(cfg.upscale, int(s), client) for s in stages]
    out = built[0]
    for u in built[1:]:
        out = upscalers.chain(out, u)
    return out


def _needs_backend(cfg: RunConfig) -> bool:
    return cfg.upscale.get("kind") == "remote" or cfg.distortion == "lpips_remote"


def _connect_backend(cfg: RunConfig) -> Optional[_LockedClient]:
    if not _needs_backend(cfg):
        return None
    if cfg.backend is None:
        raise ConfigError(
            "config needs a [backend] table for remote upscaling or lpips_remote"
        )
    return _LockedClient(protocol.connect(cfg.backend))


def _score_one(
    cfg: RunConfig,
    image_id: str,
    path,
    downscale_fn: Callable,
    upscaler: upscalers.Upscaler,
    client,
) -> tuple[ImageRecord, dict, list]:
    stage = {}
    t0 = time.perf_counter()
    img = read_image(path)
    stage["decode"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    lr = downscale_fn(img, (cfg.seed, image_id, "degrade"))
    stage["downscale"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    reconstructions = upscaler.samples(lr, cfg.n_q, (cfg.seed, image_id, "upscale"))
    stage["upscale"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    distortions = [
        metrics.distortion(cfg.distortion, img, recon, backend=client)
        for recon in reconstructions
    ]
    stage["metric"] = time.perf_counter() - t0

    mean, _ = metrics.mean_std(distortions)
    record = ImageRecord(image_id, tuple(distortions), mean)
    kept = reconstructions if cfg.keep_samples else []
    return record, stage, kept


def idard_score(cfg: RunConfig, client=None) -> ScoreReport:
    """Score one downscaler config; see the module docstring for the math."""
    own_client = client is None
    if client is None:
        client = _connect_backend(cfg)
    try:
        return _run_scoring(cfg, client)
    finally:
        if own_client and client is not None:
            client.close()


def _run_scoring(cfg: RunConfig, client, upscaler=None) -> ScoreReport:
    downscale_fn, down_desc = _build_downscale_fn(cfg)
    if upscaler is None:
        upscaler = _build_upscaler(cfg, client)

    records: dict[str, ImageRecord] = {}
    stage_times: dict[str, dict] = {}
    skipped: list[dict] = []
    kept: list[tuple[str, list]] = []
    start = time.perf_counter()

    def handle(image_id, result):
        record, stage, recon = result
        records[image_id] = record
        stage_times[image_id] = stage
        if recon:
            kept.append((image_id, recon))

    failure: Optional[BaseException] = None
    if cfg.workers == 1:
        for image_id, path in cfg.images:
            try:
                handle(
                    image_id,
                    _score_one(cfg, image_id, path, downscale_fn, upscaler, client),
                )
            except (DecodeError, OSError) as exc:
                if cfg.on_bad_image == "skip":
                    skipped.append({"id": image_id, "error": str(exc)})
                else:
                    failure = exc
                    break
            except DownbenchError as exc:
                failure = exc
                break
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            futures = {
                pool.submit(
                    _score_one, cfg, image_id, path, downscale_fn, upscaler, client
                ): image_id
                for image_id, path in cfg.images
            }
            for fut in concurrent.futures.as_completed(futures):
                image_id = futures[fut]
                try:
                    handle(image_id, fut.result())
                except (DecodeError, OSError) as exc:
                    if cfg.on_bad_image == "skip":
                        skipped.append({"id": image_id, "error": str(exc)})
                    else:
                        failure = exc
                except DownbenchError as exc:
                    if failure is None:
                        failure = exc

    end_to_end = time.perf_counter() - start
    ordered = tuple(records[i] for i in sorted(records))
    skipped_t = tuple(sorted(skipped, key=lambda s: s["id"]))

    if ordered:
        score, std = metrics.mean_std([r.mean for r in ordered])
        spread, _ = metrics.mean_std(
            [float(np.std(np.asarray(r.samples), ddof=0)) for r in ordered]
        )
    else:
        score = std = spread = None

    totals = {
        stage: sum(t[stage] for t in stage_times.values())
        for stage in ("decode", "downscale", "upscale", "metric")
    }
    timings = {
        "end_to_end": end_to_end,
        "stages": totals,
        "per_image": {i: stage_times[i] for i in sorted(stage_times)},
    }
    metadata = {
        "version": _VERSION,
        "numpy": np.__version__,
        "kernel_backend": _kernels.BACKEND,
        "conventions": CONVENTIONS,
        "downscaler": down_desc,
        "upscaler": upscaler.describe(),
        "distortion": cfg.distortion,
        "n_q": cfg.n_q,
        "n_images": len(cfg.images),
        "seed": cfg.seed,
        "workers": cfg.workers,
        "order": cfg.order,
        "backend_hello": getattr(client, "hello", None),
    }
    report = ScoreReport(
        score=score,
        std=std,
        sample_spread=spread,
        images=ordered,
        skipped=skipped_t,
        metadata=metadata,
        timings=timings,
    )

    if failure is not None:
        report.metadata["aborted"] = f"{type(failure).__name__}: {failure}"
        if cfg.out_dir is not None:
            report.write(cfg.out_dir, kept or None)
        raise failure
    if cfg.out_dir is not None:
        report.write(cfg.out_dir, kept or None)
    return report


def timing_report(cfg: RunConfig, client=None) -> dict:
    """Per-stage wall-clock table of a scoring run (empty runs give zeros)."""
    if not cfg.images:
        zero = {s: 0.0 for s in ("decode", "downscale", "upscale", "metric")}
        return {"end_to_end": 0.0, "stages": zero, "per_image": {}}
    return idard_score(cfg, client=client).timings


def _check_monotone(levels: Sequence[float]) -> None:
    if len(levels) < 2:
        raise InvalidArgumentError(f"need at least 2 levels, got {len(levels)}")
    diffs = [b - a for a, b in zip(levels, levels[1:])]
    if not (all(d > 0 for d in diffs) or all(d < 0 for d in diffs)):
        raise InvalidArgumentError(
            f"levels must be strictly monotone, got {list(levels)}"
        )


def sweep(
    cfg: RunConfig, family: str, levels: Sequence[float], client=None
) -> SweepResult:
    """Score the same config at each degradation level; rho is Spearman
    of (level, score)."""
    if family not in degrade.FAMILIES:
        raise InvalidArgumentError(
            f"unknown degradation family {family!r}; expected one of "
            f"{sorted(degrade.FAMILIES)}"
        )
    _check_monotone(levels)
    param = {"gauss_blur": "sigma", "gauss_noise": "sigma", "contrast": "gain",
             "quantize_otsu": "levels"}[family]
    own_client = client is None
    if client is None:
        client = _connect_backend(cfg)
    try:
        reports = []
        for idx, level in enumerate(levels):
            spec = {"kind": family, param: int(level) if family == "quantize_otsu" else float(level)}
            sub = cfg.replace(
                degrade_specs=(spec,),
                out_dir=(cfg.out_dir / f"level_{idx:02d}") if cfg.out_dir else None,
            )
            reports.append(idard_score(sub, client=client))
        rho = metrics.spearman(list(levels), [r.score for r in reports])
        result = SweepResult(
            levels=tuple(levels),
            reports=tuple(reports),
            rho=rho,
            kind=family,
            parameter=param,
        )
        if cfg.out_dir is not None:
            cfg.out_dir.mkdir(parents=True, exist_ok=True)
            summary = result.to_dict()
            summary.pop("reports")
            (cfg.out_dir / "sweep.json").write_text(
                json.dumps(summary, indent=2, sort_keys=True) + "\n"
            )
        return result
    finally:
        if own_client and client is not None:
            client.close()


def scale_sweep(
    cfg: RunConfig,
    factors: Sequence[int],
    chains: Optional[dict] = None,
    client=None,
) -> SweepResult:
    """Score the same config at each scale factor; chains maps a factor
    to the per-stage factors of a chained upscaler (e.g. 32 -> [8, 4])."""
    _check_monotone(factors)
    chains = {int(k): [int(s) for s in v] for k, v in (chains or {}).items()}
    own_client = client is None
    if client is None:
        client = _connect_backend(cfg)
    try:
        for f in factors:
            try:
                _build_upscaler(cfg, client, factor=int(f), chains=chains)
            except BackendError as exc:
                raise ConfigError(f"no upscaler for factor {f}: {exc}") from exc
        reports = []
        for idx, f in enumerate(factors):
            sub = cfg.replace(
                factor=int(f),
                out_dir=(cfg.out_dir / f"factor_{int(f):02d}") if cfg.out_dir else None,
            )
            ups = _build_upscaler(sub, client, chains=chains)
            reports.append(_run_scoring(sub, client, upscaler=ups))
        rho = metrics.spearman([float(f) for f in factors], [r.score for r in reports])
        result = SweepResult(
            levels=tuple(int(f) for f in factors),
            reports=tuple(reports),
            rho=rho,
            kind="scale",
            parameter="factor",
        )
        if cfg.out_dir is not None:
            cfg.out_dir.mkdir(parents=True, exist_ok=True)
            summary = result.to_dict()
            summary.pop("reports")
            (cfg.out_dir / "sweep.json").write_text(
                json.dumps(summary, indent=2, sort_keys=True) + "\n"
            )
        return result
    finally:
        if own_client and client is not None:
            client.close()


def load_report(report_dir: str | Path) -> tuple[dict, list]:
    """Read back report.json and the parsed samples.csv rows."""
    out = Path(report_dir)
    report = json.loads((out / "report.json").read_text())
    rows = []
    with open(out / "samples.csv", newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            rows.append(
                (rec["image_id"], int(rec["sample_index"]), float(rec["distortion"]))
            )
    return report, rows


def verify_report(report_dir: str | Path) -> dict:
    """Recompute aggregates from samples.csv and check them against
    report.json; returns a summary dict with a 'consistent' flag."""
    report, rows = load_report(report_dir)
    by_image: dict[str, list] = {}
    for image_id, _, d in rows:
        by_image.setdefault(image_id, []).append(d)
    means = {i: metrics.mean_std(v)[0] for i, v in sorted(by_image.items())}
    if means:
        score, std = metrics.mean_std(list(means.values()))
    else:
        score = std = None
    reported = {r["id"]: r["mean"] for r in report["images"]}
    consistent = (
        reported == means
        and report["score"] == score
        and report["std"] == std
    )
    return {
        "dir": str(report_dir),
        "score": report["score"],
        "std": report["std"],
        "n_images": report["n_images"],
        "recomputed_score": score,
        "recomputed_std": std,
        "consistent": consistent,
    }
