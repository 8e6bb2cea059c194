"""Command-line front end.

Run configs are TOML with one table per stage::

    [dataset]
    manifest = "corpus/manifest.csv"
    cap = 30

    [downscale]
    method = "bicubic"      # or box/nearest/bilinear/lanczos3/dpid/plugin
    factor = 8
    order = "after_downscale"

    [[degrade]]             # optional, applied in order
    kind = "gauss_blur"
    sigma = 1.0

    [upscale]
    kind = "perturbed"      # or interp/remote
    tau = 0.02

    [score]
    distortion = "one_minus_msssim"
    n_q = 5
    seed = 7
    out = "runs/blur1"

    [sweep]                 # for the sweep subcommand
    family = "gauss_blur"
    levels = [1.0, 2.0, 4.0]

    [scale_sweep]           # for the scale-sweep subcommand
    factors = [4, 8, 32]
    [scale_sweep.chains]
    32 = [8, 4]

Remote backends add a ``[backend]`` table (``transport = "stdio"`` with
``command``, or ``transport = "tcp"`` with ``host``/``port``).

Usage errors exit 2; operation failures print a JSON error object to
stderr and exit 1.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - Python 3.10
    import tomli as tomllib

from . import datatools, degrade, pipeline, resample, upscalers
from .errors import BackendError, ConfigError, DownbenchError, PluginError
from .imagecore import read_image, write_image


def _load_toml(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None


def _error_payload(exc: BaseException) -> dict:
    payload = {"type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, BackendError):
        payload["endpoint"] = exc.endpoint
        payload["kind"] = exc.kind
    if isinstance(exc, PluginError):
        payload["returncode"] = exc.returncode
        payload["stderr"] = exc.stderr
    return {"error": payload}


def _emit(obj: dict, as_json: bool, lines) -> None:
    if as_json:
        print(json.dumps(obj, indent=2, sort_keys=True))
    else:
        for line in lines:
            print(line)


def _load_cfg(args) -> pipeline.RunConfig:
    if not args.config:
        raise ConfigError("this subcommand needs --config <run.toml>")
    raw = _load_toml(args.config)
    cfg = pipeline.RunConfig.from_dict(raw, base_dir=Path(args.config).parent)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.out is not None:
        changes["out_dir"] = Path(args.out)
    return cfg.replace(**changes) if changes else cfg


def _cmd_downscale(args) -> int:
    img = read_image(args.input)
    out = resample.downscale(
        img, args.factor, args.method, dpid_lambda=args.dpid_lambda
    )
    write_image(out, args.output)
    _emit(
        {"input": args.input, "output": args.output, "method": args.method,
         "factor": args.factor, "shape": list(out.shape)},
        args.json,
        [f"{args.output}: {out.height}x{out.width}x{out.channels}"],
    )
    return 0


def _cmd_degrade(args) -> int:
    params = {}
    for name in ("sigma", "gain", "levels", "ksize"):
        value = getattr(args, name)
        if value is not None:
            params[name] = value
    op = degrade.build({"kind": args.kind, **params})
    img = read_image(args.input)
    seed = 0 if args.seed is None else args.seed
    out = op.apply(img, rng_parts=(seed, Path(args.input).name, "degrade"))
    write_image(out, args.output)
    _emit(
        {"input": args.input, "output": args.output, "kind": args.kind,
         "params": params},
        args.json,
        [f"{args.output}: {args.kind} applied"],
    )
    return 0


def _cmd_upscale(args) -> int:
    img = read_image(args.input)
    if args.tau > 0:
        ups = upscalers.Perturbed(args.factor, kernel=args.kernel, tau=args.tau)
        seed = 0 if args.seed is None else args.seed
        out = ups.sample(img, args.sample, (seed, Path(args.input).name, "upscale"))
    else:
        out = upscalers.Interp(args.factor, kernel=args.kernel).sample(img, 1, ())
    write_image(out, args.output)
    _emit(
        {"input": args.input, "output": args.output, "kernel": args.kernel,
         "factor": args.factor, "tau": args.tau, "shape": list(out.shape)},
        args.json,
        [f"{args.output}: {out.height}x{out.width}x{out.channels}"],
    )
    return 0


def _cmd_score(args) -> int:
    cfg = _load_cfg(args)
    report = pipeline.idard_score(cfg)
    _emit(
        report.to_dict(),
        args.json,
        [
            f"score {report.score:.6f}  std {report.std:.6f}  "
            f"images {len(report.images)}  n_q {cfg.n_q}"
        ]
        if report.score is not None
        else ["no images scored"],
    )
    return 0


def _sweep_lines(result) -> list:
    lines = [f"{result.kind} sweep ({result.parameter}): rho {result.rho:+.3f}"]
    for level, rep in zip(result.levels, result.reports):
        lines.append(f"  {result.parameter}={level}: score {rep.score:.6f}")
    return lines


def _cmd_sweep(args) -> int:
    cfg = _load_cfg(args)
    raw = _load_toml(args.config)
    table = raw.get("sweep", {})
    family = args.family or table.get("family")
    levels = args.levels or table.get("levels")
    if not family or not levels:
        raise ConfigError("sweep needs a family and at least two levels "
                          "(flags or a [sweep] table)")
    if family == "quantize_otsu":
        levels = [int(v) for v in levels]
    else:
        levels = [float(v) for v in levels]
    result = pipeline.sweep(cfg, family, levels)
    _emit(result.to_dict(), args.json, _sweep_lines(result))
    return 0


def _cmd_scale_sweep(args) -> int:
    cfg = _load_cfg(args)
    raw = _load_toml(args.config)
    table = raw.get("scale_sweep", {})
    factors = args.factors or table.get("factors")
    if not factors:
        raise ConfigError("scale-sweep needs factors (flag or a "
                          "[scale_sweep] table)")
    chains = table.get("chains", {})
    result = pipeline.scale_sweep(cfg, [int(f) for f in factors], chains=chains)
    _emit(result.to_dict(), args.json, _sweep_lines(result))
    return 0


def _cmd_balance(args) -> int:
    manifest = datatools.read_manifest(args.manifest)
    seed = 0 if args.seed is None else args.seed
    subset, meta = datatools.balance_subset(manifest, args.n, seed)
    out = args.out or "subset.csv"
    datatools.write_manifest(subset, out, metadata=meta)
    _emit(
        {"out": str(out), **meta},
        args.json,
        [
            f"{out}: {meta['selected']} rows, joint entropy "
            f"{meta['joint_entropy']:.4f} bits"
        ],
    )
    return 0


def _cmd_entropy(args) -> int:
    manifest = datatools.read_manifest(args.manifest)
    counts = datatools.cell_counts(manifest)
    value = datatools.joint_entropy(counts)
    _emit(
        {"manifest": args.manifest, "rows": len(manifest),
         "joint_entropy": value},
        args.json,
        [f"{value:.4f} bits over {len(manifest)} rows"],
    )
    return 0


def _cmd_report(args) -> int:
    summary = pipeline.verify_report(args.dir)
    ok = "consistent" if summary["consistent"] else "INCONSISTENT"
    _emit(
        summary,
        args.json,
        [
            f"{args.dir}: score {summary['score']:.6f} std {summary['std']:.6f} "
            f"({summary['n_images']} images) - {ok}"
        ],
    )
    if not summary["consistent"]:
        raise ConfigError(f"report in {args.dir} does not match its samples.csv")
    return 0


def _add_common(sub) -> None:
    sub.add_argument("--json", action="store_true", help="machine-readable output")
    sub.add_argument("--seed", type=int, default=None)


def _add_run_common(sub) -> None:
    _add_common(sub)
    sub.add_argument("--config", required=False, help="run config TOML")
    sub.add_argument("--workers", type=int, default=None)
    sub.add_argument("--out", default=None, help="report directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="downbench",
        description="Benchmark image downscalers by the expected distortion "
        "of blind stochastic reconstructions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("downscale", help="downscale one image")
    _add_common(p)
    p.add_argument("--method", default="bicubic", choices=resample.DOWNSCALE_METHODS)
    p.add_argument("--factor", type=int, required=True)
    p.add_argument("--dpid-lambda", type=float, default=1.0)
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(fn=_cmd_downscale)

    p = sub.add_parser("degrade", help="apply one degradation to an image")
    _add_common(p)
    p.add_argument("--kind", required=True, choices=sorted(degrade.FAMILIES))
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--gain", type=float, default=None)
    p.add_argument("--levels", type=int, default=None)
    p.add_argument("--ksize", type=int, default=None)
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(fn=_cmd_degrade)

    p = sub.add_parser("upscale", help="upscale one image")
    _add_common(p)
    p.add_argument("--kernel", default="bicubic", choices=resample.UPSCALE_METHODS)
    p.add_argument("--factor", type=int, required=True)
    p.add_argument("--tau", type=float, default=0.0,
                   help="perturbation strength; 0 gives plain interpolation")
    p.add_argument("--sample", type=int, default=1, help="1-based sample index")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(fn=_cmd_upscale)

    p = sub.add_parser("score", help="score a downscaler config")
    _add_run_common(p)
    p.set_defaults(fn=_cmd_score)

    p = sub.add_parser("sweep", help="score across degradation levels")
    _add_run_common(p)
    p.add_argument("--family", default=None, choices=sorted(degrade.FAMILIES))
    p.add_argument("--levels", type=float, nargs="+", default=None)
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("scale-sweep", help="score across scale factors")
    _add_run_common(p)
    p.add_argument("--factors", type=int, nargs="+", default=None)
    p.set_defaults(fn=_cmd_scale_sweep)

    p = sub.add_parser("balance", help="draw a demographically balanced subset")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_balance)

    p = sub.add_parser("entropy", help="joint label entropy of a manifest")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.set_defaults(fn=_cmd_entropy)

    p = sub.add_parser("report", help="verify and summarize a report directory")
    _add_common(p)
    p.add_argument("dir")
    p.set_defaults(fn=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except DownbenchError as exc:
        print(json.dumps(_error_payload(exc)), file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps(_error_payload(exc)), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
