"""``drus`` command line: simulate, beamform, reconstruct, evaluate, render.

Exit codes: 0 success, 2 usage or configuration error, 3 I/O error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import container, pipeline
from .config import ConfigError, PRESETS, RunConfig
from .ddrm import DenoiserError
from .spectral import SVDConvergenceError
from .whitening import DegenerateBeamformerError

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("drus")


class UsageError(Exception):
    pass


def _load_config(args) -> RunConfig:
    text, source = "", "<config>"
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            text = path.read_text()
        except OSError as exc:
            raise container.ContainerError(f"cannot read config {path}: {exc}") from exc
        source = str(path)
    preset = getattr(args, "preset", None)
    if preset is None and not getattr(args, "config", None):
        preset = "paper-synthetic"
    return RunConfig.from_text(text, preset=preset, source=source,
                               require_content=bool(getattr(args, "config", None)))


def _sampler_overrides(cfg: RunConfig, args) -> RunConfig:
    return cfg.override(
        "sampler",
        it=args.it, eta=args.eta, eta_b=args.eta_b, sigma_d=args.sigma_d,
        seed=args.seed, chains=args.chains,
    )


def _write(path, data: bytes):
    Path(path).write_bytes(data)


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    if args.seed is not None:
        cfg = cfg.override("phantom", seed=args.seed).override("noise", seed=args.seed)
    ds = pipeline.simulate(cfg)
    pipeline.save_dataset(args.out, ds)
    print(f"wrote {args.out}: {ds.gammas.size} noise levels "
          f"({', '.join(f'{g:g}' for g in ds.gammas)}), H {ds.operator.shape}, "
          f"config {ds.hash[:12]}")
    return EXIT_OK


def _emit_image(args, ds, cfg, method, level, image):
    sec = pipeline.image_sections(image, ds, cfg, method, level)
    container.save(args.out, sec)
    preview = Path(args.out).with_suffix(".pgm")
    _write(preview, pipeline.preview_pgm(image))
    print(f"wrote {args.out} and {preview}: {method} at gamma={ds.gammas[level]:g}, "
          f"config {sec['config_hash'][:12]}")


def cmd_reconstruct(args) -> int:
    ds = pipeline.load_dataset(args.dataset)
    method = args.method or ds.config["sampler"]["method"]
    if method not in pipeline.METHODS:
        raise UsageError(f"unknown method {method!r} (choose from {', '.join(pipeline.METHODS)})")
    cfg = _sampler_overrides(ds.config, args).override("sampler", method=method)
    level = pipeline.select_level(ds, args.gamma)
    image = pipeline.reconstruct_level(ds, cfg, method, level)
    _emit_image(args, ds, cfg, method, level, image)
    return EXIT_OK


def cmd_beamform(args) -> int:
    ds = pipeline.load_dataset(args.dataset)
    level = pipeline.select_level(ds, args.gamma)
    image = pipeline.beamform_level(ds, ds.config, level)
    _emit_image(args, ds, ds.config, ds.config["setup"]["beamformer"], level, image)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    ds = pipeline.load_dataset(args.dataset)
    if args.image == "truth":
        image, tag, img_hash = ds.truth, "truth", ds.hash
    else:
        sec = pipeline.load_image(args.image)
        if sec["dataset_hash"] != ds.hash:
            raise pipeline.DatasetMismatchError(
                f"{args.image} was produced from dataset {sec['dataset_hash'][:12]}, "
                f"not {ds.hash[:12]}")
        image, tag, img_hash = sec["image"], sec.get("method", "image"), sec["config_hash"]
    regions = None
    if args.regions:
        try:
            text = Path(args.regions).read_text()
        except OSError as exc:
            raise container.ContainerError(f"cannot read regions {args.regions}: {exc}") from exc
        regions = pipeline.parse_regions(text, args.regions)
    rep = pipeline.evaluate(ds, image, regions)
    rep.extra.update({"image": tag, "config_hash": img_hash, "dataset_hash": ds.hash})
    text = rep.text()
    if args.out:
        _write(args.out, text.encode("utf-8"))
    sys.stdout.write(text)
    return EXIT_OK


def cmd_render(args) -> int:
    if args.image.endswith(".usdr"):
        sec = container.load(args.image)
        key = "image" if "image" in sec else "truth"
        if key not in sec:
            raise container.ContainerError(f"{args.image} holds no image")
        image = sec[key]
    else:
        raise UsageError("render expects a .usdr image or dataset file")
    _write(args.out, pipeline.preview_pgm(image, args.range))
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="drus", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a phantom and simulate channel data")
    p.add_argument("--config")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="reconstruct one noise level of a dataset")
    p.add_argument("dataset")
    p.add_argument("--method")
    p.add_argument("--gamma", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--it", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--eta-b", dest="eta_b", type=float)
    p.add_argument("--sigma-d", dest="sigma_d", type=float)
    p.add_argument("--chains", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("beamform", help="apply the configured beamformer B to one noise level")
    p.add_argument("dataset")
    p.add_argument("--gamma", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_beamform)

    p = sub.add_parser("evaluate", help="image-quality metrics of an image against its dataset")
    p.add_argument("dataset")
    p.add_argument("image", help="image file, or 'truth' for the ground truth")
    p.add_argument("--regions", help="region file (disk/scatterer lines, millimetres)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("render", help="write a log-compressed PGM preview")
    p.add_argument("image")
    p.add_argument("--range", type=float, default=60.0, help="dynamic range in dB")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError, pipeline.DatasetMismatchError) as exc:
        print(f"drus: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, container.ContainerError) as exc:
        print(f"drus: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SVDConvergenceError, DenoiserError, DegenerateBeamformerError,
            FloatingPointError, RuntimeError) as exc:
        print(f"drus: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
