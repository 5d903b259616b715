"""Batch command-line front end.

Decodes the content/style pair, builds or loads the patch indexes, runs the
synthesis loop, and writes the output image plus optional trace CSV,
snapshot images, and a JSON run manifest.

Exit codes: 0 ok, 2 usage, 3 I/O, 4 config, 5 internal.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, cache, io, segmentation
from .image_core import build_pyramid
from .synthesis import ConfigError, EnergyTrace, SynthesisConfig, build_indexes, run_style_transfer

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_CONFIG = 4
EXIT_INTERNAL = 5


class UsageError(ValueError):
    pass


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated ints, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="patchstyle",
        description="Patch-based style transfer: fuse a style image's texture "
                    "with a content image's structure.",
    )
    p.add_argument("--content", required=True, help="content image (PNG/JPEG)")
    p.add_argument("--style", required=True, help="style image (PNG/JPEG)")
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--mask-mode", default="edge",
                   help="edge | constant:<alpha> | file:<path> (default edge)")
    p.add_argument("--mask-max-weight", type=float, default=10.0,
                   help="weight of a full-white pixel in file masks (default 10)")
    p.add_argument("--fg-weight", type=float, default=10.0,
                   help="foreground weight for edge masks (default 10)")
    p.add_argument("--levels", type=int, default=3, help="pyramid levels (default 3)")
    p.add_argument("--patch-sizes", type=_int_list, default=(33, 21, 13, 9),
                   help="descending patch sizes, e.g. 33,21,13,9")
    p.add_argument("--gaps", type=_int_list, default=(28, 18, 8, 5),
                   help="grid gaps, one per patch size, e.g. 28,18,8,5")
    p.add_argument("--iters", type=int, default=3, help="update iterations per patch size")
    p.add_argument("--irls-iters", type=int, default=10, help="inner IRLS iterations")
    p.add_argument("--r", type=float, default=0.8, help="robust power (default 0.8)")
    p.add_argument("--noise-sigma", type=float, default=50.0,
                   help="initialization noise sigma (default 50)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    p.add_argument("--exact-nn", action="store_true",
                   help="disable the cluster tree; exact brute-force matching")
    p.add_argument("--trace", metavar="CSV", help="write the energy trace CSV here")
    p.add_argument("--snapshots", metavar="DIR", help="dump per-stage snapshots here")
    p.add_argument("--resize", type=int, default=400,
                   help="resize both images to N x N (default 400)")
    p.add_argument("--keep-aspect", action="store_true",
                   help="letter-box instead of distorting when resizing")
    p.add_argument("--cache-dir", help="directory for binary patch-index caches")
    p.add_argument("--threads", type=int, help="cap worker/BLAS thread count")
    p.add_argument("--db-stride", type=int, default=1,
                   help="style patch extraction stride (default 1)")
    p.add_argument("--version", action="version", version=f"patchstyle {__version__}")
    return p


def config_from_args(args: argparse.Namespace) -> SynthesisConfig:
    cfg = SynthesisConfig(
        l_max=args.levels,
        patch_sizes=tuple(args.patch_sizes),
        gaps=tuple(args.gaps),
        i_alg=args.iters,
        i_irls=args.irls_iters,
        r=args.r,
        init_noise_sigma=args.noise_sigma,
        seed=args.seed,
        exact_nn=args.exact_nn,
        db_stride=args.db_stride,
    )
    if len(cfg.patch_sizes) != len(cfg.gaps):
        raise UsageError("--patch-sizes and --gaps must have the same length")
    cfg.validate()
    return cfg


def _make_mask(mode: str, content: np.ndarray, args) -> np.ndarray:
    h, w = content.shape[:2]
    if mode == "edge":
        return segmentation.edge_mask(content, fg_weight=args.fg_weight)
    if mode.startswith("constant:"):
        try:
            alpha = float(mode.split(":", 1)[1])
        except ValueError as exc:
            raise UsageError(f"bad constant mask value in {mode!r}") from exc
        if alpha < 0:
            raise UsageError("constant mask alpha must be >= 0")
        return segmentation.constant_mask(w, h, alpha)
    if mode.startswith("file:"):
        return io.load_mask(mode.split(":", 1)[1], (h, w), args.mask_max_weight)
    raise UsageError(f"unknown mask mode {mode!r}")


def _get_indexes(style: np.ndarray, cfg: SynthesisConfig, cache_dir, style_hash: str):
    pyr_s = build_pyramid(style, cfg.l_max, min_size=max(cfg.patch_sizes))
    if cache_dir is None:
        return build_indexes(pyr_s, cfg)
    indexes = {}
    missing = []
    for level in range(1, cfg.l_max + 1):
        for n in cfg.patch_sizes:
            path = cache.cache_path(cache_dir, style_hash, level, n, cfg.db_stride)
            loaded = cache.load_index(path)
            if loaded is not None and (loaded[1] is None) == cfg.exact_nn:
                indexes[(level, n)] = loaded
            else:
                missing.append((level, n, path))
    if missing:
        built = build_indexes(pyr_s, cfg)
        for level, n, path in missing:
            indexes[(level, n)] = built[(level, n)]
            cache.save_index(path, *built[(level, n)])
    return indexes


def _write_manifest(args, cfg: SynthesisConfig, timings: dict, out_path: str) -> None:
    manifest = {
        "tool": "patchstyle",
        "version": __version__,
        "config": {
            "l_max": cfg.l_max,
            "patch_sizes": list(cfg.patch_sizes),
            "gaps": list(cfg.gaps),
            "i_alg": cfg.i_alg,
            "i_irls": cfg.i_irls,
            "r": cfg.r,
            "init_noise_sigma": cfg.init_noise_sigma,
            "renoise_sigma": cfg.effective_renoise_sigma,
            "seed": cfg.seed,
            "skip_final_fusion": cfg.skip_final_fusion,
            "irls_epsilon": cfg.irls_epsilon,
            "exact_nn": cfg.exact_nn,
            "db_stride": cfg.db_stride,
            "resize": args.resize,
            "keep_aspect": args.keep_aspect,
            "mask_mode": args.mask_mode,
            "mask_max_weight": args.mask_max_weight,
            "fg_weight": args.fg_weight,
        },
        "inputs": {
            "content": {"path": str(args.content), "sha256": io.file_sha256(args.content)},
            "style": {"path": str(args.style), "sha256": io.file_sha256(args.style)},
        },
        "timings_s": timings,
        "output": out_path,
    }
    with open(out_path + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)


def run(args: argparse.Namespace) -> int:
    cfg = config_from_args(args)

    if args.threads is not None:
        from threadpoolctl import threadpool_limits
        threadpool_limits(limits=max(1, args.threads))

    content = io.load_image(args.content, args.resize, args.keep_aspect)
    style = io.load_image(args.style, args.resize, args.keep_aspect)
    mask = _make_mask(args.mask_mode, content, args)

    import hashlib

    key = f"{io.file_sha256(args.style)}:{args.resize}:{args.keep_aspect}:{cfg.energy_fraction}"
    style_hash = hashlib.sha256(key.encode()).hexdigest()
    t0 = time.perf_counter()
    indexes = _get_indexes(style, cfg, args.cache_dir, style_hash)
    t_index = time.perf_counter() - t0

    trace = EnergyTrace() if args.trace else None
    snapshot_cb = None
    if args.snapshots:
        snap_dir = Path(args.snapshots)
        snap_dir.mkdir(parents=True, exist_ok=True)

        def snapshot_cb(level, n, stage, it, img):
            io.save_image(snap_dir / f"L{level}_n{n:02d}_it{it}_{stage}.png",
                          np.clip(img, 0, 255))

    t0 = time.perf_counter()
    result = run_style_transfer(content, style, mask, cfg, indexes=indexes,
                                trace=trace, snapshot_cb=snapshot_cb)
    t_synth = time.perf_counter() - t0

    io.save_image(args.out, result)
    if trace is not None:
        trace.to_csv(args.trace)
    timings = {"index_build": round(t_index, 3), "synthesis": round(t_synth, 3)}
    _write_manifest(args, cfg, timings, args.out)
    print(f"index build/load: {t_index:.1f}s  synthesis: {t_synth:.1f}s  -> {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0,) else 0
    try:
        return run(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except io.ImageIOError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # pragma: no cover
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
