"""``enl`` command line: oracle checks, benchmarks, filter dumps, pyramid demo."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, formats
from .checks import ALL_CHECKS, run_checks
from .dct_pos import FrequencyMask, build_basis, extract_filter
from .enl import EnlConfig
from .perf import DEFAULT_BUDGET_BYTES, VARIANTS, Shape, benchmark
from .pyramid import PyramidConfig, pyramid_forward, synth_laterals


def _pair(text: str, sep: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.lower().split(sep))
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse {text!r}") from None


def parse_shapes(text: str) -> list[tuple[int, int, int]]:
    shapes = []
    for item in text.split(","):
        dims = _pair(item.strip(), "x")
        if len(dims) != 3:
            raise argparse.ArgumentTypeError(f"shape {item!r} is not HxWxC")
        shapes.append(dims)
    return shapes


def parse_hw(text: str) -> tuple[int, int]:
    dims = _pair(text, "x")
    if len(dims) != 2:
        raise argparse.ArgumentTypeError(f"{text!r} is not HxW")
    return dims


def parse_center(text: str) -> tuple[int, int]:
    dims = _pair(text, ",")
    if len(dims) != 2:
        raise argparse.ArgumentTypeError(f"{text!r} is not h,w")
    return dims


def cmd_check(args) -> int:
    names = args.only or list(ALL_CHECKS)
    results = run_checks(names)
    ok = all(r.passed for r in results)
    if args.json:
        payload = {
            "meta": formats.metadata(),
            "passed": ok,
            "checks": [r.to_dict() for r in results],
        }
        print(json.dumps(payload, indent=2))
    else:
        for r in results:
            print(r.line())
        print("all checks passed" if ok else "CHECKS FAILED")
    return 0 if ok else 1


def cmd_bench(args) -> int:
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    for v in variants:
        if v not in VARIANTS:
            print(f"unknown variant {v!r}; choose from {', '.join(VARIANTS)}", file=sys.stderr)
            return 2
    mask = FrequencyMask(args.mask_h, args.mask_w)
    shapes = [
        Shape.make(h, w, c, args.c_theta, args.c_g, mask) for h, w, c in args.shapes
    ]
    dtype = np.float64 if args.fp64 else np.float32
    reports = benchmark(
        variants,
        shapes,
        repeats=args.repeats,
        budget_bytes=args.budget_bytes,
        dtype=dtype,
        seed=args.seed,
        masks={s: mask for s in shapes},
    )
    meta = formats.metadata(args.seed, dtype=np.dtype(dtype).name, repeats=args.repeats)
    for r in reports:
        if r.status == "refused":
            print(f"{r.variant:8s} {r.shape.as_tuple()} refused: {r.reason}")
        else:
            print(
                f"{r.variant:8s} {r.shape.as_tuple()} flops={r.flops:.4g} "
                f"peak={r.peak_intermediate_bytes}B time={r.wall_time:.3e}s"
            )
    if args.out:
        out = Path(args.out)
        if out.suffix == ".csv":
            formats.write_report_csv(out, [r.row() for r in reports], meta)
        else:
            formats.write_json(out, {"meta": meta, "reports": [r.to_dict() for r in reports]})
    return 0


def cmd_filter_dump(args) -> int:
    basis = build_basis(args.height, args.width, FrequencyMask(args.mask_h, args.mask_w))
    center = args.center if args.center is not None else (args.height // 2, args.width // 2)
    grid = extract_filter(basis, tuple(center)).data.reshape(args.height, args.width)
    meta = formats.metadata(
        None,
        height=args.height,
        width=args.width,
        mask=f"{basis.mask.h_freqs}x{basis.mask.w_freqs}",
        center=f"{center[0]},{center[1]}",
    )
    out = Path(args.out)
    if out.suffix == ".csv":
        formats.write_grid_csv(out, grid, meta)
    else:
        formats.write_pgm(out, grid, comment=" ".join(f"{k}={v}" for k, v in meta.items()))
    peak = np.unravel_index(np.argmax(grid), grid.shape)
    print(f"filter {args.height}x{args.width} center={tuple(center)} peak at {tuple(int(v) for v in peak)} -> {out}")
    return 0


def cmd_pyramid_demo(args) -> int:
    base_h, base_w = args.base
    cfg = PyramidConfig(
        base_h,
        base_w,
        args.levels,
        args.channels,
        args.seed,
        EnlConfig(),
        use_position=not args.no_position,
    )
    trace = pyramid_forward(synth_laterals(cfg), cfg, reference=args.reference)
    payload = {
        "meta": formats.metadata(cfg.seed),
        "config": {
            "base_height": cfg.base_height,
            "base_width": cfg.base_width,
            "levels": cfg.levels,
            "channels": cfg.channels,
            "use_position": cfg.use_position,
            "reference": args.reference,
        },
        "levels": [
            {
                "level": lv.level,
                "height": lv.output.height,
                "width": lv.output.width,
                "channels": lv.output.channels,
                "output_abs_mean": float(np.mean(np.abs(lv.output.data))),
                "perf": lv.perf.row(),
            }
            for lv in trace.levels
        ],
        "checksum": trace.checksum(),
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="enl", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="run the oracle suite")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("--only", nargs="+", choices=list(ALL_CHECKS), help="run a subset")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("bench", help="time NL vs ENL variants")
    p.add_argument("--shapes", type=parse_shapes, default=parse_shapes("32x32x64"))
    p.add_argument("--variants", default="nl,enl,enl-pos")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--budget-bytes", type=int, default=DEFAULT_BUDGET_BYTES)
    p.add_argument("--c-theta", type=int, default=None)
    p.add_argument("--c-g", type=int, default=None)
    p.add_argument("--mask-h", type=int, default=9)
    p.add_argument("--mask-w", type=int, default=9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fp64", action="store_true", help="time in 64-bit instead of 32-bit")
    p.add_argument("--out", help="report path (.json or .csv)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("filter-dump", help="write the spatial kernel of the position term")
    p.add_argument("--height", type=int, default=16)
    p.add_argument("--width", type=int, default=16)
    p.add_argument("--mask-h", type=int, default=9)
    p.add_argument("--mask-w", type=int, default=9)
    p.add_argument("--center", type=parse_center, default=None, help="h,w (default: map centre)")
    p.add_argument("--out", required=True, help="output path (.pgm or .csv)")
    p.set_defaults(func=cmd_filter_dump)

    p = sub.add_parser("pyramid-demo", help="run the coarse-to-fine top-down stream")
    p.add_argument("--base", type=parse_hw, default=(32, 32))
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--channels", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-position", action="store_true")
    p.add_argument("--reference", action="store_true", help="use the dense block at every level")
    p.add_argument("--out", help="trace JSON path")
    p.set_defaults(func=cmd_pyramid_demo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
