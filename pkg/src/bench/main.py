# src/bench/main.py
"""
dcnv4-bench command line.

  python -m src.bench.main bench     --op dcn-ref,dcn-opt --grid standard
  python -m src.bench.main verify    --seed 7 --cases 1000
  python -m src.bench.main roofline  --shape 56x56x128 --groups 8
  python -m src.bench.main fixtures  --out data/fixtures [--force]
  python -m src.bench.main ablation  --shape 64x56x56x128 --groups 4

Exit codes: 0 success, 1 verification failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from ..config import load_config, section
from ..core.plan import Stage
from ..errors import DcnError
from ..roofline.model import intensity_table
from ..tensor.nhwc import ElementType
from .fixtures import generate
from .harness import GRIDS, OpCase, default_groups, grid_cells, parse_ops, parse_shape, run_cell, write_csv
from .stages import run_ablation
from .verify import run_verify

log = logging.getLogger(__name__)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _cells(args) -> List[Tuple[int, int, int, int]]:
    if args.shape:
        return [parse_shape(s) for s in args.shape.split(",")]
    return grid_cells(args.grid)


def cmd_bench(args, cfg) -> int:
    b = section(cfg, "bench")
    ops = parse_ops(args.op)
    dtype = ElementType.parse(args.dtype)
    stage = Stage.parse(args.stage) if args.stage else None
    reps = args.reps if args.reps is not None else int(b["reps"])
    warmup = args.warmup if args.warmup is not None else int(b["warmup"])
    seed = args.seed if args.seed is not None else int(b["seed"])
    d_prime = args.dprime if args.dprime is not None else int(b["d_prime"])
    kernel_k = args.kernel if args.kernel is not None else int(b["kernel"])
    ln_eps = float(section(cfg, "module")["ln_eps"])
    records = []
    for shape in _cells(args):
        groups = args.groups or default_groups(shape[3], int(b["group_dim"]))
        for op in ops:
            case = OpCase(shape, groups, dtype, kernel_k, seed, d_prime, stage if op == "dcn-opt" else None, ln_eps)
            records.append(run_cell(op, case, reps, warmup, float(b["anomaly_ratio"]),
                                    max_tokens=int(b["attention_max_tokens"])))
    text = write_csv(records, args.csv)
    if args.csv:
        print(f"Wrote {args.csv} with {len(records)} rows.")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_verify(args, cfg) -> int:
    v = section(cfg, "verify")
    seed = args.seed if args.seed is not None else int(v["seed"])
    report = run_verify(
        seed=seed,
        cases=args.cases if args.cases is not None else int(v["cases"]),
        grad_instances=args.grad_instances if args.grad_instances is not None else int(v["grad_instances"]),
        fd_step=float(v["fd_step"]),
        probes=int(v["probes"]),
        attention_instances=int(v["attention_instances"]),
        tol_fp32=float(v["tol_fp32"]),
        tol_fp16=float(v["tol_fp16"]),
        tol_grad=float(v["tol_grad"]),
        inject_fault=args.inject_fault,
        only=args.suite.split(",") if args.suite else None,
    )
    print(report.render())
    return EXIT_OK if report.passed else EXIT_FAIL


def _roofline_shapes(args) -> List[Tuple[int, int, int]]:
    if args.shape:
        out = []
        for s in args.shape.split(","):
            dims = [int(d) for d in s.lower().split("x")]
            if len(dims) == 4:
                dims = dims[1:]
            if len(dims) != 3:
                raise ValueError(f"bad shape {s!r}; expected HxWxC or NxHxWxC")
            out.append(tuple(dims))
        return out
    return list(GRIDS[args.grid].shapes)


def cmd_roofline(args, cfg) -> int:
    k = args.kernel if args.kernel is not None else int(section(cfg, "bench")["kernel"])
    bpe = ElementType.parse(args.dtype).bytes_per_element
    shapes = _roofline_shapes(args)
    text = intensity_table(shapes, groups=args.groups or 0, K=k * k, fmt=args.format, bytes_per_element=bpe)
    if args.csv:
        Path(args.csv).parent.mkdir(parents=True, exist_ok=True)
        Path(args.csv).write_text(intensity_table(shapes, args.groups or 0, k * k, "csv", bpe), encoding="utf-8")
        print(f"Wrote {args.csv}")
    print(text)
    return EXIT_OK


def cmd_fixtures(args, cfg) -> int:
    out = args.out or os.getenv("DCN_FIXTURES_DIR") or section(cfg, "paths")["fixtures"]
    written = generate(out, force=args.force)
    print(f"Wrote {len(written)} files to {out}")
    return EXIT_OK


def cmd_ablation(args, cfg) -> int:
    b = section(cfg, "bench")
    shape = parse_shape(args.shape) if args.shape else (64, 56, 56, 128)
    summary = run_ablation(
        shape=shape,
        groups=args.groups or 4,
        kernel_k=args.kernel if args.kernel is not None else int(b["kernel"]),
        d_prime=args.dprime if args.dprime is not None else int(b["d_prime"]),
        seed=args.seed if args.seed is not None else int(b["seed"]),
        reps=args.reps if args.reps is not None else int(b["reps"]),
        warmup=args.warmup if args.warmup is not None else int(b["warmup"]),
        with_modules=not args.kernel_only,
        ln_eps=float(section(cfg, "module")["ln_eps"]),
    )
    text = write_csv(summary.records, args.csv)
    if args.csv:
        print(f"Wrote {args.csv} with {len(summary.records)} rows.")
    else:
        sys.stdout.write(text)
    for line in summary.lines():
        print(line, file=sys.stderr)
    return EXIT_OK if summary.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dcnv4-bench")
    ap.add_argument("--config", default=None, help="YAML config (default $DCN_CONFIG or config/config.yaml)")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def timing(p):
        p.add_argument("--shape", default=None, help="NxHxWxC, comma separated for several")
        p.add_argument("--groups", type=int, default=None)
        p.add_argument("--kernel", type=int, default=None)
        p.add_argument("--reps", type=int, default=None)
        p.add_argument("--warmup", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--dprime", type=int, default=None)
        p.add_argument("--csv", default=None)

    p = sub.add_parser("bench", help="time operators over a shape grid")
    timing(p)
    p.add_argument("--op", default="dcn-ref,dcn-opt")
    p.add_argument("--grid", default="standard", choices=sorted(GRIDS))
    p.add_argument("--dtype", default="f32", choices=["f32", "f16"])
    p.add_argument("--stage", default=None, help="kernel plan stage for dcn-opt")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("verify", help="run the property suites")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--cases", type=int, default=None)
    p.add_argument("--grad-instances", dest="grad_instances", type=int, default=None)
    p.add_argument("--suite", default=None, help="comma separated subset of suites")
    p.add_argument("--inject-fault", dest="inject_fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("roofline", help="print FLOPs, MAC and arithmetic intensity")
    p.add_argument("--shape", default=None, help="HxWxC (or NxHxWxC), comma separated")
    p.add_argument("--grid", default="standard", choices=sorted(GRIDS))
    p.add_argument("--groups", type=int, default=None, help="default C/16")
    p.add_argument("--kernel", type=int, default=None)
    p.add_argument("--dtype", default="f32", choices=["f32", "f16"])
    p.add_argument("--format", default="text", choices=["text", "csv"])
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_roofline)

    p = sub.add_parser("fixtures", help="regenerate golden DCNT files")
    p.add_argument("--out", default=None)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_fixtures)

    p = sub.add_parser("ablation", help="time every kernel plan stage and the v3/v4 modules")
    timing(p)
    p.add_argument("--kernel-only", dest="kernel_only", action="store_true")
    p.set_defaults(func=cmd_ablation)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config)
    except DcnError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    lg = section(cfg, "logging")
    logging.basicConfig(level=str(lg.get("level") or "WARNING").upper(), format=lg.get("format"), stream=sys.stderr)
    try:
        return args.func(args, cfg)
    except (DcnError, ValueError, FileExistsError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
