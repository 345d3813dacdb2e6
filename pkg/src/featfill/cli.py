"""``featfill`` command line: corrupt, recover, sweep, flowcheck, bench.

Exit codes: 0 success, 1 usage error, 2 data error, 3 flowcheck failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import flowlab, pipeline, report
from .corpus import smooth_tensor
from .metrics import DEFAULT_LOSS_GRID
from .packets import PacketError
from .tensor_core import (FormatError, quantize, read_pgm, read_quant_params, read_tensor, tile,
                          write_pgm, write_quant_params, write_tensor)

log = logging.getLogger("featfill")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_FLOW = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def default_seed() -> int:
    raw = os.environ.get("LP_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"LP_SEED must be an integer, got {raw!r}") from None


# --- corrupt / recover -------------------------------------------------------------

def corrupt_paths(prefix: str) -> tuple[Path, Path, Path]:
    base = Path(prefix)
    return (base.with_name(base.name + ".pgm"), base.with_name(base.name + ".mask.pgm"),
            base.with_name(base.name + ".quant.txt"))


def cmd_corrupt(args) -> int:
    tensor = read_tensor(args.tensor)
    c = pipeline.corrupt(tensor, args.p, args.seed)
    mosaic_path, mask_path, quant_path = corrupt_paths(args.out)
    write_pgm(mosaic_path, c.data)
    write_pgm(mask_path, c.mask.astype("uint8") * 255)
    write_quant_params(quant_path, c.params)
    print(f"{mosaic_path}: {c.data.shape[0]}x{c.data.shape[1]} mosaic, "
          f"{c.lost_fraction:.1%} of rows lost (p={args.p}, seed={args.seed})")
    return EXIT_OK


def load_corrupted(mosaic_path, mask_path, quant_path, channels: int) -> pipeline.Corrupted:
    data = read_pgm(mosaic_path)
    mask_img = read_pgm(mask_path)
    if mask_img.shape != data.shape:
        raise FormatError(f"mask {mask_img.shape} and mosaic {data.shape} differ in shape")
    params = read_quant_params(quant_path)
    layout = pipeline.layout_from_mosaic(data, channels)
    return pipeline.Corrupted(data, mask_img > 127, params, layout)


def cmd_recover(args) -> int:
    c = load_corrupted(args.mosaic, args.mask, args.quant, args.channels)
    recovered, ms = pipeline.timed_recover(c, args.method)
    write_tensor(args.out, recovered)
    log.info("recovered %s with %s in %.1f ms", args.mosaic, args.method, ms)
    print(f"{args.out}: {args.method} recovery, {ms:.1f} ms")
    return EXIT_OK


# --- sweep ----------------------------------------------------------------------------

@dataclass
class SweepConfig:
    tensors: list[str] = field(default_factory=list)
    probabilities: list[float] = field(default_factory=lambda: list(DEFAULT_LOSS_GRID))
    methods: list[str] = field(default_factory=lambda: list(pipeline.METHODS))
    seeds: list[int] = field(default_factory=lambda: [0])
    out: str = "sweep_out"
    jobs: int = 1
    synthetic: int = 0
    channels: int = 16
    size: int = 32

    def validate(self):
        if not self.tensors and self.synthetic <= 0:
            raise UsageError("sweep needs tensor paths or a synthetic corpus size")
        if not self.probabilities or not self.methods or not self.seeds:
            raise UsageError("probabilities, methods and seeds must be nonempty")
        if any(not 0.0 <= p <= 1.0 for p in self.probabilities):
            raise UsageError("loss probabilities must lie in [0, 1]")
        unknown = set(self.methods) - set(pipeline.METHODS)
        if unknown:
            raise UsageError(f"unknown methods: {', '.join(sorted(unknown))}")
        if self.jobs < 1:
            raise UsageError("--jobs must be >= 1")


_LIST_KEYS = {"tensors": str, "probabilities": float, "methods": str, "seeds": int}
_SCALAR_KEYS = {"out": str, "jobs": int, "synthetic": int, "channels": int, "size": int}


def _convert(key, raw):
    try:
        if key in _LIST_KEYS:
            return [_LIST_KEYS[key](x.strip()) for x in raw.split(",") if x.strip()]
        return _SCALAR_KEYS[key](raw.strip())
    except ValueError:
        raise UsageError(f"bad value for {key}: {raw!r}") from None


def read_config(path) -> dict:
    """Flat ``key = value`` file; lists are comma separated, ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _LIST_KEYS and key not in _SCALAR_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _convert(key, raw)
    return values


def build_sweep_config(args) -> SweepConfig:
    values = read_config(args.config) if args.config else {}
    for key in list(_LIST_KEYS) + list(_SCALAR_KEYS):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = _convert(key, flag) if isinstance(flag, str) and key in _LIST_KEYS else flag
    if "seeds" not in values:
        values["seeds"] = [default_seed()]
    cfg = SweepConfig(**values)
    cfg.validate()
    return cfg


def _sweep_job(job):
    path, p, seed, methods = job
    name = Path(path).name
    rows = []
    try:
        tensor = read_tensor(path)
        c = pipeline.corrupt(tensor, p, seed)
        truth = pipeline.ground_truth(tensor)
    except (FormatError, PacketError, OSError, ValueError) as exc:
        log.error("%s p=%g seed=%d: %s", name, p, seed, exc)
        return [report.SweepRow(name, p, m, seed, float("nan"), float("nan"), 0.0, "error")
                for m in methods]
    lossy = bool(c.mask.any())
    for method in methods:
        try:
            recovered, ms = pipeline.timed_recover(c, method)
            masked, full = pipeline.score(recovered, truth, c)
            rows.append(report.SweepRow(name, p, method, seed, masked, full, ms,
                                        "ok" if lossy else "noloss"))
        except (ValueError, ArithmeticError, OSError) as exc:
            log.error("%s p=%g seed=%d %s: %s", name, p, seed, method, exc)
            rows.append(report.SweepRow(name, p, method, seed, float("nan"), float("nan"), 0.0, "error"))
    return rows


def run_sweep(cfg: SweepConfig) -> tuple[list[report.SweepRow], dict[str, float]]:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    tensors = list(cfg.tensors)
    if cfg.synthetic > 0:
        corpus_dir = out / "corpus"
        corpus_dir.mkdir(exist_ok=True)
        for i in range(cfg.synthetic):
            path = corpus_dir / f"synth_{i:03d}.ltns"
            write_tensor(path, smooth_tensor(i, channels=cfg.channels, size=cfg.size))
            tensors.append(str(path))
    jobs = [(t, p, s, tuple(cfg.methods)) for t in tensors for p in cfg.probabilities for s in cfg.seeds]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]
    rows = sorted((r for batch in results for r in batch), key=report.SweepRow.sort_key)
    report.write_sweep_csv(out / "sweep.csv", rows)
    table = report.mean_table(rows)
    gains = report.gain_table(table)
    report.write_gains_csv(out / "gains.csv", gains)
    report.write_svg_chart(out / "sweep.svg", table)
    return rows, gains


def cmd_sweep(args) -> int:
    cfg = build_sweep_config(args)
    rows, gains = run_sweep(cfg)
    failures = sum(r.status == "error" for r in rows)
    print(f"{len(rows)} runs written to {Path(cfg.out) / 'sweep.csv'} ({failures} failed)")
    for method in sorted(gains):
        print(f"  average masked-PSNR gain vs none  {method:14s} {gains[method]:+.3f} dB")
    return EXIT_DATA if failures and failures == len(rows) else EXIT_OK


# --- flowcheck ------------------------------------------------------------------------

def cmd_flowcheck(args) -> int:
    rows = flowlab.standard_suite(args.tolerance, args.scheme)
    if args.out:
        report.write_flow_csv(args.out, rows)
    failed = [r for r in rows if not r.passed]
    for r in failed:
        print(f"FAIL {r.transform} {r.signal} {r.flow}: max {r.max_residual:.3e}")
    print(f"{len(rows) - len(failed)}/{len(rows)} invariance checks passed "
          f"(tolerance {args.tolerance:g}, {args.scheme} residual)")
    return EXIT_FLOW if failed else EXIT_OK


# --- bench ----------------------------------------------------------------------------

BENCH_METHODS = ("telea", "navier_stokes", "silrtc_50", "silrtc_250")


def run_bench(tensor, p: float, seed: int, repeats: int, methods=BENCH_METHODS) -> dict[str, float]:
    """Median wall-clock seconds per method for one tensor."""
    if repeats < 1:
        raise UsageError("--repeats must be >= 1")
    c = pipeline.corrupt(tensor, p, seed)
    medians = {}
    for method in methods:
        samples = []
        for _ in range(repeats):
            start = time.perf_counter()
            pipeline.recover(c, method)
            samples.append(time.perf_counter() - start)
        medians[method] = statistics.median(samples)
    return medians


def warm_up():
    """Compile the numba kernels so the first timed call is not a JIT call."""
    tensor = smooth_tensor(0, channels=4, size=8)
    c = pipeline.corrupt(tensor, 0.5, 1)
    for method in ("telea", "navier_stokes"):
        if c.mask.any() and not c.mask.all():
            pipeline.recover(c, method)


def cmd_bench(args) -> int:
    tensor = read_tensor(args.tensor) if args.tensor else smooth_tensor(args.seed, channels=256, size=64)
    methods = args.methods.split(",") if args.methods else list(BENCH_METHODS)
    unknown = set(methods) - set(pipeline.METHODS)
    if unknown:
        raise UsageError(f"unknown methods: {', '.join(sorted(unknown))}")
    warm_up()
    medians = run_bench(tensor, args.p, args.seed, args.repeats, methods)
    print(f"{'method':16s} {'median s/tensor':>16s}")
    for method, secs in medians.items():
        print(f"{method:16s} {secs:16.4f}")
    if "telea" in medians and "silrtc_250" in medians:
        print(f"Telea:SiLRTC-250 speed ratio {medians['silrtc_250'] / medians['telea']:.1f}x")
    return EXIT_OK


# --- entry point ----------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="featfill", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("corrupt", help="tile, quantize, packetize and drop packets")
    p.add_argument("tensor")
    p.add_argument("--p", type=float, required=True, help="packet loss probability")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output prefix (.pgm, .mask.pgm, .quant.txt)")
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("recover", help="conceal lost rows and write an LTNS tensor")
    p.add_argument("--mosaic", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--quant", required=True)
    p.add_argument("--channels", type=int, default=256)
    p.add_argument("--method", required=True, choices=pipeline.METHODS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("sweep", help="corrupt/recover/score over a grid of runs")
    p.add_argument("--config")
    p.add_argument("--tensors")
    p.add_argument("--probabilities")
    p.add_argument("--methods")
    p.add_argument("--seeds")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int)
    p.add_argument("--synthetic", type=int, help="generate this many synthetic tensors")
    p.add_argument("--channels", type=int)
    p.add_argument("--size", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("flowcheck", help="surface-flow invariance suite")
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.add_argument("--scheme", choices=flowlab.SCHEMES, default="transport")
    p.add_argument("--out")
    p.set_defaults(func=cmd_flowcheck)

    p = sub.add_parser("bench", help="time recovery methods on one tensor")
    p.add_argument("--tensor", help="LTNS tensor (default: synthetic 256x64x64)")
    p.add_argument("--p", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--methods", help=f"comma-separated (default {','.join(BENCH_METHODS)})")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "seed", "absent") is None:
            args.seed = default_seed()
        return args.func(args)
    except UsageError as exc:
        print(f"featfill: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, PacketError, OSError, ValueError) as exc:
        print(f"featfill: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
