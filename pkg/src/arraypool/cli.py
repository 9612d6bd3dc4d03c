"""Command line entry point: ``arraypool bench <workload> [options]``."""

import argparse
import json
import sys

from .bench import WORKLOADS, BenchConfig, run
from .pool import TRANSLATIONS


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return value == "on"


def _store(value: str) -> str:
    if not (value.startswith("file:") or value.startswith("synthetic:")):
        raise argparse.ArgumentTypeError("expected file:PATH or synthetic:SEED")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arraypool")
    sub = parser.add_subparsers(dest="command", required=True)
    b = sub.add_parser("bench", help="run a workload and write a JSON report")
    b.add_argument("workload", choices=WORKLOADS)
    b.add_argument("--translation", choices=TRANSLATIONS, default="array")
    b.add_argument("--threads", type=int, default=1)
    b.add_argument("--frames", type=int, default=None, help="pool frames (default: whole dataset)")
    b.add_argument("--page-size", type=int, default=4096)
    b.add_argument("--scale", type=int, default=None, help="pages, records or nodes")
    b.add_argument("--prefetch", type=_on_off, default=True, metavar="{on,off}")
    b.add_argument("--optimistic", type=_on_off, default=True, metavar="{on,off}")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--store", type=_store, default="synthetic:0", metavar="{file:PATH|synthetic:SEED}")
    b.add_argument("--out", default=None, help="JSON report path (default: stdout)")
    b.add_argument("--iterations", type=int, default=None, help="operations per worker")
    b.add_argument("--duration", type=float, default=None, help="seconds per worker; overrides --iterations")
    b.add_argument("--residency-csv", default=None)
    b.add_argument("--provider", choices=("mmap", "instrumented"), default="mmap")
    b.add_argument("--direct", type=_on_off, default=False, metavar="{on,off}",
                   help="O_DIRECT for file stores")
    b.add_argument("--no-warm", dest="warm", action="store_false",
                   help="start the timed phase with a cold pool")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = BenchConfig(
            workload=args.workload,
            translation=args.translation,
            threads=args.threads,
            frames=args.frames,
            page_size=args.page_size,
            scale=args.scale,
            prefetch=args.prefetch,
            optimistic=args.optimistic,
            iterations=args.iterations,
            duration=args.duration,
            seed=args.seed,
            store=args.store,
            out=args.out,
            residency_csv=args.residency_csv,
            warm=args.warm,
            provider=args.provider,
            direct_io=args.direct,
        )
    except ValueError as e:
        print(f"arraypool: {e}", file=sys.stderr)
        return 2
    report = run(cfg)
    if args.out is None:
        print(report.to_json())
    else:
        summary = {"workload": report.workload, "throughput_ops_s": report.throughput_ops_s,
                   "wall_time_s": report.wall_time_s, "out": args.out}
        print(json.dumps(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
