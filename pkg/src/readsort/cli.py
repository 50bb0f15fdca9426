"""Command line front end.

Exit codes: 0 success, 2 usage error, 3 data error, 4 external tool error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .backends import PRESETS, BackendSpec
from .classification import DEFAULT_T1
from .errors import DomainError, ReadsortError
from .pipeline import (
    WORKDIR_ENV, BenchConfig, PipelineConfig, bench_csv, cmd_bench, cmd_classify, cmd_pack,
    cmd_simulate, cmd_unpack,
)
from .read_filter import DEFAULT_T2
from .simulator import SimConfig

log = logging.getLogger("readsort")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TOOL = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _common(p, seed=True):
    p.add_argument("--threads", type=int, default=1,
                   help="thread budget (accepted for compatibility; stages run single-threaded)")
    if seed:
        p.add_argument("--seed", type=int, default=0, help="seed for every random choice")
    p.add_argument("--work-dir", default=None,
                   help=f"scratch directory (default: ${WORKDIR_ENV} or the system temp dir)")


def _backend_args(p):
    p.add_argument("--backend", choices=("builtin", "external"), default="builtin")
    p.add_argument("--cmd", default=None,
                   help="external compressor: a preset (%s) or a template with {in} and {out}"
                        % ", ".join(sorted(PRESETS)))
    p.add_argument("--decompress-cmd", default=None,
                   help="decompression template for a custom --cmd")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="readsort",
        description="Similarity-sorted FASTQ compression guided by a reference database.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="rank database references against the reads")
    p.add_argument("fastq")
    p.add_argument("--db", required=True, help="multi-FASTA reference database (may be gzipped)")
    p.add_argument("--t1", type=float, default=DEFAULT_T1)
    p.add_argument("-o", "--output", default=None, help="TSV: ref_id, similarity, bits")
    p.add_argument("--report", default=None, help="JSON summary")
    _common(p)

    p = sub.add_parser("pack", help="sort reads by similarity and compress")
    p.add_argument("fastq")
    p.add_argument("--db", required=True)
    p.add_argument("-o", "--output", required=True, help="archive path")
    p.add_argument("--sidecar", default=None, help="order sidecar path (default: <archive>.order)")
    p.add_argument("--no-sidecar", action="store_true",
                   help="skip the sidecar; unpacking then yields the sorted order")
    p.add_argument("--t1", type=float, default=DEFAULT_T1)
    p.add_argument("--t2", type=float, default=DEFAULT_T2)
    p.add_argument("--report", default=None, help="JSON report path")
    _backend_args(p)
    _common(p)

    p = sub.add_parser("unpack", help="restore FASTQ from an archive")
    p.add_argument("archive")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--sidecar", default=None, help="order sidecar (default: <archive>.order if present)")
    p.add_argument("--no-sidecar", action="store_true", help="keep the sorted order")
    _backend_args(p)
    _common(p, seed=False)

    p = sub.add_parser("simulate", help="write a synthetic database and paired-end reads")
    p.add_argument("--out-fastq", required=True)
    p.add_argument("--db", required=True, help="database FASTA to write")
    p.add_argument("--refs", type=int, default=10)
    p.add_argument("--genome-len", type=int, default=20_000)
    p.add_argument("--coverage", type=float, default=50.0)
    p.add_argument("--read-len", type=int, default=150)
    p.add_argument("--error-rate", type=float, default=0.005)
    p.add_argument("--single-end", action="store_true")
    p.add_argument("--random-reads", type=int, default=0, help="extra reads from no reference")
    p.add_argument("--decoys", type=int, default=0, help="extra database genomes without reads")
    p.add_argument("--truth", default=None, help="TSV of read id -> source reference")
    _common(p)

    p = sub.add_parser("bench", help="gain versus reference count or coverage, as CSV")
    p.add_argument("--axis", choices=("references", "coverage"), required=True)
    p.add_argument("--grid", type=_float_list, required=True, help="comma-separated values")
    p.add_argument("--seeds", type=_int_list, default=[0])
    p.add_argument("--refs", type=int, default=20, help="references for the coverage axis")
    p.add_argument("--coverage", type=float, default=50.0, help="coverage for the references axis")
    p.add_argument("--genome-len", type=int, default=20_000)
    p.add_argument("--t1", type=float, default=DEFAULT_T1)
    p.add_argument("--t2", type=float, default=DEFAULT_T2)
    p.add_argument("--report", default=None, help="CSV path (default: stdout)")
    _common(p, seed=False)
    return parser


def _backend(args) -> BackendSpec:
    if args.backend == "builtin":
        if args.cmd:
            raise UsageError("--cmd needs --backend external")
        return BackendSpec()
    if not args.cmd:
        raise UsageError("--backend external needs --cmd")
    return BackendSpec.external(args.cmd, args.decompress_cmd)


def _threads(args):
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")


def _run_classify(args):
    _threads(args)
    cfg = PipelineConfig(args.db, args.fastq, t1=args.t1, seed=args.seed, work_dir=args.work_dir)
    result = cmd_classify(cfg, args.output)
    if args.report:
        Path(args.report).write_text(json.dumps(result.summary(), indent=2) + "\n")
    if not args.output:
        for r in result.ranked:
            print(f"{r.ref_id}\t{r.similarity:.6f}\t{r.bits:.3f}")
    log.info("%d of %d references above t1=%s", len(result.selected), len(result.ranked), args.t1)


def _run_pack(args):
    _threads(args)
    if args.no_sidecar and args.sidecar:
        raise UsageError("--sidecar and --no-sidecar exclude each other")
    cfg = PipelineConfig(args.db, args.fastq, t1=args.t1, t2=args.t2, backend=_backend(args),
                         lossless_order=not args.no_sidecar, threads=args.threads,
                         seed=args.seed, work_dir=args.work_dir)
    res = cmd_pack(cfg, args.output, args.sidecar, args.report)
    g = res.report["gain"]
    log.info("archive %d bytes, sidecar %d bytes, gain %d bytes (%.2f%%)",
             res.report["archive_bytes"], res.report["sidecar_bytes"], g["gain_bytes"],
             g["gain_percent"])


def _run_unpack(args):
    _threads(args)
    if args.no_sidecar and args.sidecar:
        raise UsageError("--sidecar and --no-sidecar exclude each other")
    sidecar = args.sidecar
    if sidecar is None and not args.no_sidecar:
        default = args.archive + ".order"
        sidecar = default if os.path.exists(default) else None
        if sidecar is None:
            log.warning("no sidecar found; writing reads in sorted order")
    n = cmd_unpack(args.archive, args.output, sidecar, _backend(args), args.work_dir)
    log.info("wrote %d bytes to %s", n, args.output)


def _run_simulate(args):
    _threads(args)
    sim = SimConfig(read_len=args.read_len, coverage=args.coverage,
                    sub_error_rate=args.error_rate, paired=not args.single_end, seed=args.seed)
    n = cmd_simulate(args.out_fastq, args.db, args.refs, args.genome_len, sim, args.truth,
                     args.random_reads, args.decoys)
    log.info("wrote %d reads from %d references", n, args.refs)


def _run_bench(args):
    _threads(args)
    grid = [int(v) if v == int(v) else v for v in args.grid]
    if args.axis == "references" and any(v != int(v) or v < 1 for v in grid):
        raise UsageError("the references grid needs positive integers")
    bc = BenchConfig(n_refs=args.refs, coverage=args.coverage, genome_len=args.genome_len,
                     seeds=tuple(args.seeds), t1=args.t1, t2=args.t2)
    rows = cmd_bench(args.axis, grid, bc, args.report, args.work_dir)
    if not args.report:
        sys.stdout.write(bench_csv(rows))


_COMMANDS = {
    "classify": _run_classify,
    "pack": _run_pack,
    "unpack": _run_unpack,
    "simulate": _run_simulate,
    "bench": _run_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on bad usage
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="readsort: %(levelname)s: %(message)s",
    )
    try:
        _COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"readsort: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        # bad parameter values are usage errors, wherever they are caught
        print(f"readsort: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ReadsortError as exc:
        print(f"readsort: error: {exc}", file=sys.stderr)
        return getattr(exc, "exit_code", EXIT_DATA)
    except KeyboardInterrupt:
        return 130
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
