"""End-to-end orchestration: classify, filter, sort, compress, and the inverse.

Unpacking needs only the archive (plus the sidecar to restore the original
order); it never touches the reference database or any model training.
"""

from __future__ import annotations

import contextlib
import csv
import gzip
import io
import json
import logging
import os
import shutil
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .backends import BackendSpec, compress_file, external_decompress, report_from_sizes
from .builtin_codec import MAGIC as CONTAINER_MAGIC
from .builtin_codec import compress_with_sections, decompress_channels, record_chunks
from .classification import DEFAULT_T1, ClassificationResult, classify, load_db, write_tsv
from .errors import CorruptContainer, IoFailure, ReadsortError, StageError
from .fastq_io import FastqRecord, fastq_bytes, parse_fastq_bytes
from .read_filter import DEFAULT_T2, FilterThresholds, PackedReads, SortPlan, apply_plan, recursive_filter
from .reorder_codec import encode_permutation, fnv1a64_bytes, restore_order
from .simulator import SimConfig, gen_genome, random_reads, simulate_reads, write_fasta, write_truth

log = logging.getLogger(__name__)

WORKDIR_ENV = "READSORT_WORKDIR"


@dataclass
class PipelineConfig:
    db_path: str | None = None
    input_fastq: str | None = None
    t1: float = DEFAULT_T1
    t2: float = DEFAULT_T2
    models: list | None = None
    backend: BackendSpec = field(default_factory=BackendSpec)
    lossless_order: bool = True
    threads: int = 1
    seed: int = 0
    work_dir: str | None = None

    def __post_init__(self):
        FilterThresholds(self.t1, self.t2)
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def summary(self) -> dict:
        return {
            "db_path": self.db_path,
            "input_fastq": self.input_fastq,
            "t1": self.t1,
            "t2": self.t2,
            "backend": self.backend.kind,
            "command": self.backend.command_template or None,
            "lossless_order": self.lossless_order,
            "threads": self.threads,
            "seed": self.seed,
        }


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except StageError:
        raise
    except ReadsortError as exc:
        raise StageError(name, exc) from exc
    except OSError as exc:
        raise StageError(name, IoFailure(str(exc))) from exc


@contextlib.contextmanager
def work_area(base: str | None):
    """Private scratch directory; removed on success, kept for inspection on failure."""
    base = base or os.environ.get(WORKDIR_ENV) or None
    if base:
        Path(base).mkdir(parents=True, exist_ok=True)
    path = Path(tempfile.mkdtemp(prefix="readsort-", dir=base))
    try:
        yield path
    except BaseException:
        log.error("keeping work directory %s", path)
        raise
    shutil.rmtree(path, ignore_errors=True)


def read_input(path) -> bytes:
    """FASTQ bytes from a plain or gzip-compressed file."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if data[:2] == b"\x1f\x8b":
        try:
            data = gzip.decompress(data)
        except (OSError, EOFError) as exc:
            raise IoFailure(f"cannot decompress {path}: {exc}") from exc
    return data


class Timer:
    def __init__(self):
        self.stages = {}
        self.t0 = time.perf_counter()

    @contextlib.contextmanager
    def __call__(self, name):
        t = time.perf_counter()
        with stage(name):
            yield
        self.stages[name] = self.stages.get(name, 0.0) + time.perf_counter() - t

    @property
    def total(self) -> float:
        return time.perf_counter() - self.t0


# ---------------------------------------------------------------- classify


def cmd_classify(config: PipelineConfig, tsv_path=None) -> ClassificationResult:
    with stage("read"):
        records = parse_fastq_bytes(read_input(config.input_fastq))
    with stage("classification"):
        db = load_db(config.db_path)
        result = classify(db, [r.sequence for r in records], config.t1, config.models, config.seed)
        if tsv_path:
            write_tsv(result, tsv_path)
    return result


# ---------------------------------------------------------------- pack


@dataclass
class PackResult:
    archive: bytes
    sidecar: bytes | None
    report: dict
    plan: SortPlan
    timings: dict


def sort_records(records: Sequence[FastqRecord], db, config: PipelineConfig, timer: Timer):
    with timer("classification"):
        result = classify(db, [r.sequence for r in records], config.t1, config.models, config.seed)
    selected = [(rid, db.get(rid)) for rid in result.selected_ids]
    with timer("filter"):
        if selected and records:
            reads = PackedReads([r.sequence for r in records], config.seed)
            plan = recursive_filter(reads, selected, config.t2, config.models, config.seed)
        else:
            plan = SortPlan.identity(len(records))
    with timer("sort"):
        ordered = apply_plan(records, plan)
    return result, plan, ordered


def _compress_pair(original, ordered, config: PipelineConfig, timer: Timer, work: Path):
    """Archive of the sorted records, plus the report sizes of both orders."""
    if config.backend.kind == "builtin":
        with timer("compression"):
            packed = compress_with_sections(ordered)
        with timer("baseline_compression"):
            base = compress_with_sections(original)
        return packed.blob, base.size, packed.sections, base.sections
    with timer("compression"):
        src = work / "sorted.fastq"
        src.write_bytes(fastq_bytes(ordered))
        compress_file(config.backend, src, work / "sorted.out")
        blob = (work / "sorted.out").read_bytes()
    with timer("baseline_compression"):
        src = work / "original.fastq"
        src.write_bytes(fastq_bytes(original))
        size, _ = compress_file(config.backend, src, work / "original.out")
    return blob, size, None, None


def pack_records(records: Sequence[FastqRecord], db, config: PipelineConfig, work: Path) -> PackResult:
    timer = Timer()
    records = list(records)
    result, plan, ordered = sort_records(records, db, config, timer)
    blob, base_size, sec_sorted, sec_base = _compress_pair(records, ordered, config, timer, work)
    sidecar = None
    if config.lossless_order:
        with timer("sidecar"):
            sidecar = encode_permutation(plan.permutation, (r.header for r in records)).to_bytes()
    gain = report_from_sizes(base_size, len(blob), len(records), len(sidecar or b""),
                             sec_base, sec_sorted)
    notes = []
    if not result.selected:
        notes.append(f"no references above T1={config.t1}; reads kept in original order")
    report = {
        "config": config.summary(),
        "n_reads": len(records),
        "classification": result.summary(),
        "plan": plan.summary(),
        "gain": gain.to_dict(),
        "archive_bytes": len(blob),
        "sidecar_bytes": len(sidecar) if sidecar else 0,
        "notes": notes,
    }
    timings = dict(timer.stages, total=timer.total)
    report["timings_s"] = timings
    return PackResult(blob, sidecar, report, plan, timings)


def cmd_pack(config: PipelineConfig, archive_path, sidecar_path=None, report_path=None) -> PackResult:
    """Write the archive, the order sidecar (when lossless) and a JSON report."""
    t0 = time.perf_counter()
    with work_area(config.work_dir) as work:
        with stage("read"):
            records = parse_fastq_bytes(read_input(config.input_fastq))
        with stage("classification"):
            db = load_db(config.db_path)
        res = pack_records(records, db, config, work)
        with stage("write"):
            Path(archive_path).write_bytes(res.archive)
            if res.sidecar is not None:
                sidecar_path = sidecar_path or str(archive_path) + ".order"
                Path(sidecar_path).write_bytes(res.sidecar)
            res.report["archive"] = str(archive_path)
            res.report["sidecar"] = str(sidecar_path) if res.sidecar is not None else None
            res.timings["wall"] = time.perf_counter() - t0
            res.report["timings_s"] = res.timings
            if report_path:
                Path(report_path).write_text(json.dumps(res.report, indent=2) + "\n")
    return res


# ---------------------------------------------------------------- unpack


def unpack_bytes(archive: bytes, sidecar: bytes | None = None,
                 backend: BackendSpec | None = None, work: Path | None = None) -> bytes:
    backend = backend or BackendSpec()
    if backend.kind == "builtin" or archive[:4] == CONTAINER_MAGIC:
        headers, seqs, seps, quals, digest = decompress_channels(archive)
        chunks = record_chunks(headers, seqs, seps, quals)
        plain = b"".join(chunks)
        if fnv1a64_bytes(plain) != digest:
            raise CorruptContainer("plaintext digest mismatch")
    else:
        src, dst = work / "archive.in", work / "archive.fastq"
        src.write_bytes(archive)
        external_decompress(backend, src, dst)
        plain = dst.read_bytes()
        records = parse_fastq_bytes(plain)
        headers = [r.header for r in records]
        chunks = [r.to_bytes() for r in records]
    if sidecar is None:
        return plain
    # reorder whole record texts; restore_order checks the header digest
    order = restore_order(range(len(chunks)), sidecar, headers_of=headers.__getitem__)
    return b"".join([chunks[k] for k in order])


def cmd_unpack(archive_path, output_path, sidecar_path=None, backend: BackendSpec | None = None,
               work_dir=None) -> int:
    """Restore FASTQ from an archive; byte-identical to the input when a sidecar is given."""
    with work_area(work_dir) as work:
        with stage("read"):
            archive = Path(archive_path).read_bytes()
            sidecar = Path(sidecar_path).read_bytes() if sidecar_path else None
        with stage("decompression"):
            out = unpack_bytes(archive, sidecar, backend, work)
        with stage("write"):
            Path(output_path).write_bytes(out)
    return len(out)


# ---------------------------------------------------------------- simulate


def simulate_dataset(n_refs: int, genome_len: int, cfg: SimConfig, n_random: int = 0,
                     n_decoys: int = 0):
    """(db entries, records). Decoys are database genomes with no reads."""
    entries = [(f"ref{i}", gen_genome(genome_len, cfg.seed * 100_003 + i))
               for i in range(n_refs + n_decoys)]
    records = simulate_reads([s for _, s in entries[:n_refs]], cfg, [r for r, _ in entries[:n_refs]])
    if n_random:
        records += random_reads(n_random, cfg.read_len, cfg.seed)
    return entries, records


def cmd_simulate(out_fastq, out_db, n_refs: int, genome_len: int, cfg: SimConfig,
                 truth_path=None, n_random: int = 0, n_decoys: int = 0) -> int:
    with stage("simulate"):
        entries, records = simulate_dataset(n_refs, genome_len, cfg, n_random, n_decoys)
        Path(out_fastq).write_bytes(fastq_bytes(records))
        write_fasta(entries, out_db)
        if truth_path:
            write_truth(records, truth_path)
    return len(records)


# ---------------------------------------------------------------- bench


BENCH_FIELDS = [
    "axis", "value", "seed", "n_refs", "coverage", "n_reads",
    "original_bytes", "sorted_bytes", "gain_bytes", "gain_percent",
    "sidecar_bytes", "stirling_bits",
    "headers_gain", "sequences_gain", "qualities_gain",
]


@dataclass
class BenchConfig:
    n_refs: int = 20
    coverage: float = 50.0
    genome_len: int = 20_000
    seeds: Sequence[int] = (0,)
    t1: float = DEFAULT_T1
    t2: float = DEFAULT_T2
    n_decoys: int = 0
    sim: SimConfig = field(default_factory=SimConfig)


@dataclass
class BenchRow:
    values: dict
    pack_seconds: float
    unpack_seconds: float
    roundtrip_ok: bool


def _bench_point(axis, value, seed, bc: BenchConfig, work: Path) -> BenchRow:
    n_refs = int(value) if axis == "references" else bc.n_refs
    coverage = float(value) if axis == "coverage" else bc.coverage
    sim = SimConfig(**{**bc.sim.__dict__, "coverage": coverage, "seed": seed})
    fq, db = work / f"{axis}_{value}_{seed}.fastq", work / f"{axis}_{value}_{seed}.fa"
    cmd_simulate(fq, db, n_refs, bc.genome_len, sim, n_decoys=bc.n_decoys)
    cfg = PipelineConfig(str(db), str(fq), bc.t1, bc.t2, seed=seed, work_dir=str(work))
    arc, side = work / "bench.rsqz", work / "bench.order"
    t = time.perf_counter()
    res = cmd_pack(cfg, arc, side)
    pack_s = time.perf_counter() - t
    db.unlink()  # unpacking must not need the database
    out = work / "bench.out.fastq"
    t = time.perf_counter()
    cmd_unpack(arc, out, side, work_dir=str(work))
    unpack_s = time.perf_counter() - t
    ok = out.read_bytes() == fq.read_bytes()
    g = res.report["gain"]
    per = g["per_channel"]
    row = {
        "axis": axis, "value": value, "seed": seed, "n_refs": n_refs, "coverage": coverage,
        "n_reads": res.report["n_reads"],
        "original_bytes": g["original_compressed_bytes"],
        "sorted_bytes": g["sorted_compressed_bytes"],
        "gain_bytes": g["gain_bytes"],
        "gain_percent": round(g["gain_percent"], 6),
        "sidecar_bytes": g["sidecar_bytes"],
        "stirling_bits": round(g["stirling_bits"], 3),
    }
    for ch in ("headers", "sequences", "qualities"):
        row[f"{ch}_gain"] = per[ch][0] - per[ch][1] if ch in per else ""
    for p in (fq, arc, side, out):
        p.unlink(missing_ok=True)
    return BenchRow(row, pack_s, unpack_s, ok)


def cmd_bench(axis: str, grid: Sequence, bc: BenchConfig | None = None, csv_path=None,
              work_dir=None) -> list[BenchRow]:
    """One CSV row per (grid value, seed). Timings stay out of the CSV so it is reproducible."""
    if axis not in ("coverage", "references"):
        raise ValueError("axis must be 'coverage' or 'references'")
    bc = bc or BenchConfig()
    rows = []
    with work_area(work_dir) as work:
        for value in grid:
            for seed in bc.seeds:
                row = _bench_point(axis, value, seed, bc, work)
                log.info("bench %s=%s seed=%s gain=%s pack=%.2fs unpack=%.2fs",
                         axis, value, seed, row.values["gain_bytes"], row.pack_seconds,
                         row.unpack_seconds)
                rows.append(row)
    text = bench_csv(rows)
    if csv_path:
        Path(csv_path).write_text(text)
    return rows


def bench_csv(rows: Sequence[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, BENCH_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r.values)
    return buf.getvalue()


def median_gain(rows: Sequence[BenchRow], value, key: str = "gain_bytes") -> float:
    return float(np.median([r.values[key] for r in rows if r.values["value"] == value]))
