"""Synthetic genomes and Illumina-like read simulation.

Reads carry substitution errors only, so every error-free read is an exact
substring (or reverse complement) of its reference. Headers look like::

    @sim.<k>/<mate> <ref_id>:<pos>

where ``k`` numbers read pairs in output order, ``pos`` is the 0-based
fragment start on the forward strand and ``mate`` is 1 or 2 (always 1 for
single-end runs). Pairs are shuffled as units, so mates stay adjacent as in
an interleaved FASTQ file.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .context_models import to_symbols
from .errors import DomainError, RefTooShort
from .fastq_io import FastqRecord

_ACGT = np.frombuffer(b"ACGT", np.uint8)
REPEAT_FRACTION = 0.10
REPEAT_BLOCK = 500
BASE_Q = 40


@dataclass(frozen=True)
class SimConfig:
    read_len: int = 150
    coverage: float = 50.0
    insert_mean: int = 200
    insert_sd: float = 10.0
    sub_error_rate: float = 0.005
    paired: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.read_len < 1:
            raise DomainError("read_len must be >= 1")
        if not self.coverage > 0:
            raise DomainError("coverage must be positive")
        if not 0 <= self.sub_error_rate < 1:
            raise DomainError("sub_error_rate must lie in [0, 1)")
        if self.paired and self.insert_mean < self.read_len:
            raise DomainError("insert_mean must be >= read_len for paired reads")
        if self.insert_sd < 0:
            raise DomainError("insert_sd must be >= 0")

    @property
    def min_ref_len(self) -> int:
        return self.insert_mean if self.paired else self.read_len


def gen_genome(length: int, seed: int = 0) -> bytes:
    """Uniform random genome with 10% of it copied from earlier positions.

    Copies are 500-base blocks, each taken from a random earlier offset, so
    the genome has some self-similarity without being periodic.
    """
    if length < 1:
        raise DomainError("genome length must be >= 1")
    rng = np.random.default_rng([seed, 0x67656E])
    g = rng.integers(0, 4, length, dtype=np.uint8)
    nblocks = int(REPEAT_FRACTION * length) // REPEAT_BLOCK
    if nblocks and length >= 2 * REPEAT_BLOCK:
        for dest in np.sort(rng.integers(REPEAT_BLOCK, length - REPEAT_BLOCK + 1, nblocks)):
            src = int(rng.integers(0, dest - REPEAT_BLOCK + 1))
            g[dest:dest + REPEAT_BLOCK] = g[src:src + REPEAT_BLOCK]
    return _ACGT[g].tobytes()


def _revcomp(block: np.ndarray) -> np.ndarray:
    # works on 2-bit codes; reverses the last axis
    return (3 - block)[..., ::-1]


def _substitute(reads: np.ndarray, rate: float, rng) -> np.ndarray:
    if rate <= 0 or reads.size == 0:
        return reads
    hit = rng.random(reads.shape) < rate
    shift = rng.integers(1, 4, reads.shape, dtype=np.uint8)
    return np.where(hit, (reads + shift) & 3, reads).astype(np.uint8)


def quality_profile(n: int, read_len: int, rng) -> np.ndarray:
    """Quality bytes: 'I' at the first base, about ten points lower at the last, +-2 noise."""
    slope = 10.0 / max(read_len - 1, 1)
    base = BASE_Q - np.round(np.arange(read_len) * slope)
    q = base[None, :] + rng.integers(-2, 3, (n, read_len))
    return (np.clip(q, 2, BASE_Q) + 33).astype(np.uint8)


def _fragments(ref: np.ndarray, cfg: SimConfig, rng):
    """Mate blocks (pairs, mates, read_len), fragment starts and strands for one reference."""
    L = len(ref)
    rl = cfg.read_len
    if cfg.paired:
        npairs = int(round(cfg.coverage * L / (2 * rl)))
        ins = np.rint(rng.normal(cfg.insert_mean, cfg.insert_sd, npairs)).astype(np.int64)
        ins = np.clip(ins, rl, L)
    else:
        npairs = int(round(cfg.coverage * L / rl))
        ins = np.full(npairs, rl, np.int64)
    starts = (rng.random(npairs) * (L - ins + 1)).astype(np.int64)
    reverse = rng.random(npairs) < 0.5
    cols = np.arange(rl)
    fwd = ref[starts[:, None] + cols[None, :]]
    tail = ref[(starts + ins - rl)[:, None] + cols[None, :]]
    if cfg.paired:
        m1 = np.where(reverse[:, None], _revcomp(tail), fwd)
        m2 = np.where(reverse[:, None], fwd, _revcomp(tail))
        mates = np.stack([m1, m2], axis=1)
    else:
        mates = np.where(reverse[:, None], _revcomp(fwd), fwd)[:, None, :]
    return mates, starts


def simulate_reads(refs: Sequence, cfg: SimConfig = SimConfig(), ids: Sequence[str] | None = None) -> list[FastqRecord]:
    """Simulate reads from ``refs`` (byte strings of A/C/G/T).

    Each reference uses its own generator derived from (seed, index); the
    global shuffle uses the master seed, so output depends only on inputs.
    """
    ids = [f"ref{i}" for i in range(len(refs))] if ids is None else list(ids)
    if len(ids) != len(refs):
        raise ValueError("one id per reference is required")
    blocks, origin = [], []
    for i, ref in enumerate(refs):
        syms = to_symbols(ref, np.random.default_rng([cfg.seed, i, 1]))
        if len(syms) < cfg.min_ref_len:
            raise RefTooShort(
                f"reference {ids[i]!r} has {len(syms)} bases, needs at least {cfg.min_ref_len}"
            )
        rng = np.random.default_rng([cfg.seed, i])
        mates, starts = _fragments(syms, cfg, rng)
        mates = _substitute(mates, cfg.sub_error_rate, rng)
        blocks.append(mates)
        origin.extend((i, int(p)) for p in starts)
    nm = 2 if cfg.paired else 1
    if not origin:
        return []
    mates = np.concatenate(blocks)
    order = np.random.default_rng([cfg.seed, 0x5348]).permutation(len(origin))
    qrng = np.random.default_rng([cfg.seed, 0x51])
    quals = quality_profile(len(origin) * nm, cfg.read_len, qrng)
    seqs = _ACGT[mates[order]].reshape(-1, cfg.read_len)
    out = []
    for k, pair in enumerate(order.tolist()):
        ref_i, pos = origin[pair]
        for mate in range(nm):
            row = k * nm + mate
            header = f"@sim.{k}/{mate + 1} {ids[ref_i]}:{pos}".encode()
            out.append(FastqRecord(header, seqs[row].tobytes(), b"+", quals[row].tobytes()))
    return out


def random_reads(n: int, read_len: int = 150, seed: int = 0) -> list[FastqRecord]:
    """Uniform i.i.d. reads with origin ``*`` (unrelated to any reference)."""
    rng = np.random.default_rng([seed, 0x726E64])
    seqs = _ACGT[rng.integers(0, 4, (n, read_len), dtype=np.uint8)]
    quals = quality_profile(n, read_len, rng)
    return [
        FastqRecord(f"@rand.{k} *:0".encode(), seqs[k].tobytes(), b"+", quals[k].tobytes())
        for k in range(n)
    ]


def read_id(header: bytes) -> str:
    return header[1:].split(b" ", 1)[0].decode()


def origin_of(header: bytes) -> str:
    """Reference id recorded in a simulated header (``*`` for random reads)."""
    parts = header.split(b" ", 1)
    if len(parts) != 2 or b":" not in parts[1]:
        raise ValueError(f"not a simulated header: {header[:60]!r}")
    return parts[1].rsplit(b":", 1)[0].decode()


def truth_table(records) -> list[tuple[str, str]]:
    return [(read_id(r.header), origin_of(r.header)) for r in records]


def write_truth(records, path) -> None:
    with open(path, "w") as fh:
        fh.write("read_id\tref_id\n")
        for rid, ref in truth_table(records):
            fh.write(f"{rid}\t{ref}\n")


def read_truth(path) -> dict[str, str]:
    out = {}
    with open(path) as fh:
        next(fh, None)
        for line in fh:
            rid, ref = line.rstrip("\n").split("\t")
            out[rid] = ref
    return out


def write_fasta(entries, path, width: int = 70) -> None:
    """``entries`` is an iterable of (id, sequence bytes)."""
    with open(path, "wb") as fh:
        for rid, seq in entries:
            fh.write(b">" + rid.encode() + b"\n")
            for i in range(0, len(seq), width):
                fh.write(seq[i:i + width] + b"\n")
