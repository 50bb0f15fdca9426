"""Compression-based classification of a reference database against a read pool.

One ensemble is trained on every read (context reset between reads) and
frozen; each reference ``x`` is then scored by the similarity

    S(x) = (1 - C(x || Y) / (2 |x|)) * 100

where C is the frozen ensemble's code length of ``x`` in bits. References
with S strictly above ``t1`` are selected, most similar first.
"""

from __future__ import annotations

import gzip
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .context_models import LOG2_ALPHABET, ModelEnsemble, default_models, pack_sequences, table_bits_for, to_symbols
from .errors import EmptyDb, EmptyReads, EmptyReference, IoFailure, MalformedFasta

log = logging.getLogger(__name__)

DEFAULT_T1 = 50.0
ANALYSIS_SEED = 0
CLASSIFY_HASH_CAP = 22


@dataclass
class ReferenceDb:
    entries: list[tuple[str, bytes]] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for rid, seq in self.entries:
            if rid in seen:
                raise MalformedFasta(f"duplicate reference id {rid!r}")
            if not seq:
                raise MalformedFasta(f"reference {rid!r} has an empty sequence")
            seen.add(rid)

    @property
    def total_bases(self) -> int:
        return sum(len(s) for _, s in self.entries)

    @property
    def ids(self) -> list[str]:
        return [rid for rid, _ in self.entries]

    def get(self, rid: str) -> bytes:
        for k, seq in self.entries:
            if k == rid:
                return seq
        raise KeyError(rid)

    def __len__(self):
        return len(self.entries)


def _read_bytes(path) -> bytes:
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


def parse_fasta(data: bytes) -> ReferenceDb:
    entries = []
    rid, chunks = None, []
    for lineno, line in enumerate(data.splitlines(), 1):
        line = line.strip()
        if line.startswith(b">"):
            if rid is not None:
                entries.append((rid, b"".join(chunks).upper()))
            name = line[1:].split()
            if not name:
                raise MalformedFasta(f"line {lineno}: record without an id")
            rid, chunks = name[0].decode(errors="replace"), []
        elif line:
            if rid is None:
                raise MalformedFasta(f"line {lineno}: sequence data before the first '>' header")
            chunks.append(line)
    if rid is not None:
        entries.append((rid, b"".join(chunks).upper()))
    if not entries:
        raise EmptyDb("the reference database has no records")
    return ReferenceDb(entries)


def load_db(path) -> ReferenceDb:
    """Read a (optionally gzip-compressed) multi-FASTA file."""
    return parse_fasta(_read_bytes(path))


# ---------------------------------------------------------------- scores


def similarity_from_bits(bits: float, length: int) -> float:
    if length <= 0:
        raise EmptyReference("similarity is undefined for an empty reference")
    return (1.0 - bits / (length * LOG2_ALPHABET)) * 100.0


def relative_compression(x, frozen: ModelEnsemble, rng: np.random.Generator | None = None) -> float:
    """Bits to describe ``x`` with models trained only on the read pool."""
    return frozen.code_length(x, rng if rng is not None else np.random.default_rng(ANALYSIS_SEED))


def similarity(x, frozen: ModelEnsemble, rng: np.random.Generator | None = None) -> float:
    if len(x) == 0:
        raise EmptyReference("similarity is undefined for an empty reference")
    return similarity_from_bits(relative_compression(x, frozen, rng), len(x))


@dataclass(frozen=True)
class RankedRef:
    ref_id: str
    similarity: float
    bits: float


@dataclass
class ClassificationResult:
    ranked: list[RankedRef]
    threshold_t1: float
    n_reads: int = 0

    @property
    def selected(self) -> list[RankedRef]:
        return [r for r in self.ranked if r.similarity > self.threshold_t1]

    @property
    def selected_ids(self) -> list[str]:
        return [r.ref_id for r in self.selected]

    def summary(self) -> dict:
        return {
            "t1": self.threshold_t1,
            "n_reads": self.n_reads,
            "n_references": len(self.ranked),
            "selected": self.selected_ids,
            "ranked": [
                {"ref_id": r.ref_id, "similarity": r.similarity, "bits": r.bits}
                for r in self.ranked
            ],
        }


def rank(scores: Iterable[RankedRef], t1: float = DEFAULT_T1, n_reads: int = 0) -> ClassificationResult:
    """Descending similarity, ties broken by ascending id."""
    ranked = sorted(scores, key=lambda r: (-r.similarity, r.ref_id))
    return ClassificationResult(ranked, t1, n_reads)


def read_pool_ensemble(reads: Sequence, models=None, seed: int = ANALYSIS_SEED) -> ModelEnsemble:
    """Train and freeze an ensemble on every read; ``reads`` are sequence byte strings."""
    rng = np.random.default_rng([seed, 0x636C])
    syms, offs = pack_sequences(reads, rng)
    ens = ModelEnsemble(
        models if models is not None else default_models(),
        hash_bits=table_bits_for(len(syms), cap=CLASSIFY_HASH_CAP),
    )
    ens.train_many_packed(syms, offs)
    return ens.freeze()


def classify(db: ReferenceDb, reads: Sequence, t1: float = DEFAULT_T1, models=None,
             seed: int = ANALYSIS_SEED, strict: bool = False) -> ClassificationResult:
    """Score every reference of ``db`` against the pool of read sequences.

    With no reads the ensemble is untrained, every reference scores S == 0
    and nothing is selected at the default threshold; ``strict`` turns that
    case into ``EmptyReads`` instead.
    """
    if not len(db):
        raise EmptyDb("the reference database has no records")
    if not math.isfinite(t1) and t1 != -math.inf:
        raise ValueError("t1 must be a number")
    if not 0 <= t1 <= 100:
        log.warning("t1=%s lies outside [0, 100]", t1)
    if not len(reads):
        if strict:
            raise EmptyReads("no reads to classify against")
        log.warning("no reads: classification runs against an untrained model")
    ens = read_pool_ensemble(reads, models, seed)
    rng = np.random.default_rng([seed, 0x7265])
    scores = []
    for rid, seq in db.entries:
        syms = to_symbols(seq, rng)
        bits = ens.code_length(syms)
        scores.append(RankedRef(rid, similarity_from_bits(bits, len(syms)), bits))
    return rank(scores, t1, len(reads))


# ---------------------------------------------------------------- TSV


def write_tsv(result: ClassificationResult, path) -> None:
    with open(path, "w") as fh:
        for r in result.ranked:
            fh.write(f"{r.ref_id}\t{r.similarity!r}\t{r.bits!r}\n")


def read_tsv(path, t1: float = DEFAULT_T1) -> ClassificationResult:
    scores = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                rid, s, b = line.rstrip("\n").split("\t")
                scores.append(RankedRef(rid, float(s), float(b)))
    return rank(scores, t1)
