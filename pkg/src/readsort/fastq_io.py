"""Streaming FASTQ parsing and writing, and the split into information channels.

Only the 4-line layout is accepted. Every record is validated while it is
read, so a parser never holds more than one record in memory.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator

from .errors import IoFailure, MalformedRecord

_UPPER = bytes(range(ord("A"), ord("Z") + 1))
_QUAL = bytes(range(33, 127))


@dataclass(frozen=True, slots=True)
class FastqRecord:
    header: bytes
    sequence: bytes
    separator: bytes
    quality: bytes

    def __post_init__(self):
        if not self.header.startswith(b"@"):
            raise ValueError("header must start with '@'")
        if not self.separator.startswith(b"+"):
            raise ValueError("separator must start with '+'")
        if len(self.sequence) != len(self.quality):
            raise ValueError("sequence and quality lengths differ")

    def to_bytes(self) -> bytes:
        return b"\n".join((self.header, self.sequence, self.separator, self.quality)) + b"\n"

    @property
    def nbytes(self) -> int:
        return len(self.header) + len(self.sequence) + len(self.separator) + len(self.quality) + 4


@dataclass
class ChannelTriple:
    """Column view of a record list; separators ride along for losslessness."""

    headers: list[bytes] = field(default_factory=list)
    sequences: list[bytes] = field(default_factory=list)
    qualities: list[bytes] = field(default_factory=list)
    separators: list[bytes] = field(default_factory=list)

    def __len__(self):
        return len(self.headers)

    def records(self) -> list[FastqRecord]:
        return [
            FastqRecord(h, s, p, q)
            for h, s, p, q in zip(self.headers, self.sequences, self.separators, self.qualities)
        ]


def _line(stream, index, what):
    line = stream.readline()
    if not line:
        return None
    if not line.endswith(b"\n"):
        raise MalformedRecord(index, f"truncated record: {what} line has no terminating newline")
    line = line[:-1]
    if line.endswith(b"\r"):
        raise MalformedRecord(index, "carriage-return line endings are not supported")
    return line


def _check(index, header, seq, sep, qual):
    if not header.startswith(b"@"):
        raise MalformedRecord(index, f"header does not start with '@': {header[:40]!r}")
    if not sep.startswith(b"+"):
        raise MalformedRecord(index, f"separator does not start with '+': {sep[:40]!r}")
    if len(seq) != len(qual):
        raise MalformedRecord(
            index, f"sequence length {len(seq)} != quality length {len(qual)}"
        )
    if seq.translate(None, _UPPER):
        raise MalformedRecord(index, "sequence contains bytes other than uppercase letters")
    if qual.translate(None, _QUAL):
        raise MalformedRecord(index, "quality contains bytes outside printable ASCII 33-126")


def parse_fastq(stream: BinaryIO) -> Iterator[FastqRecord]:
    """Yield records from a binary FASTQ stream in file order.

    Raises :class:`MalformedRecord` with the 1-based index of the first bad
    record. An empty stream yields nothing.
    """
    index = 0
    while True:
        index += 1
        header = _line(stream, index, "header")
        if header is None:
            return
        seq = _line(stream, index, "sequence")
        sep = _line(stream, index, "separator")
        qual = _line(stream, index, "quality")
        if seq is None or sep is None or qual is None:
            raise MalformedRecord(index, "truncated record: fewer than 4 lines")
        _check(index, header, seq, sep, qual)
        yield FastqRecord(header, seq, sep, qual)


def parse_fastq_bytes(data: bytes) -> list[FastqRecord]:
    return list(parse_fastq(io.BytesIO(data)))


def write_fastq(records: Iterable[FastqRecord], output: BinaryIO) -> int:
    """Write records as 4-line FASTQ; returns the number of bytes written."""
    total = 0
    try:
        for rec in records:
            total += output.write(rec.to_bytes())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return total


def fastq_bytes(records: Iterable[FastqRecord]) -> bytes:
    return b"".join(rec.to_bytes() for rec in records)


def split_channels(records: Iterable[FastqRecord]) -> ChannelTriple:
    out = ChannelTriple()
    for rec in records:
        out.headers.append(rec.header)
        out.sequences.append(rec.sequence)
        out.qualities.append(rec.quality)
        out.separators.append(rec.separator)
    return out
