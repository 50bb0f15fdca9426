"""Channel-separated FASTQ codec.

Container layout (little-endian)::

    magic b"RSQZ" | version u8 | 3 x (u64 length, section bytes) | u64 FNV-1a(plaintext)

The sections hold, in order, headers, sequences and qualities. An empty
FASTQ file gives three empty sections.

* headers   - each header is split into alphanumeric runs and single
              punctuation bytes and coded against the previous header's
              tokens (match / small numeric increment / literal). The
              separator line rides along. The op stream goes through an
              order-3 byte context model.
* sequences - read lengths and the positions of non-ACGT bytes go through
              the byte model; A/C/G/T go through one adaptive hashed
              finite-context model (order chosen by the encoder) driving
              the binary range coder. A model tag also allows a mixed
              ensemble.
* qualities - adaptive frequency model over quality symbols, one
              multi-symbol range coding step per symbol; the context is
              either the two previous symbols or the previous symbol and
              the position in the read, whichever codes smaller.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .context_models import PROB_FLOOR as FLOOR
from .context_models import FcmConfig, ModelEnsemble, StcmConfig, table_bits_for
from .errors import CorruptContainer
from .fastq_io import FastqRecord, fastq_bytes, parse_fastq_bytes
from .reorder_codec import fnv1a64_bytes

MAGIC = b"RSQZ"
VERSION = 1
CHANNELS = ("headers", "sequences", "qualities")
CONTAINER_OVERHEAD = 4 + 1 + 3 * 8 + 8
# Archive DNA model: one hashed FCM in a fixed 2 MiB table (2**18 slots).
# Compression happens once, so the encoder tries each order and keeps the
# smallest stream; the decoder runs only the chosen one. Memory stays
# bounded on purpose: small-memory compressors are the ones that profit
# from grouping similar reads.
ARCHIVE_BITS = 18
ARCHIVE_ORDERS = (10, 11, 12, 13, 14, 16, 18, 20, 24)
ARCHIVE_ALPHA = 1 / 16
MODEL_ARCHIVE, MODEL_ENSEMBLE = 0, 1
QUALITY_MODES = (K.QMODE_ORDER2, K.QMODE_POSITION)

_TOKEN = re.compile(rb"[0-9]+|[A-Za-z]+|[^0-9A-Za-z]")
OP_MATCH, OP_DELTA, OP_LITERAL, OP_END = 0, 1, 2, 3
SEP_BARE, SEP_REPEAT, SEP_LITERAL = 0, 1, 2
_LUT = np.full(256, 255, np.uint8)
for _i, _c in enumerate(b"ACGT"):
    _LUT[_c] = _i


# ---------------------------------------------------------------- varints


def put_varint(out: bytearray, value: int) -> None:
    while value >= 0x80:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    out.append(value)


class Reader:
    def __init__(self, data: bytes, what: str):
        self.data = data
        self.pos = 0
        self.what = what

    def varint(self) -> int:
        shift = result = 0
        while True:
            if self.pos >= len(self.data):
                raise CorruptContainer(f"{self.what}: truncated varint")
            b = self.data[self.pos]
            self.pos += 1
            result |= (b & 0x7F) << shift
            if b < 0x80:
                return result
            shift += 7
            if shift > 63:
                raise CorruptContainer(f"{self.what}: varint overflow")

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptContainer(f"{self.what}: truncated section")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def rest(self) -> bytes:
        chunk = self.data[self.pos:]
        self.pos = len(self.data)
        return chunk


def _pack_bytes(raw: bytes, out: bytearray) -> None:
    """Byte-model compressed blob: varint raw length, varint coded length, payload."""
    put_varint(out, len(raw))
    if not raw:
        put_varint(out, 0)
        return
    coded = K.bytes_encode_kernel(np.frombuffer(raw, np.uint8), K.byte_ctx_bits(len(raw))).tobytes()
    put_varint(out, len(coded))
    out += coded


def _unpack_bytes(rd: Reader) -> bytes:
    n = rd.varint()
    coded = rd.take(rd.varint())
    if n == 0:
        return b""
    data = np.frombuffer(coded, np.uint8)
    out, used = K.bytes_decode_kernel(data, n, K.byte_ctx_bits(n))
    if used != len(data):
        raise CorruptContainer(f"{rd.what}: byte model desynchronised")
    return out.tobytes()


# ---------------------------------------------------------------- headers


def _numeric_step(tok: bytes, prev: bytes) -> int:
    """Increment d in 1..255 with prev + d == tok (prev's zero padding kept), else 0."""
    if not (tok.isdigit() and prev.isdigit()) or len(tok) > 18 or len(prev) > 18:
        return 0
    d = int(tok) - int(prev)
    if 0 < d < 256 and str(int(prev) + d).zfill(len(prev)).encode() == tok:
        return d
    return 0


def encode_header_ops(headers, separators) -> bytes:
    ops = bytearray()
    prev: list[bytes] = []
    for header, sep in zip(headers, separators):
        toks = _TOKEN.findall(header)
        for i, tok in enumerate(toks):
            p = prev[i] if i < len(prev) else None
            if tok == p:
                ops.append(OP_MATCH)
                continue
            d = _numeric_step(tok, p) if p is not None else 0
            if d:
                ops.append(OP_DELTA)
                ops.append(d)
            else:
                ops.append(OP_LITERAL)
                put_varint(ops, len(tok))
                ops += tok
        ops.append(OP_END)
        if sep == b"+":
            ops.append(SEP_BARE)
        elif sep == b"+" + header[1:]:
            ops.append(SEP_REPEAT)
        else:
            ops.append(SEP_LITERAL)
            put_varint(ops, len(sep))
            ops += sep
        prev = toks
    return bytes(ops)


_HDR_ERRORS = {
    K.HDR_TRUNCATED: "truncated op stream",
    K.HDR_PAST_PREV: "match past previous header",
    K.HDR_BAD_OP: "unknown op",
    K.HDR_BAD_SEP: "unknown separator kind",
    K.HDR_TRAILING: "trailing op bytes",
    K.HDR_BAD_DELTA: "delta on a non-numeric token",
}


def decode_header_ops(ops: bytes, n: int):
    status, text, offs, kinds, sep_text, sep_offs = K.header_decode_kernel(
        np.frombuffer(ops, np.uint8), n)
    if status != K.HDR_OK:
        raise CorruptContainer(f"headers: {_HDR_ERRORS[status]}")
    text = text.tobytes()
    sep_text = sep_text.tobytes()
    offs = offs.tolist()
    sep_offs = sep_offs.tolist()
    headers = [text[offs[i]:offs[i + 1]] for i in range(n)]
    seps = []
    for i, kind in enumerate(kinds.tolist()):
        if kind == SEP_BARE:
            seps.append(b"+")
        elif kind == SEP_REPEAT:
            seps.append(b"+" + headers[i][1:])
        else:
            seps.append(sep_text[sep_offs[i]:sep_offs[i + 1]])
    return headers, seps


def _encode_headers(headers, separators) -> bytes:
    if not headers:
        return b""
    out = bytearray()
    put_varint(out, len(headers))
    _pack_bytes(encode_header_ops(headers, separators), out)
    return bytes(out)


def _decode_headers(section: bytes):
    if not section:
        return [], []
    rd = Reader(section, "headers")
    n = rd.varint()
    ops = _unpack_bytes(rd)
    if rd.pos != len(section):
        raise CorruptContainer("headers: trailing bytes")
    return decode_header_ops(ops, n)


# ---------------------------------------------------------------- sequences

_MODEL = struct.Struct("<BBdBd")


def _ensemble_bytes(ens: ModelEnsemble) -> bytes:
    out = bytearray([len(ens.models)])
    for cfg in ens.models:
        if isinstance(cfg, StcmConfig):
            out += _MODEL.pack(1, cfg.order, cfg.base.alpha, cfg.max_substitutions, cfg.fallback_alpha)
        else:
            out += _MODEL.pack(0, cfg.order, cfg.alpha, 0, cfg.alpha)
    out += struct.pack("<dB", ens.gamma, ens.hash_bits)
    return bytes(out)


def _ensemble_from(rd: Reader) -> ModelEnsemble:
    models = []
    for _ in range(rd.take(1)[0]):
        kind, order, alpha, maxsub, falpha = _MODEL.unpack(rd.take(_MODEL.size))
        base = FcmConfig(order, alpha)
        models.append(StcmConfig(base, maxsub, falpha) if kind == 1 else base)
    gamma, bits = struct.unpack("<dB", rd.take(9))
    try:
        return ModelEnsemble(models, gamma=gamma, hash_bits=bits)
    except ValueError as exc:
        raise CorruptContainer(f"sequences: bad model description ({exc})") from exc


def archive_bits(n_symbols: int) -> int:
    return min(ARCHIVE_BITS, table_bits_for(n_symbols))


def _archive_search(syms, orders=ARCHIVE_ORDERS) -> tuple[bytes, bytes]:
    """(model description, payload) of the order giving the smallest stream."""
    bits = archive_bits(len(syms))
    best = None
    for order in orders:
        payload, _ = K.arc_encode_kernel(syms, order, bits, ARCHIVE_ALPHA, FLOOR)
        if best is None or len(payload) < len(best[1]):
            best = (order, payload)
    desc = bytes([MODEL_ARCHIVE, best[0], bits]) + struct.pack("<d", ARCHIVE_ALPHA)
    return desc, best[1].tobytes()


def _ensemble_encode(syms, models, hash_bits) -> tuple[bytes, bytes]:
    ens = ModelEnsemble(models, hash_bits=min(hash_bits, table_bits_for(len(syms))))
    payload, _ = K.dna_encode_kernel(
        syms, ens._mi, ens._masks, ens._alphas, ens._falphas, ens._counts,
        ens.weights, ens.gamma, FLOOR,
    )
    return bytes([MODEL_ENSEMBLE]) + _ensemble_bytes(ens), payload.tobytes()


def _encode_sequences(sequences, models=None, hash_bits=ARCHIVE_BITS) -> bytes:
    """``models`` swaps the archive model for a mixed ensemble (slower to decode)."""
    if not sequences:
        return b""
    out = bytearray()
    put_varint(out, len(sequences))
    lens = bytearray()
    for s in sequences:
        put_varint(lens, len(s))
    _pack_bytes(bytes(lens), out)

    raw = np.frombuffer(b"".join(sequences), np.uint8)
    codes = _LUT[raw]
    bad = np.flatnonzero(codes == 255)
    exc = bytearray()
    last = 0
    for pos in bad.tolist():
        put_varint(exc, pos - last)
        exc.append(raw[pos])
        last = pos
    _pack_bytes(bytes(exc), out)

    syms = codes[codes != 255]
    if models is None:
        desc, payload = _archive_search(syms)
    else:
        desc, payload = _ensemble_encode(syms, models, hash_bits)
    out += desc
    put_varint(out, len(syms))
    if len(syms):
        out += payload
    return bytes(out)


def _dna_decoder(rd: Reader):
    """Read a model description; returns ``decode(payload, n) -> (symbols, bytes used)``."""
    tag = rd.take(1)[0]
    if tag == MODEL_ARCHIVE:
        order, bits = rd.take(2)
        (alpha,) = struct.unpack("<d", rd.take(8))
        if not (1 <= order <= 31 and 1 <= bits <= 30 and alpha > 0):
            raise CorruptContainer("sequences: bad archive model description")
        return lambda data, n: K.arc_decode_kernel(data, n, order, bits, alpha, FLOOR)
    if tag == MODEL_ENSEMBLE:
        ens = _ensemble_from(rd)
        return lambda data, n: K.dna_decode_kernel(
            data, n, ens._mi, ens._masks, ens._alphas, ens._falphas,
            ens._counts, ens.weights, ens.gamma, FLOOR,
        )
    raise CorruptContainer(f"sequences: unknown model tag {tag}")


def _decode_sequences(section: bytes):
    if not section:
        return []
    rd = Reader(section, "sequences")
    n = rd.varint()
    lens_raw = np.frombuffer(_unpack_bytes(rd), np.uint8)
    lengths, used = K.varint_decode_kernel(lens_raw, n)
    if used != len(lens_raw):
        raise CorruptContainer("sequences: bad read length table")
    total = int(lengths.sum())
    erd = Reader(_unpack_bytes(rd), "sequences")
    exc_pos, exc_byte = [], []
    last = 0
    while erd.pos < len(erd.data):
        last += erd.varint()
        exc_pos.append(last)
        exc_byte.append(erd.take(1)[0])
    decode = _dna_decoder(rd)
    nsyms = rd.varint()
    if nsyms + len(exc_pos) != total:
        raise CorruptContainer("sequences: symbol count does not match read lengths")
    payload = np.frombuffer(rd.rest(), np.uint8)
    if nsyms:
        syms, used = decode(payload, nsyms)
        if used != len(payload):
            raise CorruptContainer("sequences: DNA stream desynchronised")
    else:
        syms = np.zeros(0, np.uint8)
    raw = np.empty(total, np.uint8)
    mask = np.ones(total, bool)
    if exc_pos:
        idx = np.asarray(exc_pos, np.int64)
        if idx.max() >= total:
            raise CorruptContainer("sequences: exception position out of range")
        mask[idx] = False
        raw[idx] = np.asarray(exc_byte, np.uint8)
    raw[mask] = np.frombuffer(b"ACGT", np.uint8)[syms]
    data = raw.tobytes()
    ends = np.cumsum(lengths).tolist()
    return [data[a:b] for a, b in zip([0] + ends[:-1], ends)]


# ---------------------------------------------------------------- qualities


def _encode_qualities(qualities) -> bytes:
    """Layout: varint total, alphabet size, context mode, payload (best mode kept)."""
    if not qualities:
        return b""
    out = bytearray()
    offs = np.zeros(len(qualities) + 1, np.int64)
    np.cumsum([len(q) for q in qualities], out=offs[1:])
    put_varint(out, int(offs[-1]))
    if offs[-1]:
        data = np.frombuffer(b"".join(qualities), np.uint8)
        alphabet = int(data.max()) - 33 + 1
        coded = min(
            ((K.qual_encode_kernel(data, offs, alphabet, mode), mode) for mode in QUALITY_MODES),
            key=lambda t: len(t[0]),
        )
        out += bytes([alphabet, coded[1]])
        out += coded[0].tobytes()
    return bytes(out)


def _decode_qualities(section: bytes, lengths):
    if not section:
        if lengths:
            raise CorruptContainer("qualities: section missing")
        return []
    rd = Reader(section, "qualities")
    total = rd.varint()
    if total != sum(lengths):
        raise CorruptContainer("qualities: length does not match sequences")
    offs = np.zeros(len(lengths) + 1, np.int64)
    np.cumsum(lengths, out=offs[1:])
    if total:
        alphabet, mode = rd.take(2)
        if not 1 <= alphabet <= 94 or mode not in QUALITY_MODES:
            raise CorruptContainer(f"qualities: bad model description ({alphabet}, {mode})")
        payload = np.frombuffer(rd.rest(), np.uint8)
        data, used = K.qual_decode_kernel(payload, offs, alphabet, mode)
        if used != len(payload):
            raise CorruptContainer("qualities: stream desynchronised")
        data = data.tobytes()
    else:
        data = b""
    ends = offs.tolist()
    return [data[a:b] for a, b in zip(ends[:-1], ends[1:])]


# ---------------------------------------------------------------- container


@dataclass
class CompressedFastq:
    blob: bytes
    sections: dict

    @property
    def size(self) -> int:
        return len(self.blob)


def builtin_compress(records, models=None, hash_bits: int = ARCHIVE_BITS) -> bytes:
    """Compress FASTQ records (or raw FASTQ bytes) into an RSQZ container."""
    return compress_with_sections(records, models, hash_bits).blob


def compress_with_sections(records, models=None, hash_bits=ARCHIVE_BITS) -> CompressedFastq:
    if isinstance(records, (bytes, bytearray, memoryview)):
        plain = bytes(records)
        records = parse_fastq_bytes(plain)
    else:
        records = list(records)
        plain = fastq_bytes(records)
    sections = {
        "headers": _encode_headers([r.header for r in records], [r.separator for r in records]),
        "sequences": _encode_sequences([r.sequence for r in records], models, hash_bits),
        "qualities": _encode_qualities([r.quality for r in records]),
    }
    out = bytearray(MAGIC)
    out.append(VERSION)
    for name in CHANNELS:
        out += struct.pack("<Q", len(sections[name]))
        out += sections[name]
    out += struct.pack("<Q", fnv1a64_bytes(plain))
    return CompressedFastq(bytes(out), {k: len(v) for k, v in sections.items()})


def read_sections(blob: bytes) -> dict:
    if len(blob) < CONTAINER_OVERHEAD:
        raise CorruptContainer("container is truncated")
    if blob[:4] != MAGIC:
        raise CorruptContainer(f"bad magic {blob[:4]!r}")
    if blob[4] != VERSION:
        raise CorruptContainer(f"unsupported container version {blob[4]}")
    pos = 5
    sections = {}
    for name in CHANNELS:
        if pos + 8 > len(blob):
            raise CorruptContainer("container is truncated")
        (n,) = struct.unpack_from("<Q", blob, pos)
        pos += 8
        if pos + n > len(blob) - 8:
            raise CorruptContainer(f"{name} section is truncated")
        sections[name] = blob[pos:pos + n]
        pos += n
    if pos + 8 != len(blob):
        raise CorruptContainer("unexpected bytes after the last section")
    (sections["digest"],) = struct.unpack_from("<Q", blob, pos)
    return sections


def decompress_channels(blob: bytes):
    """(headers, sequences, separators, qualities, digest) of a container."""
    sections = read_sections(blob)
    headers, seps = _decode_headers(sections["headers"])
    seqs = _decode_sequences(sections["sequences"])
    if len(seqs) != len(headers):
        raise CorruptContainer("channel record counts differ")
    quals = _decode_qualities(sections["qualities"], [len(s) for s in seqs])
    return headers, seqs, seps, quals, sections["digest"]


def record_chunks(headers, seqs, seps, quals) -> list[bytes]:
    """The 4-line text of every record."""
    nl = b"\n"
    return [nl.join(t) + nl for t in zip(headers, seqs, seps, quals)]


def decompress_records(blob: bytes) -> list[FastqRecord]:
    headers, seqs, seps, quals, _ = decompress_channels(blob)
    try:
        return [FastqRecord(h, s, p, q) for h, s, p, q in zip(headers, seqs, seps, quals)]
    except ValueError as exc:
        raise CorruptContainer(f"decoded record is invalid: {exc}") from exc


def builtin_decompress(blob: bytes) -> bytes:
    """Decompress an RSQZ container back to the exact FASTQ bytes."""
    *channels, digest = decompress_channels(blob)
    plain = b"".join(record_chunks(*channels))
    if fnv1a64_bytes(plain) != digest:
        raise CorruptContainer("plaintext digest mismatch")
    return plain


def section_sizes(blob: bytes) -> dict:
    sections = read_sections(blob)
    return {name: len(sections[name]) for name in CHANNELS}
