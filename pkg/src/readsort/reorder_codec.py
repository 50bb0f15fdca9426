"""Read-order sidecar: bit-packed permutation plus a header checksum.

Sidecar layout (little-endian)::

    magic   b"RSRT"     4 bytes
    version u8          currently 1
    n       u64         number of reads
    digest  u64         FNV-1a 64 of the read headers in original order
    payload             n fixed-width indices, ceil(log2 max(n, 2)) bits each,
                        packed LSB first, zero padded to a byte boundary
    crc     u32         CRC-32 of everything above

Index ``k`` of the payload is the original position of the ``k``-th read
in sorted order, so restoring the original order is one scatter.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _kernels as K
from .errors import CorruptSidecar, DomainError

MAGIC = b"RSRT"
VERSION = 1
_HEAD = struct.Struct("<4sBQQ")
HEADER_BYTES = _HEAD.size + 4

FNV_OFFSET = 0xCBF29CE484222325


def fnv1a64(chunks: Iterable[bytes]) -> int:
    """FNV-1a over the concatenation of ``chunks``, each followed by a newline."""
    chunks = list(chunks)
    if not chunks:
        return FNV_OFFSET
    return fnv1a64_bytes(b"\n".join(chunks) + b"\n")


def fnv1a64_bytes(data: bytes) -> int:
    return int(K.fnv1a64_kernel(np.frombuffer(data, np.uint8)))


MAX_READS = 1 << 56


def index_width(n: int) -> int:
    if n > MAX_READS:
        raise DomainError(f"at most 2**56 reads are supported, got {n}")
    return max(1, (max(n, 2) - 1).bit_length())


def stirling_order_bits(n: int) -> float:
    """Stirling estimate of log2(n!): n log2 n - n log2 e.

    Negative for n == 1; the approximation is returned unclamped.
    """
    if n < 1:
        raise DomainError("the Stirling order cost needs n >= 1")
    return n * math.log2(n) - n * math.log2(math.e)


@dataclass(frozen=True)
class PermutationSidecar:
    n: int
    payload: bytes
    checksum: int

    @property
    def payload_bits(self) -> int:
        return 8 * len(self.payload)

    def to_bytes(self) -> bytes:
        body = _HEAD.pack(MAGIC, VERSION, self.n, self.checksum) + self.payload
        return body + struct.pack("<I", zlib.crc32(body))

    @classmethod
    def from_bytes(cls, data: bytes) -> "PermutationSidecar":
        if len(data) < HEADER_BYTES:
            raise CorruptSidecar("sidecar is truncated")
        body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
        magic, version, n, checksum = _HEAD.unpack_from(body)
        if magic != MAGIC:
            raise CorruptSidecar(f"bad magic {magic!r}")
        if version != VERSION:
            raise CorruptSidecar(f"unsupported sidecar version {version}")
        if zlib.crc32(body) != crc:
            raise CorruptSidecar("sidecar CRC mismatch")
        payload = body[_HEAD.size:]
        if len(payload) != _payload_len(n):
            raise CorruptSidecar(
                f"payload has {len(payload)} bytes, expected {_payload_len(n)} for n={n}"
            )
        return cls(n, payload, checksum)


def _payload_len(n: int) -> int:
    return (n * index_width(n) + 7) // 8 if n else 0


def _pack(values: np.ndarray, width: int) -> bytes:
    if len(values) == 0:
        return b""
    shifts = np.arange(width, dtype=np.uint64)
    bits = ((values.astype(np.uint64)[:, None] >> shifts) & np.uint64(1)).astype(np.uint8)
    return np.packbits(bits.ravel(), bitorder="little").tobytes()


def _unpack(payload: bytes, n: int, width: int) -> np.ndarray:
    if n == 0:
        return np.zeros(0, np.int64)
    return K.unpack_fixed_kernel(np.frombuffer(payload, np.uint8), n, width)


def is_permutation(perm: np.ndarray, n: int | None = None) -> bool:
    perm = np.asarray(perm)
    n = len(perm) if n is None else n
    if len(perm) != n:
        return False
    if n == 0:
        return True
    if perm.min() < 0 or perm.max() >= n:
        return False
    seen = np.zeros(n, bool)
    seen[perm] = True
    return bool(seen.all())


def encode_permutation(perm: Sequence[int], headers: Iterable[bytes] = ()) -> PermutationSidecar:
    """Pack ``perm`` (sorted position -> original index).

    ``headers`` are the read headers in original order; their digest lets
    a restore detect a sidecar paired with the wrong file.
    """
    perm = np.asarray(perm, np.int64)
    n = len(perm)
    if not is_permutation(perm):
        raise ValueError("not a permutation of 0..n-1")
    return PermutationSidecar(n, _pack(perm, index_width(n)), fnv1a64(headers))


def decode_permutation(sidecar: PermutationSidecar | bytes, n: int | None = None) -> np.ndarray:
    if isinstance(sidecar, (bytes, bytearray, memoryview)):
        sidecar = PermutationSidecar.from_bytes(bytes(sidecar))
    if n is not None and n != sidecar.n:
        raise CorruptSidecar(f"sidecar describes {sidecar.n} reads, archive holds {n}")
    if len(sidecar.payload) != _payload_len(sidecar.n):
        raise CorruptSidecar("payload length does not match n")
    perm = _unpack(sidecar.payload, sidecar.n, index_width(sidecar.n))
    if not is_permutation(perm, sidecar.n):
        raise CorruptSidecar("payload does not decode to a permutation")
    return perm


def restore_order(items: Sequence, sidecar: PermutationSidecar | bytes, headers_of=None) -> list:
    """Scatter sorted ``items`` back to original order and verify the digest.

    ``headers_of`` maps an item to its header bytes; when omitted the items
    are expected to have a ``header`` attribute.
    """
    if isinstance(sidecar, (bytes, bytearray, memoryview)):
        sidecar = PermutationSidecar.from_bytes(bytes(sidecar))
    perm = decode_permutation(sidecar, len(items))
    out = [None] * len(items)
    for k, i in enumerate(perm.tolist()):
        out[i] = items[k]
    get = headers_of or (lambda rec: rec.header)
    if fnv1a64(get(rec) for rec in out) != sidecar.checksum:
        raise CorruptSidecar("header digest mismatch: sidecar belongs to a different file")
    return out
