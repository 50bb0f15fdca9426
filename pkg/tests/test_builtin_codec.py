import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from readsort.builtin_codec import (
    CONTAINER_OVERHEAD, MAGIC, builtin_compress, builtin_decompress, compress_with_sections,
    decode_header_ops, decompress_records, encode_header_ops, read_sections, section_sizes,
)
from readsort.context_models import FcmConfig, StcmConfig
from readsort.errors import CorruptContainer
from readsort.fastq_io import FastqRecord, fastq_bytes
from readsort.simulator import SimConfig, gen_genome, simulate_reads

from conftest import make_records


def test_empty_container():
    blob = builtin_compress([])
    assert len(blob) == CONTAINER_OVERHEAD + sum(section_sizes(blob).values())
    assert builtin_decompress(blob) == b""


def test_roundtrip_simulated():
    recs = simulate_reads([gen_genome(5000, 1)], SimConfig(coverage=10, seed=2))
    data = fastq_bytes(recs)
    assert builtin_decompress(builtin_compress(data)) == data
    assert decompress_records(builtin_compress(recs)) == recs


def test_identical_reads_are_cheap():
    seq = gen_genome(150, 3)
    recs = [FastqRecord(f"@r{i}".encode(), seq, b"+", b"I" * 150) for i in range(200)]
    packed = compress_with_sections(recs)
    assert packed.sections["sequences"] * 8 / (150 * 200) < 0.2


def test_odd_records():
    recs = [
        FastqRecord(b"@", b"", b"+", b""),
        FastqRecord(b"@x 1:2:3", b"NNNNACGTRYKM", b"+x 1:2:3", b"!!!!IIII~~~~"),
        FastqRecord(b"@x 1:2:4", b"ACGTUX", b"+", b"ABCDEF"),
        FastqRecord(b"@" + b"h" * 5000, b"A" * 1000, b"+", b"#" * 1000),
        FastqRecord(b"@007 0099 18446744073709551615", b"T", b"+", b"5"),
        FastqRecord(b"@007 0100 18446744073709551616", b"G", b"+", b"5"),
    ]
    data = fastq_bytes(recs)
    assert builtin_decompress(builtin_compress(data)) == data


def test_ensemble_model_option():
    recs = simulate_reads([gen_genome(3000, 4)], SimConfig(coverage=5, seed=4))
    models = [FcmConfig(4), StcmConfig(FcmConfig(11), 2)]
    blob = builtin_compress(recs, models=models, hash_bits=16)
    assert decompress_records(blob) == recs


def test_header_ops_roundtrip():
    headers = [b"@a.1/1 x", b"@a.2/1 x", b"@a.10/2 y", b"@b"]
    seps = [b"+", b"+a.2/1 x", b"+", b"+"]
    ops = encode_header_ops(headers, seps)
    h, s = decode_header_ops(ops, len(headers))
    assert h == headers and s == seps
    with pytest.raises(CorruptContainer):
        decode_header_ops(ops[:-1], len(headers))
    with pytest.raises(CorruptContainer):
        decode_header_ops(ops, len(headers) - 1)


def test_structural_errors():
    blob = builtin_compress(make_records(20))
    with pytest.raises(CorruptContainer, match="truncated"):
        builtin_decompress(blob[:10])
    with pytest.raises(CorruptContainer, match="version"):
        builtin_decompress(blob[:4] + b"\x09" + blob[5:])
    with pytest.raises(CorruptContainer, match="magic"):
        builtin_decompress(b"XXXX" + blob[4:])
    with pytest.raises(CorruptContainer):
        builtin_decompress(blob + b"\0")
    with pytest.raises(CorruptContainer):
        builtin_decompress(blob[:-1])
    assert set(read_sections(blob)) == {"headers", "sequences", "qualities", "digest"}


def test_bit_flips_never_decode_wrong():
    # a flip in bytes the decoder never reads (coder flush tail) is harmless;
    # anything else must raise
    plain = fastq_bytes(make_records(40, read_len=60, seed=5))
    blob = builtin_compress(plain)
    rng = np.random.default_rng(0)
    raised = 0
    for pos in rng.choice(len(blob), 150, replace=False):
        bad = bytearray(blob)
        bad[pos] ^= 1 << int(rng.integers(0, 8))
        try:
            assert builtin_decompress(bytes(bad)) == plain
        except CorruptContainer:
            raised += 1
    assert raised >= 140


def test_section_lengths():
    blob = builtin_compress(make_records(5))
    secs = read_sections(blob)
    (n,) = struct.unpack_from("<Q", blob, 5)
    assert blob[:4] == MAGIC and n == len(secs["headers"])


_record = st.builds(
    lambda h, s, q, plus: FastqRecord(b"@" + h, s, b"+" + (h if plus else b""), q[:len(s)].ljust(len(s), b"I")),
    st.binary(max_size=30).map(lambda b: bytes(c for c in b if c not in (10, 13))),
    st.text("ACGTN", max_size=80).map(str.encode),
    st.text("".join(map(chr, range(33, 127))), max_size=80).map(str.encode),
    st.booleans(),
)


@settings(max_examples=200, deadline=None)
@given(st.lists(_record, max_size=12))
def test_roundtrip_property(recs):
    data = fastq_bytes(recs)
    assert builtin_decompress(builtin_compress(data)) == data
