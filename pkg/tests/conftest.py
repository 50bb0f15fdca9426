import numpy as np
import pytest

from readsort.fastq_io import FastqRecord, fastq_bytes


def make_records(n, read_len=20, seed=0, alphabet=b"ACGT"):
    rng = np.random.default_rng(seed)
    letters = np.frombuffer(alphabet, np.uint8)
    out = []
    for i in range(n):
        seq = letters[rng.integers(0, len(letters), read_len)].tobytes()
        qual = (rng.integers(33, 74, read_len)).astype(np.uint8).tobytes()
        out.append(FastqRecord(f"@read{i} lane:{i % 3}".encode(), seq, b"+", qual))
    return out


@pytest.fixture
def small_fastq():
    return fastq_bytes(make_records(30, read_len=50))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
