import shutil

import pytest

from readsort.backends import (
    BackendSpec, GainReport, compress_file, decompress_file, gain_report, report_from_sizes,
)
from readsort.errors import DomainError, ToolFailed, ToolMissing
from readsort.reorder_codec import encode_permutation


def test_spec_validation():
    assert BackendSpec().kind == "builtin"
    with pytest.raises(DomainError):
        BackendSpec("zip")
    with pytest.raises(DomainError):
        BackendSpec.external("mytool {in}")
    with pytest.raises(DomainError):
        BackendSpec.external("cat {in} > {out}", "cat {in}")
    spec = BackendSpec.external("xz")
    assert "{in}" in spec.command_template and "-d" in spec.decompress_template


def test_builtin_file_roundtrip(tmp_path, small_fastq):
    src = tmp_path / "a.fastq"
    src.write_bytes(small_fastq)
    size, sections = compress_file(BackendSpec(), src, tmp_path / "a.rsqz")
    assert size == (tmp_path / "a.rsqz").stat().st_size and set(sections) == {"headers", "sequences", "qualities"}
    decompress_file(BackendSpec(), tmp_path / "a.rsqz", tmp_path / "b.fastq")
    assert (tmp_path / "b.fastq").read_bytes() == small_fastq


@pytest.mark.skipif(shutil.which("gzip") is None, reason="gzip not installed")
def test_external_roundtrip(tmp_path, small_fastq):
    src = tmp_path / "a b.fastq"  # space in the path exercises quoting
    src.write_bytes(small_fastq)
    spec = BackendSpec.external("gzip")
    compress_file(spec, src, tmp_path / "a.gz")
    decompress_file(spec, tmp_path / "a.gz", tmp_path / "b.fastq")
    assert (tmp_path / "b.fastq").read_bytes() == small_fastq
    rep = gain_report(src, src, encode_permutation(range(30)).to_bytes(), spec, tmp_path)
    assert rep.gain_bytes == 0 and rep.sidecar_bytes > 0


def test_tool_errors(tmp_path, small_fastq):
    src = tmp_path / "a.fastq"
    src.write_bytes(small_fastq)
    with pytest.raises(ToolMissing) as ei:
        compress_file(BackendSpec.external("no-such-tool-xyz {in} {out}", "x {in} {out}"), src, tmp_path / "o")
    assert ei.value.exit_code == 4
    with pytest.raises(ToolFailed) as ei:
        compress_file(BackendSpec.external("false {in} {out}", "false {in} {out}"), src, tmp_path / "o")
    assert ei.value.exit_code == 4


def test_gain_arithmetic():
    r = GainReport(1000, 800, sidecar_bytes=50, stirling_bits=800.0)
    assert r.gain_bytes == 200 and r.gain_percent == pytest.approx(20.0)
    assert r.adjusted_gain_bytes == 150 and r.stirling_adjusted_gain_bytes == 100.0
    assert GainReport(0, 0).gain_percent == 0.0
    rep = report_from_sizes(10, 8, 1000, 0, {"headers": 1, "sequences": 5, "qualities": 4},
                            {"headers": 2, "sequences": 2, "qualities": 4})
    assert rep.channel_gain("headers") == -1 and rep.channel_gain("sequences") == 3
    assert rep.to_dict()["stirling_bits"] == pytest.approx(8523.09, abs=0.01)
