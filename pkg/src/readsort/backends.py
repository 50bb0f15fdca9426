"""Compression backends and gain accounting.

``builtin`` is the channel-separated codec of :mod:`builtin_codec`.
``external`` runs a shell command template in which ``{in}`` and ``{out}``
are replaced by quoted file paths, e.g. ``xz -9 -c {in} > {out}``.
"""

from __future__ import annotations

import shlex
import shutil
import subprocess
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .builtin_codec import CHANNELS, builtin_decompress, compress_with_sections
from .errors import DomainError, IoFailure, ToolFailed, ToolMissing
from .fastq_io import parse_fastq_bytes
from .reorder_codec import stirling_order_bits

PRESETS = {
    "xz": ("xz -9 -c {in} > {out}", "xz -d -c {in} > {out}"),
    "gzip": ("gzip -9 -c {in} > {out}", "gzip -d -c {in} > {out}"),
    "bzip2": ("bzip2 -9 -c {in} > {out}", "bzip2 -d -c {in} > {out}"),
}


@dataclass(frozen=True)
class BackendSpec:
    kind: str = "builtin"
    command_template: str = ""
    decompress_template: str = ""

    def __post_init__(self):
        if self.kind not in ("builtin", "external"):
            raise DomainError(f"unknown backend kind {self.kind!r}")
        if self.kind == "external":
            for name, tpl in (("command", self.command_template),
                              ("decompress", self.decompress_template)):
                if "{in}" not in tpl or "{out}" not in tpl:
                    raise DomainError(f"{name} template must contain {{in}} and {{out}}: {tpl!r}")

    @classmethod
    def external(cls, command: str, decompress: str | None = None) -> "BackendSpec":
        """``command`` may name a preset (xz, gzip, bzip2) or be a full template."""
        if command in PRESETS:
            c, d = PRESETS[command]
            return cls("external", c, decompress or d)
        if decompress is None:
            raise DomainError("an external command template needs a matching decompress template")
        return cls("external", command, decompress)


def _run(template: str, src, dst) -> None:
    words = shlex.split(template)
    if not words:
        raise DomainError("empty command template")
    if shutil.which(words[0]) is None:
        raise ToolMissing(f"command not found: {words[0]}")
    cmd = template.replace("{in}", shlex.quote(str(src))).replace("{out}", shlex.quote(str(dst)))
    proc = subprocess.run(cmd, shell=True, capture_output=True)
    if proc.returncode != 0:
        raise ToolFailed(cmd, proc.returncode, proc.stderr)


def external_compress(spec: BackendSpec, src, dst) -> int:
    _run(spec.command_template, src, dst)
    return Path(dst).stat().st_size


def external_decompress(spec: BackendSpec, src, dst) -> int:
    _run(spec.decompress_template, src, dst)
    return Path(dst).stat().st_size


def compress_file(spec: BackendSpec, src, dst) -> tuple[int, dict | None]:
    """Compress ``src`` to ``dst``; returns (bytes, per-channel bytes or None)."""
    if spec.kind == "external":
        return external_compress(spec, src, dst), None
    try:
        data = Path(src).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {src}: {exc}") from exc
    packed = compress_with_sections(list(parse_fastq_bytes(data)))
    Path(dst).write_bytes(packed.blob)
    return len(packed.blob), packed.sections


def decompress_file(spec: BackendSpec, src, dst) -> int:
    if spec.kind == "external":
        return external_decompress(spec, src, dst)
    out = builtin_decompress(Path(src).read_bytes())
    Path(dst).write_bytes(out)
    return len(out)


# ---------------------------------------------------------------- gains


@dataclass
class GainReport:
    original_compressed_bytes: int
    sorted_compressed_bytes: int
    sidecar_bytes: int = 0
    stirling_bits: float = 0.0
    per_channel: dict = field(default_factory=dict)

    @property
    def gain_bytes(self) -> int:
        return self.original_compressed_bytes - self.sorted_compressed_bytes

    @property
    def gain_percent(self) -> float:
        if self.original_compressed_bytes == 0:
            return 0.0
        return (1.0 - self.sorted_compressed_bytes / self.original_compressed_bytes) * 100.0

    @property
    def adjusted_gain_bytes(self) -> int:
        """Gain after paying for the sidecar that restores the original order."""
        return self.gain_bytes - self.sidecar_bytes

    @property
    def stirling_adjusted_gain_bytes(self) -> float:
        """Gain after charging the Stirling estimate of the order information."""
        return self.gain_bytes - self.stirling_bits / 8.0

    def channel_gain(self, channel: str) -> int:
        o, s = self.per_channel[channel]
        return o - s

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_channel"] = {k: list(v) for k, v in self.per_channel.items()}
        d.update(
            gain_bytes=self.gain_bytes,
            gain_percent=self.gain_percent,
            adjusted_gain_bytes=self.adjusted_gain_bytes,
            stirling_adjusted_gain_bytes=self.stirling_adjusted_gain_bytes,
        )
        return d


def order_bits(n: int) -> float:
    return stirling_order_bits(n) if n >= 1 else 0.0


def report_from_sizes(original: int, sorted_: int, n_reads: int, sidecar_bytes: int = 0,
                      original_sections: dict | None = None, sorted_sections: dict | None = None) -> GainReport:
    per = {}
    if original_sections and sorted_sections:
        per = {ch: (original_sections[ch], sorted_sections[ch]) for ch in CHANNELS}
    return GainReport(original, sorted_, sidecar_bytes, order_bits(n_reads), per)


def gain_report(original_path, sorted_path, sidecar: bytes | None, spec: BackendSpec,
                work_dir) -> GainReport:
    """Compress both files with the same backend and compare."""
    work_dir = Path(work_dir)
    o_size, o_sec = compress_file(spec, original_path, work_dir / "original.cmp")
    s_size, s_sec = compress_file(spec, sorted_path, work_dir / "sorted.cmp")
    n = sum(1 for _ in parse_fastq_bytes(Path(original_path).read_bytes()))
    return report_from_sizes(o_size, s_size, n, len(sidecar) if sidecar else 0, o_sec, s_sec)
