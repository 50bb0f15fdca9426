import numpy as np
import pytest

from readsort.errors import DomainError, RefTooShort
from readsort.fastq_io import fastq_bytes
from readsort.simulator import (
    SimConfig, gen_genome, origin_of, quality_profile, random_reads, read_id, read_truth,
    simulate_reads, truth_table, write_fasta, write_truth,
)
from readsort.classification import load_db


def test_genome_deterministic():
    g = gen_genome(3000, 5)
    assert g == gen_genome(3000, 5) != gen_genome(3000, 6)
    assert len(g) == 3000 and set(g) <= set(b"ACGT")
    with pytest.raises(DomainError):
        gen_genome(0)


def test_reads_paired_and_counted():
    ref = gen_genome(4000, 1)
    cfg = SimConfig(coverage=15, seed=2)
    recs = simulate_reads([ref], cfg, ["x"])
    assert len(recs) == 2 * round(15 * 4000 / 300)
    assert fastq_bytes(recs) == fastq_bytes(simulate_reads([ref], cfg, ["x"]))
    assert all(len(r.sequence) == 150 == len(r.quality) for r in recs)
    assert recs[0].header.startswith(b"@sim.0/1 x:") and recs[1].header.startswith(b"@sim.0/2 x:")


def test_error_free_reads_come_from_either_strand():
    ref = gen_genome(3000, 3)
    rc = ref[::-1].translate(bytes.maketrans(b"ACGT", b"TGCA"))
    recs = simulate_reads([ref], SimConfig(coverage=5, sub_error_rate=0, paired=False, seed=1))
    on_fwd = sum(r.sequence in ref for r in recs)
    on_rev = sum(r.sequence in rc for r in recs)
    assert on_fwd + on_rev == len(recs) and on_fwd > 0 and on_rev > 0


def test_truth(tmp_path):
    recs = simulate_reads([gen_genome(1000, 1)], SimConfig(coverage=2, seed=0), ["g"]) + random_reads(3)
    write_truth(recs, tmp_path / "t.tsv")
    truth = read_truth(tmp_path / "t.tsv")
    assert truth == dict(truth_table(recs))
    assert truth[read_id(recs[-1].header)] == "*"
    assert origin_of(recs[0].header) == "g"


def test_quality_profile():
    q = quality_profile(100, 150, np.random.default_rng(0))
    assert q.shape == (100, 150) and q.min() >= 35 and q.max() <= 73
    assert q[:, 0].mean() > q[:, -1].mean() + 5


def test_config_checks():
    with pytest.raises(DomainError):
        SimConfig(read_len=0)
    with pytest.raises(DomainError):
        SimConfig(coverage=0)
    with pytest.raises(RefTooShort):
        simulate_reads([b"ACGT" * 10], SimConfig())


def test_write_fasta(tmp_path):
    entries = [("a", gen_genome(200, 1)), ("b", gen_genome(71, 2))]
    write_fasta(entries, tmp_path / "db.fa")
    assert load_db(tmp_path / "db.fa").entries == entries
