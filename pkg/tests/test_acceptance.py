"""Acceptance checks, one per criterion.

Each test prints a single ``ACCEPT <n> PASS|FAIL`` line; the lines are
repeated in the terminal summary (see conftest). Running this file as a
script prints the same lines without pytest.

The benchmark criteria (5, 6, 7, 10) share one set of runs: the
coverage-50 / 20-reference points of the reference sweep are the
coverage-50 points of the coverage sweep.
"""

import itertools
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from readsort.classification import ReferenceDb, similarity_from_bits
from readsort.context_models import ModelEnsemble, default_models
from readsort.fastq_io import FastqRecord, fastq_bytes, parse_fastq_bytes
from readsort.pipeline import BenchConfig, PipelineConfig, cmd_bench, pack_records, unpack_bytes
from readsort.rangecoder import HEADER_ALLOWANCE, model_code_length, range_decode, range_encode
from readsort.read_filter import PackedReads, recursive_filter, score_from_bits
from readsort.reorder_codec import encode_permutation, stirling_order_bits
from readsort.simulator import (
    SimConfig, gen_genome, random_reads, read_id, read_truth, simulate_reads, write_truth,
)

sys.path.insert(0, str(Path(__file__).parent))
from oracle import OracleEnsemble  # noqa: E402

RESULTS: dict[int, str] = {}

REF_GRID = (5, 20, 40)
COV_GRID = (2, 10, 50)
SEEDS = (0, 1, 2)


def record(n, ok, detail, seconds=None):
    line = f"ACCEPT {n:2d} {'PASS' if ok else 'FAIL'}  {detail}"
    if seconds is not None:
        line += f"  [{seconds:.1f}s]"
    RESULTS[n] = line
    print(line)
    return ok


# ---------------------------------------------------------------- 1


def _fuzz_files(rng, pool, count):
    letters = np.frombuffer(b"ACGTN", np.uint8)
    yield "empty", []
    yield "one read", pool[:1]
    yield "N reads", [FastqRecord(b"@n%d" % i, b"N" * 30 + pool[i].sequence[30:], b"+", pool[i].quality)
                      for i in range(20)]
    # about 1 MB of header text
    big = []
    for i in range(2100):
        r = pool[i % len(pool)]
        big.append(FastqRecord(b"@hdr%06d:" % i + b"x" * 480 + b" %d" % (i * 7), r.sequence, b"+", r.quality))
    yield "1MB headers", big
    for k in range(count - 4):
        kind = k % 3
        n = int(rng.integers(0, 80))
        if kind == 0:
            n = int(rng.integers(0, 400))
            recs = [pool[j] for j in rng.choice(len(pool), n, replace=False)]
        else:
            recs = []
            for i in range(n):
                L = int(rng.integers(0, 200))
                alphabet = letters if kind == 1 else letters[:4]
                seq = alphabet[rng.integers(0, len(alphabet), L)].tobytes()
                qual = rng.integers(33, 127, L).astype(np.uint8).tobytes()
                head = b"@" + rng.integers(33, 127, int(rng.integers(0, 40))).astype(np.uint8).tobytes()
                sep = b"+" + (head[1:] if rng.random() < 0.3 else b"")
                recs.append(FastqRecord(head, seq, sep, qual))
            if n and rng.random() < 0.5:
                recs += [pool[j] for j in rng.choice(len(pool), 200, replace=False)]
                recs = [recs[j] for j in rng.permutation(len(recs))]
        yield f"fuzz {k}", recs


def criterion_1(count=1000):
    t = time.perf_counter()
    refs = [gen_genome(3000, 500 + i) for i in range(3)]
    db = ReferenceDb([(f"g{i}", r) for i, r in enumerate(refs)])
    pool = simulate_reads(refs, SimConfig(coverage=20, seed=9), ["g0", "g1", "g2"])
    rng = np.random.default_rng(1)
    bad, files, sorted_files = [], 0, 0
    with tempfile.TemporaryDirectory() as work:
        for k, (label, recs) in enumerate(_fuzz_files(rng, pool, count)):
            plain = fastq_bytes(recs)
            # a low T1 on every other file pushes small files through the filter too
            cfg = PipelineConfig(t1=50.0 if k % 2 else 5.0)
            res = pack_records(parse_fastq_bytes(plain), db, cfg, Path(work))
            if unpack_bytes(res.archive, res.sidecar) != plain:
                bad.append(label)
            back = parse_fastq_bytes(unpack_bytes(res.archive))
            if sorted(back, key=_text) != sorted(recs, key=_text):
                bad.append(label + " (no sidecar)")
            files += 1
            sorted_files += res.plan.permutation.tolist() != list(range(len(recs)))
    secs = time.perf_counter() - t
    ok = not bad and files >= 1000 and secs < 300
    return record(1, ok, f"losslessness: {files} files, {sorted_files} reordered, "
                         f"{len(bad)} failures {bad[:3]}", secs)


def _text(rec):
    return rec.to_bytes()


# ---------------------------------------------------------------- 2


def criterion_2():
    t = time.perf_counter()
    rng = np.random.default_rng(2)
    train = ["".join("ACGT"[i] for i in rng.integers(0, 4, 400)) for _ in range(4)]
    ens = ModelEnsemble(default_models())
    ens.train_many(train)
    ens.freeze()
    ora = OracleEnsemble(default_models())
    for s in train:
        ora.train(s)
    strings = ["".join(p) for k in range(7) for p in itertools.product("ACGT", repeat=k)]
    strings += ["".join("ACGT"[i] for i in rng.integers(0, 4, int(rng.integers(0, 13))))
                for _ in range(200)]
    worst = max(abs(ens.code_length(s) - ora.code_length(s)) for s in strings)
    secs = time.perf_counter() - t
    return record(2, worst <= 1e-9 and secs < 60,
                  f"estimator oracle: {len(strings)} strings, max |diff| = {worst:.2e} bits", secs)


# ---------------------------------------------------------------- 3


def criterion_3():
    checks = [
        similarity_from_bits(0.0, 37) == 100.0,
        similarity_from_bits(2.0 * 37, 37) == 0.0,
        score_from_bits(150.0, 150) == 0.5,
        score_from_bits(37.0, 37) == 0.5,
    ]
    return record(3, all(checks), f"S and R contracts: {sum(checks)}/{len(checks)} exact")


# ---------------------------------------------------------------- 4


def criterion_4():
    t = time.perf_counter()
    refs = [gen_genome(20_000, 41), gen_genome(20_000, 42)]
    recs = simulate_reads(refs, SimConfig(coverage=20, seed=4), ["refA", "refB"]) + random_reads(1000, seed=4)
    with tempfile.TemporaryDirectory() as d:
        write_truth(recs, Path(d) / "truth.tsv")
        truth = read_truth(Path(d) / "truth.tsv")
    plan = recursive_filter(PackedReads([r.sequence for r in recs]), [("refA", refs[0]), ("refB", refs[1])],
                            t2=0.5)
    group = {}
    for rid, idx in plan.groups:
        for i in idx.tolist():
            group[read_id(recs[i].header)] = rid
    sim = [k for k, v in truth.items() if v != "*"]
    rnd = [k for k, v in truth.items() if v == "*"]
    sim_frac = sum(group.get(k) == truth[k] for k in sim) / len(sim)
    rnd_frac = sum(k not in group for k in rnd) / len(rnd)
    secs = time.perf_counter() - t
    ok = sim_frac >= 0.95 and rnd_frac >= 0.95 and secs < 120
    return record(4, ok, f"filter separation: simulated {sim_frac:.4f} in own group, "
                         f"random {rnd_frac:.4f} in residual", secs)


# ---------------------------------------------------------------- benchmarks

_BENCH: dict = {}


def bench_runs():
    """{(axis value key): (rows, seconds)} for both sweeps, computed once."""
    if _BENCH:
        return _BENCH
    for refs in REF_GRID:
        t = time.perf_counter()
        rows = cmd_bench("references", [refs], BenchConfig(coverage=50.0, seeds=SEEDS))
        _BENCH[("refs", refs)] = (rows, time.perf_counter() - t)
    for cov in COV_GRID:
        if cov == 50:
            _BENCH[("cov", 50)] = _BENCH[("refs", 20)]
            continue
        t = time.perf_counter()
        rows = cmd_bench("coverage", [cov], BenchConfig(n_refs=20, seeds=SEEDS))
        _BENCH[("cov", cov)] = (rows, time.perf_counter() - t)
    return _BENCH


def _median(rows):
    return float(np.median([r.values["gain_bytes"] for r in rows]))


def criterion_5():
    runs = bench_runs()
    med = {r: _median(runs[("refs", r)][0]) for r in REF_GRID}
    secs = sum(runs[("refs", r)][1] for r in REF_GRID)
    ok = med[20] > 0 and med[40] > 0 and med[40] > med[5] and secs < 900
    detail = ", ".join(f"{r} refs: {med[r]:.0f} B" for r in REF_GRID)
    return record(5, ok, f"median gain vs references ({detail})", secs)


def criterion_6():
    runs = bench_runs()
    med = [_median(runs[("cov", c)][0]) for c in COV_GRID]
    secs = sum(runs[("cov", c)][1] for c in COV_GRID)
    ok = med[0] < med[1] < med[2] and secs < 900
    detail = ", ".join(f"cov {c}: {m:.0f} B" for c, m in zip(COV_GRID, med))
    return record(6, ok, f"median gain vs coverage ({detail})", secs)


def criterion_7():
    rows = bench_runs()[("refs", 20)][0]
    parts = [(r.values["sequences_gain"], r.values["headers_gain"]) for r in rows]
    ok = all(s > 0 and s > h for s, h in parts)
    detail = "; ".join(f"seed {r.values['seed']}: sequences {s} B, headers {h} B" for r, (s, h) in zip(rows, parts))
    return record(7, ok, f"channel gains at 20 refs ({detail})")


def criterion_8():
    lines, ok = [], True
    for n in (10**3, 10**5):
        perm = np.random.default_rng(n).permutation(n)
        bits = encode_permutation(perm).payload_bits
        lo, hi = stirling_order_bits(n), n * math.ceil(math.log2(n)) + 512
        ok &= lo <= bits <= hi
        lines.append(f"n={n}: {lo:.1f} <= {bits} <= {hi}")
    s1000 = stirling_order_bits(1000)
    ok &= abs(s1000 - 8523.09) <= 0.01
    return record(8, ok, f"order cost ({'; '.join(lines)}; stirling(1000) = {s1000:.4f})")


def criterion_9():
    rng = np.random.default_rng(9)
    worst, exact = -math.inf, True
    for k in range(100):
        n = int(rng.integers(1, 20_000))
        conc = float(rng.choice([0.05, 0.3, 1.0, 10.0]))
        probs = rng.dirichlet([conc] * 4, n)
        probs = np.maximum(probs, 2.0**-16)
        probs /= probs.sum(1, keepdims=True)
        u = rng.random(n)[:, None]
        syms = (u > np.cumsum(probs, 1)).sum(1).clip(0, 3)
        data = range_encode(probs, syms)
        ideal = model_code_length(probs, syms) / 8
        worst = max(worst, len(data) - (ideal + HEADER_ALLOWANCE + 0.001 * ideal))
        exact &= bool((range_decode(data, probs) == syms).all())
    ok = worst <= 0 and exact
    return record(9, ok, f"range coder: 100 streams, worst slack {worst:.1f} B "
                         f"(<= 0 required), exact decode {exact}")


def criterion_10():
    runs = bench_runs()
    rows = [r for v in REF_GRID for r in runs[("refs", v)][0]]
    ratios = [r.unpack_seconds / r.pack_seconds for r in rows]
    ok = all(r.roundtrip_ok for r in rows) and max(ratios) < 0.10
    return record(10, ok, f"unpack without db: {len(rows)} runs byte-identical "
                          f"{all(r.roundtrip_ok for r in rows)}, unpack/pack max {max(ratios):.3f}, "
                          f"median {float(np.median(ratios)):.3f}")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10]


@pytest.mark.slow
@pytest.mark.parametrize("n", range(1, 11))
def test_criterion(n):
    assert CRITERIA[n - 1](), RESULTS[n]


if __name__ == "__main__":
    failed = sum(not c() for c in CRITERIA)
    print("\n".join(RESULTS[k] for k in sorted(RESULTS)))
    sys.exit(1 if failed else 0)
