"""Rank a reference database against a read set, then group the reads.

A database of six synthetic genomes is built, reads are simulated from
three of them, and a few hundred random reads are mixed in. Classification
should select exactly the three source genomes; the recursive filter then
gathers each genome's reads into its own group and leaves the random
reads in the residual.
"""

from collections import Counter

from readsort.classification import ReferenceDb, classify
from readsort.read_filter import PackedReads, recursive_filter
from readsort.simulator import SimConfig, gen_genome, origin_of, random_reads, simulate_reads


def main():
    genomes = [(f"g{i}", gen_genome(20_000, 100 + i)) for i in range(6)]
    db = ReferenceDb(genomes)
    reads = simulate_reads([s for _, s in genomes[:3]], SimConfig(coverage=30, seed=7),
                           [r for r, _ in genomes[:3]])
    reads += random_reads(300, seed=7)
    print(f"{len(reads)} reads, {len(db)} references in the database\n")

    result = classify(db, [r.sequence for r in reads])
    print("ref   similarity  selected")
    for r in result.ranked:
        print(f"{r.ref_id:5s} {r.similarity:10.2f}  {'yes' if r in result.selected else ''}")

    selected = [(rid, db.get(rid)) for rid in result.selected_ids]
    plan = recursive_filter(PackedReads([r.sequence for r in reads]), selected)
    print("\ngroup  reads  origin of its reads")
    for rid, idx in plan.groups:
        origins = Counter(origin_of(reads[i].header) for i in idx.tolist())
        print(f"{rid:6s} {len(idx):5d}  {dict(origins)}")
    origins = Counter(origin_of(reads[i].header) for i in plan.residual.tolist())
    print(f"{'rest':6s} {len(plan.residual):5d}  {dict(origins)}")


if __name__ == "__main__":
    main()
