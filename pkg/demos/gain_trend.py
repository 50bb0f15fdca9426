"""Gain against sequencing depth, on a small grid.

Deeper coverage puts more overlapping reads next to each other once they
are sorted, so the gain should grow with coverage. Pass larger values to
see the trend at full scale (this takes minutes).
"""

import sys

from readsort.pipeline import BenchConfig, bench_csv, cmd_bench, median_gain


def main(grid=(2, 10, 25), refs=10):
    rows = cmd_bench("coverage", list(grid), BenchConfig(n_refs=refs, seeds=(0, 1)))
    sys.stdout.write(bench_csv(rows))
    print()
    for c in grid:
        print(f"coverage {c:>4}: median gain {median_gain(rows, c):10.0f} bytes")


if __name__ == "__main__":
    main(tuple(float(x) for x in sys.argv[1:]) or (2, 10, 25))
