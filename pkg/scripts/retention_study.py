"""How closely do N sampled users reproduce a retention curve?

For the five-entry example curve and every bundled video, draw N watch
durations per repeat, rebuild the per-second curve, and report the median and
90th-percentile max deviation across repeats for each N.
"""
import argparse
import csv
import sys

import numpy as np

from svsim.harness import mix_seed
from svsim.retention import sampling_deviation
from svsim.traces import bundled_manifest, example_retention


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, nargs="+", default=[10, 25, 50, 100, 200])
    ap.add_argument("--repeats", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", help="also write rows (curve, n, median, p90) here")
    args = ap.parse_args(argv)

    curves = {"example": example_retention()}
    curves.update({name: v.retention for name, v in bundled_manifest().videos.items()})

    rows = []
    for name, curve in curves.items():
        for n in args.n:
            rng = np.random.default_rng(mix_seed(args.seed, "retention-study", name, n))
            stats = sampling_deviation(curve, n, args.repeats, rng)
            rows.append((name, n, stats.median, stats.p90))

    width = max(len(name) for name in curves)
    print(f"{'curve':<{width}}  " + "  ".join(f"N={n:<10}" for n in args.n))
    for name in curves:
        cells = [f"{m:.3f}/{p:.3f}" for c, _, m, p in rows if c == name]
        print(f"{name:<{width}}  " + "  ".join(f"{c:<12}" for c in cells))
    print("(median / p90 of max |empirical - true| over repeats)")

    if args.csv:
        with open(args.csv, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["curve", "n", "median", "p90"])
            w.writerows((c, n, repr(m), repr(p)) for c, n, m, p in rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
