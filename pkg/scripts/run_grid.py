"""Desk-scale evaluation grid.

Draws a few synthetic traces per bandwidth category, writes them and an
evaluation config under --out, runs every algorithm over traces x the bundled
seven-video sequence x N sampled users, and prints the ranking together with
how often the full-knowledge oracle matches or beats each baseline.
"""
import argparse
import csv
import logging
import sys
from pathlib import Path

from svsim.harness import default_workers, load_eval_config, run_evaluation
from svsim.traces import EVALUATION_THRESHOLDS, TraceCategory, format_network_trace, generate_category_traces

ALGORITHMS = ("no_prefetch", "fixed_prefetch", "threshold", "oracle")


def write_inputs(out: Path, per_category: int, seed: int, n_users: int, algorithms) -> Path:
    traces = out / "traces"
    traces.mkdir(parents=True, exist_ok=True)
    for cat in TraceCategory:
        for tr in generate_category_traces(cat, per_category, seed, EVALUATION_THRESHOLDS):
            (traces / f"{tr.id}.txt").write_text(format_network_trace(tr))
    lo, hi = EVALUATION_THRESHOLDS
    lines = ["[evaluate]", "traces = traces", "sequences = table3", f"n_users = {n_users}",
             f"seed = {seed}", f"thresholds = {lo}, {hi}", "baseline = no_prefetch", ""]
    for a in algorithms:
        lines += [f"[algorithm {a}]", ""]
    cfg = out / "eval.ini"
    cfg.write_text("\n".join(lines))
    return cfg


def oracle_summary(raw_csv: Path, baselines):
    with open(raw_csv) as f:
        rows = list(csv.DictReader(f))
    for b in baselines:
        wins = sum(float(r["oracle"]) >= float(r[b]) for r in rows)
        print(f"  oracle >= {b:<15} on {wins}/{len(rows)} conditions ({wins / len(rows):.1%})")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="grid_out")
    ap.add_argument("--per-category", type=int, default=3)
    ap.add_argument("--n-users", type=int, default=50)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--workers", type=int, default=default_workers())
    ap.add_argument("--algorithms", nargs="+", default=list(ALGORITHMS))
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    out = Path(args.out)
    cfg = load_eval_config(write_inputs(out, args.per_category, args.seed, args.n_users, args.algorithms))
    report = run_evaluation(cfg, out / "results", args.workers)

    print("rank  algorithm        normalized sum   Low        Medium     High")
    for i, a in enumerate(report.order, 1):
        cats = report.per_category[a]
        print(f"{i:<5} {a:<16} {report.totals[a]:>14.2f}   "
              + " ".join(f"{cats.get(c.value, 0.0):>10.2f}" for c in TraceCategory))
    if "oracle" in args.algorithms:
        oracle_summary(out / "results" / "raw_scores.csv", [a for a in args.algorithms if a != "oracle"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
