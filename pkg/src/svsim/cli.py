"""``svsim`` command line."""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .engine import AlgorithmError, EngineError, NonTerminating, Session, run_session
from .retention import sample_watch_durations, sampling_deviation, survival_counts
from .scoring import IncompleteTrajectory, QoeCoefficients, score_session, waste_report
from .trajectory import read_jsonl, write_jsonl
from .traces import (PUBLIC_THRESHOLDS, SyntheticTraceParams, TraceError, bundled_manifest_path,
                     classify, format_network_trace, generate_synthetic_trace, load_manifest,
                     mean_throughput, parse_network_trace, parse_retention_trace, parse_video_trace)

log = logging.getLogger("svsim")


def _thresholds(text: str) -> tuple[float, float]:
    try:
        a, b = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'low,high', got {text!r}") from None
    if not a < b:
        raise argparse.ArgumentTypeError("thresholds must satisfy low < high")
    return a, b


def _read_kv(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    cp = configparser.ConfigParser()
    cp.read_string("[params]\n" + Path(path).read_text())
    return dict(cp["params"])


def cmd_gen_net(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    means = []
    for i in range(args.count):
        seed = harness.mix_seed(args.seed, "gen-net", i) >> 1
        params = SyntheticTraceParams(args.min_bw, args.max_bw, args.state_dur, args.noise_std,
                                      args.len, seed)
        trace = generate_synthetic_trace(params, f"synthetic_{i:04d}")
        (out / f"{trace.id}.txt").write_text(format_network_trace(trace))
        means.append(mean_throughput(trace))
    print(f"wrote {args.count} traces to {out} (mean throughput {np.mean(means):.3f} Mbps)")
    return 0


def _inspect(path: Path, thresholds) -> dict:
    if path.suffix == ".json":
        m = load_manifest(path)
        return {"kind": "manifest", "valid": True, "videos": len(m.videos),
                "sequences": {k: list(v) for k, v in m.sequences.items()}}
    data = path.read_text()
    first = next((ln.split() for ln in data.splitlines() if ln.split()), [])
    if len(first) == 1:
        from .traces import RetentionCurve
        dummy = RetentionCurve(((0, 1.0), (1, 0.0)))
        v = parse_video_trace([data] * 3, path.stem, dummy)
        return {"kind": "video", "valid": True, "chunks": v.chunk_count}
    if len(first) == 2 and first[0] in ("0", "0.0") and first[1] in ("1", "1.0"):
        try:
            curve = parse_retention_trace(data)
            return {"kind": "retention", "valid": True, "entries": len(curve.entries),
                    "last_second": curve.last_second}
        except TraceError:
            pass
    trace = parse_network_trace(data, path.stem)
    return {"kind": "network", "valid": True, "points": len(trace.points),
            "mean_mbps": mean_throughput(trace),
            "category": classify(trace, thresholds).value, "thresholds": list(thresholds)}


def cmd_inspect(args) -> int:
    try:
        info = _inspect(Path(args.file), args.thresholds)
    except TraceError as e:
        print(json.dumps({"file": args.file, "valid": False, "error": type(e).__name__,
                          "message": str(e)}))
        return 1
    info["file"] = args.file
    print(json.dumps(info, sort_keys=True))
    return 0


def cmd_sample_retention(args) -> int:
    curve = parse_retention_trace(Path(args.curve).read_bytes())
    duration = args.duration_ms or curve.last_second * 1000 or 1
    rng = np.random.default_rng(args.seed)
    stats = sampling_deviation(curve, args.n, args.repeats, rng, duration)
    # one more independent draw set for the per-second table
    rng = np.random.default_rng(harness.mix_seed(args.seed, "table"))
    seconds = len(curve.entries) - 1
    emp = np.array([survival_counts(sample_watch_durations(curve, duration, args.n, rng), seconds) / args.n
                    for _ in range(args.repeats)])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["second", "true", "empirical_mean", "empirical_p05", "empirical_p95"])
        for s in range(seconds + 1):
            col = emp[:, s]
            w.writerow([s, repr(curve.fraction(s)), repr(float(col.mean())),
                        repr(float(np.percentile(col, 5))), repr(float(np.percentile(col, 95)))])
    print(json.dumps({"n": args.n, "repeats": args.repeats, "median_deviation": stats.median,
                      "p90_deviation": stats.p90, "out": str(out)}))
    return 0


def cmd_run(args) -> int:
    manifest = load_manifest(args.manifest or bundled_manifest_path())
    seq_id = args.sequence or sorted(manifest.sequences)[0]
    seq = manifest.sequence(seq_id)
    net = parse_network_trace(Path(args.net).read_bytes(), Path(args.net).stem)
    watch = harness.user_watch_durations(seq, args.seed, seq_id, args.user)
    algo = harness.AlgorithmSpec(args.algo, args.algo, tuple(sorted(_read_kv(args.algo_config).items())))
    result = run_session(Session(seq, net, watch), algo.build(harness.mix_seed(args.seed, "run", args.user)))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_jsonl(result.trajectory, out)
    b = result.breakdown
    print(f"{args.algo}: score={b.total:.3f} quality={b.quality:.3f} smoothness={b.smoothness:.3f} "
          f"rebuf_penalty={b.rebuf_penalty:.3f} bandwidth_cost={b.bandwidth_cost:.3f} "
          f"waste_mb={b.waste_mb:.3f} steps={len(result.trajectory)}")
    return 0


def cmd_score(args) -> int:
    records = read_jsonl(args.trajectory)
    coeffs = QoeCoefficients(args.alpha, args.beta, args.gamma, args.theta)
    doc = score_session(records, coeffs).to_json()
    doc["waste"] = waste_report(records).to_json()
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def cmd_evaluate(args) -> int:
    cfg = harness.load_eval_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    workers = args.workers if args.workers is not None else harness.default_workers()
    report = harness.run_evaluation(cfg, args.out, workers)
    best = report.order[0]
    print(f"ranked {len(report.order)} algorithms; best {best} ({report.totals[best]:.3f}); "
          f"outputs in {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="svsim", description="Short-video prefetching simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-net", help="generate synthetic network traces")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--min-bw", type=float, default=SyntheticTraceParams.min_bw)
    p.add_argument("--max-bw", type=float, default=SyntheticTraceParams.max_bw)
    p.add_argument("--noise-std", type=float, default=SyntheticTraceParams.noise_std)
    p.add_argument("--state-dur", type=float, default=SyntheticTraceParams.mean_state_duration)
    p.add_argument("--len", type=int, default=SyntheticTraceParams.length)
    p.set_defaults(func=cmd_gen_net)

    p = sub.add_parser("inspect", help="validate a trace file and report its kind")
    p.add_argument("file")
    p.add_argument("--thresholds", type=_thresholds, default=PUBLIC_THRESHOLDS)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("sample-retention", help="rebuild a retention curve from sampled users")
    p.add_argument("--curve", required=True)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--repeats", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration-ms", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV path")
    p.set_defaults(func=cmd_sample_retention)

    p = sub.add_parser("run", help="simulate one session and export its trajectory")
    p.add_argument("--algo", required=True)
    p.add_argument("--algo-config", help="key = value parameter file")
    p.add_argument("--net", required=True)
    p.add_argument("--manifest")
    p.add_argument("--sequence")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--user", type=int, default=0, help="user sample index")
    p.add_argument("--out", required=True, help="trajectory JSONL path")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("score", help="score a trajectory file")
    p.add_argument("--trajectory", required=True)
    d = QoeCoefficients()
    for k in ("alpha", "beta", "gamma", "theta"):
        p.add_argument(f"--{k}", type=float, default=getattr(d, k))
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("evaluate", help="run the evaluation grid and rank algorithms")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, help="default: $SVSIM_WORKERS or 1")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_evaluate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (TraceError, harness.ConfigError, harness.MissingBaseline, harness.EmptyInput,
            EngineError, AlgorithmError, NonTerminating, IncompleteTrajectory,
            OSError, KeyError, ValueError, TypeError) as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e).strip("'\"")}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
