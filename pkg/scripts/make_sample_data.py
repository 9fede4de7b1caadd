"""Regenerate the bundled sample videos under src/svsim/data.

Seven videos with the lengths of the public sample set.  Chunk sizes are
synthetic: one lognormal complexity factor per chunk, shared by all levels,
rescaled so every level's mean chunk size equals its nominal bitrate.
Retention curves are a fast early-swipe exponential mixed with a slower decay.
"""
import argparse
import json
from pathlib import Path

import numpy as np

from svsim.traces import LADDER_KBPS, RetentionCurve, format_retention_trace

VIDEOS = [  # name, length (s), type
    ("tj", 17, "Education"),
    ("EDG", 26, "Entertainment"),
    ("gy", 37, "Campus Life"),
    ("dx", 40, "Campus Life"),
    ("ss", 47, "Campus Life"),
    ("jt", 6, "Entertainment"),
    ("yd", 125, "Game"),
]
EXAMPLE_RETENTION = "0 1\n1 0.9298\n2 0.8324\n3 0.7298\n4 0\n"


def chunk_sizes(length, rng):
    factor = rng.lognormal(0.0, 0.3, length)
    factor /= factor.mean()
    cols = []
    for kbps in LADDER_KBPS:
        nominal = kbps * 1000 // 8  # bytes per 1 s chunk
        sizes = np.maximum(1, np.round(factor * nominal).astype(np.int64))
        sizes[np.argmax(sizes)] += nominal * length - sizes.sum()
        cols.append(sizes)
    return cols


def retention(length, rng):
    w = rng.uniform(0.25, 0.45)
    fast = rng.uniform(1.0, 2.5)
    slow = length * rng.uniform(0.6, 1.5)
    s = np.arange(length + 1)
    f = np.round(w * np.exp(-s / fast) + (1 - w) * np.exp(-s / slow), 4)
    f = np.minimum.accumulate(f)
    f[0] = 1.0
    entries = [(int(i), float(x)) for i, x in enumerate(f)] + [(length + 1, 0.0)]
    return RetentionCurve(tuple(entries))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src/svsim/data"))
    ap.add_argument("--seed", type=int, default=2022)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    videos = []
    for name, length, kind in VIDEOS:
        files = []
        for kbps, col in zip(LADDER_KBPS, chunk_sizes(length, rng)):
            fname = f"{name}_{kbps}.txt"
            (out / fname).write_text("".join(f"{x}\n" for x in col))
            files.append(fname)
        rname = f"{name}_retention.txt"
        (out / rname).write_text(format_retention_trace(retention(length, rng)))
        videos.append({"name": name, "type": kind, "duration_ms": length * 1000,
                       "sizes": files, "retention": rname})
    (out / "example_retention.txt").write_text(EXAMPLE_RETENTION)
    manifest = {
        "ladder_kbps": list(LADDER_KBPS),
        "chunk_ms": 1000,
        "videos": videos,
        "sequences": {"table3": [v[0] for v in VIDEOS]},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {len(videos)} videos to {out}")


if __name__ == "__main__":
    main()
