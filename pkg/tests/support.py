"""Shared builders and independent oracles for the test suite."""
from __future__ import annotations

import numpy as np

from svsim.engine import Session
from svsim.scoring import played_extent
from svsim.traces import NetworkTrace, RetentionCurve, VideoAsset
from svsim.trajectory import ChunkRecord, StepRecord

EXAMPLE_CURVE_TEXT = "0 1\n1 0.9298\n2 0.8324\n3 0.7298\n4 0\n"
EXAMPLE_ENTRIES = [(0, 1.0), (1, 0.9298), (2, 0.8324), (3, 0.7298), (4, 0.0)]


def flat_curve(seconds: int) -> RetentionCurve:
    """Everyone watches to the end of a ``seconds``-long video."""
    return RetentionCurve(tuple((s, 1.0) for s in range(seconds + 1)) + ((seconds + 1, 0.0),))


def const_trace(mbps: float, id: str = "const") -> NetworkTrace:
    return NetworkTrace(((0.0, mbps), (1.0, mbps)), id)


def video(name: str, bytes_rows, duration_ms: int = 0, curve: RetentionCurve | None = None) -> VideoAsset:
    rows = tuple(tuple(r) for r in bytes_rows)
    n = len(rows)
    return VideoAsset(name, rows, curve or flat_curve(n), duration_ms=duration_ms)


def uniform_video(name: str, n_chunks: int, bits_per_level=(750_000, 1_200_000, 1_850_000),
                  duration_ms: int = 0) -> VideoAsset:
    row = tuple(b // 8 for b in bits_per_level)
    return video(name, [row] * n_chunks, duration_ms)


# ---- download time oracle: accumulate throughput one millisecond at a time


def per_ms_rates(points) -> np.ndarray:
    """Throughput (bit/s) of every millisecond of one trace period."""
    starts = [round(t * 1000) for t, _ in points]
    rates = [max(1, round(v * 1_000_000)) for _, v in points]
    ends = starts[1:] + [starts[-1] + (starts[-1] - starts[-2])]
    return np.repeat(np.array(rates, dtype=np.int64), np.array(ends) - np.array(starts))


def brute_download_time(points, start_ms: int, size_bits: int) -> int:
    period = per_ms_rates(points)
    need = size_bits * 1000  # bit*ms/s
    length = max(len(period), 4096)
    while True:
        idx = (start_ms + np.arange(length)) % len(period)
        acc = np.cumsum(period[idx])
        if acc[-1] >= need:
            return int(np.argmax(acc >= need)) + 1
        length *= 2


# ---- hand-built trajectories


def chunk(video_id, index, level, bits, start_ms=None, ladder=(750, 1200, 1850)):
    return ChunkRecord(video_id, index, level, bits, ladder[level],
                       index * 1000 if start_ms is None else start_ms)


def record(step, *, delay=1000, rebuf=0, idle=0, chunk=None, played=(), stall=None,
           ended=False, play_video_id=0):
    bits = chunk.bits if chunk is not None else 0
    decision = ({"download": {"slot": 0, "level": chunk.level}} if chunk is not None
                else {"sleep": delay})
    return StepRecord(step, decision, delay, rebuf, idle, bits, play_video_id, False, (),
                      chunk, tuple(played), stall, ended)


# ---- random inputs for engine fuzzing


def random_trace(rng: np.random.Generator, id: str = "rand") -> NetworkTrace:
    n = int(rng.integers(2, 12))
    gaps = rng.integers(1, 3000, n - 1) / 1000
    times = np.concatenate([[0.0], np.cumsum(gaps)])
    rates = np.round(rng.uniform(0.3, 6.0, n), 3)
    return NetworkTrace(tuple(zip(times.tolist(), rates.tolist())), id)


def random_curve(rng: np.random.Generator, seconds: int) -> RetentionCurve:
    drops = np.sort(rng.uniform(0, 1, seconds))[::-1]
    fr = [1.0] + [round(float(x), 4) for x in drops] + [0.0]
    fr = [min(a, b) for a, b in zip(fr, [1.0] + fr)]
    return RetentionCurve(tuple(enumerate(fr)))


def random_sequence(rng: np.random.Generator, max_videos: int = 7, max_chunks: int = 12):
    out = []
    for i in range(int(rng.integers(1, max_videos + 1))):
        n = int(rng.integers(1, max_chunks + 1))
        base = rng.integers(40_000, 260_000, n)
        rows = [(int(b), int(b * 1.6), int(b * 2.5)) for b in base]
        duration = (n - 1) * 1000 + int(rng.integers(1, 1001))
        out.append(VideoAsset(f"v{i}", tuple(rows), random_curve(rng, n), duration_ms=duration))
    return out


def random_watch(rng: np.random.Generator, sequence) -> list[int]:
    out = []
    for v in sequence:
        r = rng.random()
        if r < 0.1:
            out.append(0)
        elif r < 0.3:
            out.append(v.duration_ms)
        else:
            out.append(int(rng.integers(0, v.duration_ms + 1)))
    return out


def conservation_failures(session: Session, records) -> list[str]:
    """Every ledger identity a finished session must satisfy; empty when all hold."""
    bad = []
    if not session.ended:
        bad.append("session not ended")
    if session.clock_ms != sum(r.delay_ms for r in records):
        bad.append("clock != sum(delay)")
    downloaded = [r.chunk for r in records if r.chunk is not None]
    if sum(r.video_size_bits for r in records) != sum(c.bits for c in downloaded):
        bad.append("video_size ledger != chunk bits")
    if sum(c.bits for c in downloaded) != sum(
            session.sequence[c.video_id].bits[c.index][c.level] for c in downloaded):
        bad.append("chunk bits disagree with the size table")
    cursor = played_extent(records)
    played_bits = sum(c.bits for c in downloaded if c.start_ms < cursor.get(c.video_id, 0))
    if sum(c.bits for c in downloaded) - played_bits < 0:
        bad.append("negative waste")
    if sum(r.played_ms for r in records) != sum(session.watch_durations):
        bad.append("played time != sum(watch durations)")
    for r in records:
        if r.delay_ms != r.played_ms + r.rebuf_ms + r.idle_ms:
            bad.append(f"step {r.step}: delay != played + rebuf + idle")
            break
        if not r.delay_ms >= r.rebuf_ms >= 0:
            bad.append(f"step {r.step}: rebuf outside [0, delay]")
            break
    seen = {}
    for c in downloaded:
        if c.index != seen.get(c.video_id, 0):
            bad.append(f"video {c.video_id}: chunk {c.index} out of order")
            break
        seen[c.video_id] = c.index + 1
    return bad
