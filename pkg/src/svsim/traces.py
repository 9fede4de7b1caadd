"""Network, video and retention traces.

Network traces are held internally at integer resolution (timestamps in ms,
throughput in bit/s) so that download-time queries are exact integer
arithmetic.  The final sample holds for one more sampling interval before the
trace loops.
"""
from __future__ import annotations

import json
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

LADDER_KBPS = (750, 1200, 1850)
CHUNK_MS = 1000

PUBLIC_THRESHOLDS = (1.5, 3.0)
EVALUATION_THRESHOLDS = (1.9, 3.0)


class TraceError(ValueError):
    """Base class for every trace parsing/validation failure."""


class MalformedLine(TraceError):
    def __init__(self, lineno: int, line: str, reason: str = "malformed line"):
        self.lineno = lineno
        self.line = line
        super().__init__(f"line {lineno}: {reason}: {line!r}")


class NonMonotonicTimestamp(TraceError):
    pass


class NonPositiveThroughput(TraceError):
    pass


class EmptyTrace(TraceError):
    pass


class UnequalChunkCounts(TraceError):
    pass


class NonPositiveSize(TraceError):
    pass


class MissingEndMark(TraceError):
    pass


class IncreasingFraction(TraceError):
    pass


class NonConsecutiveSeconds(TraceError):
    pass


class BadFirstEntry(TraceError):
    pass


class InvalidParams(TraceError):
    pass


def _text(data: str | bytes) -> str:
    if isinstance(data, bytes):
        return data.decode("utf-8")
    return data


def _records(text: str):
    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if fields:
            yield lineno, line, fields


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


# ---------------------------------------------------------------- network


@dataclass(frozen=True)
class NetworkTrace:
    points: tuple[tuple[float, float], ...]
    id: str = ""
    starts_ms: tuple[int, ...] = field(init=False, repr=False, compare=False)
    rates_bps: tuple[int, ...] = field(init=False, repr=False, compare=False)
    # cum_work[i] = sum(rate * duration) over segments before i, in bit*ms/s
    cum_work: tuple[int, ...] = field(init=False, repr=False, compare=False)
    period_ms: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        points = tuple((float(t), float(v)) for t, v in self.points)
        if len(points) < 2:
            raise EmptyTrace(f"trace {self.id!r} needs at least 2 points, got {len(points)}")
        if points[0][0] != 0.0:
            raise NonMonotonicTimestamp(f"trace {self.id!r} must start at t=0, got {points[0][0]}")
        starts, rates = [], []
        for i, (t, v) in enumerate(points):
            if not math.isfinite(v) or v <= 0:
                raise NonPositiveThroughput(f"point {i}: throughput {v} must be finite and > 0")
            if not math.isfinite(t):
                raise NonMonotonicTimestamp(f"point {i}: timestamp {t} is not finite")
            ms = round(t * 1000)
            if starts and ms <= starts[-1]:
                raise NonMonotonicTimestamp(
                    f"point {i}: timestamp {t}s not strictly after previous at ms resolution")
            starts.append(ms)
            rates.append(max(1, round(v * 1_000_000)))
        period = starts[-1] + (starts[-1] - starts[-2])
        cum = [0]
        for i, rate in enumerate(rates):
            end = starts[i + 1] if i + 1 < len(starts) else period
            cum.append(cum[-1] + rate * (end - starts[i]))
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "starts_ms", tuple(starts))
        object.__setattr__(self, "rates_bps", tuple(rates))
        object.__setattr__(self, "cum_work", tuple(cum))
        object.__setattr__(self, "period_ms", period)

    def rate_at(self, t_ms: int) -> int:
        """Throughput in bit/s at absolute time ``t_ms`` (looping)."""
        p = t_ms % self.period_ms
        return self.rates_bps[bisect_right(self.starts_ms, p) - 1]

    def work_until(self, t_ms: int) -> int:
        """Integral of throughput over [0, t_ms) in bit*ms/s."""
        n, p = divmod(t_ms, self.period_ms)
        i = bisect_right(self.starts_ms, p) - 1
        return n * self.cum_work[-1] + self.cum_work[i] + self.rates_bps[i] * (p - self.starts_ms[i])

    def download_time(self, start_ms: int, size_bits: int) -> int:
        return download_time(self, start_ms, size_bits)

    def with_id(self, new_id: str) -> "NetworkTrace":
        return NetworkTrace(self.points, new_id)


def download_time(trace: NetworkTrace, start_ms: int, size_bits: int) -> int:
    """Smallest whole number of ms after ``start_ms`` that delivers ``size_bits``."""
    if size_bits <= 0:
        raise ValueError(f"size must be positive, got {size_bits}")
    if start_ms < 0:
        raise ValueError(f"start must be non-negative, got {start_ms}")
    period = trace.period_ms
    cum = trace.cum_work
    starts = trace.starts_ms
    rates = trace.rates_bps
    offset = start_ms % period
    i = bisect_right(starts, offset) - 1
    target = cum[i] + rates[i] * (offset - starts[i]) + size_bits * 1000
    n, rem = divmod(target, cum[-1])
    if rem == 0:
        end = n * period
    else:
        j = bisect_left(cum, rem) - 1
        end = n * period + starts[j] + -(-(rem - cum[j]) // rates[j])
    return end - offset


def parse_network_trace(data: str | bytes, id: str = "") -> NetworkTrace:
    points = []
    for lineno, line, fields in _records(_text(data)):
        if len(fields) != 2:
            raise MalformedLine(lineno, line, "expected '<seconds> <Mbps>'")
        try:
            t, v = float(fields[0]), float(fields[1])
        except ValueError:
            raise MalformedLine(lineno, line, "not a number") from None
        if not math.isfinite(t) or not math.isfinite(v):
            raise MalformedLine(lineno, line, "non-finite value")
        if v <= 0:
            raise NonPositiveThroughput(f"line {lineno}: throughput {v} must be > 0")
        if points and t <= points[-1][0]:
            raise NonMonotonicTimestamp(f"line {lineno}: timestamp {t} not after {points[-1][0]}")
        points.append((t, v))
    if not points:
        raise EmptyTrace(f"trace {id!r} has no records")
    t0 = points[0][0]
    return NetworkTrace(tuple((t - t0, v) for t, v in points), id)


def format_network_trace(trace: NetworkTrace) -> str:
    return "".join(f"{t!r} {v!r}\n" for t, v in trace.points)


def load_network_trace(path: str | Path) -> NetworkTrace:
    path = Path(path)
    return parse_network_trace(path.read_bytes(), path.stem)


def load_network_traces(paths: Iterable[str | Path]) -> list[NetworkTrace]:
    """Load trace files; directories contribute every regular file, sorted."""
    out = []
    for p in paths:
        p = Path(p)
        files = sorted(f for f in p.iterdir() if f.is_file()) if p.is_dir() else [p]
        out.extend(load_network_trace(f) for f in files)
    return out


class TraceCategory(str, Enum):
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"


def mean_throughput(trace: NetworkTrace, horizon_ms: int | None = None) -> float:
    """Time-weighted mean throughput in Mbps over [0, horizon) (default: one period)."""
    horizon = trace.period_ms if horizon_ms is None else horizon_ms
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    return trace.work_until(horizon) / horizon / 1_000_000


def classify(trace: NetworkTrace, thresholds: tuple[float, float],
             horizon_ms: int | None = None) -> TraceCategory:
    low_cut, high_cut = thresholds
    if not low_cut < high_cut:
        raise ValueError(f"thresholds must satisfy low < high, got {thresholds}")
    mean = mean_throughput(trace, horizon_ms)
    if mean < low_cut:
        return TraceCategory.LOW
    if mean >= high_cut:
        return TraceCategory.HIGH
    return TraceCategory.MEDIUM


@dataclass(frozen=True)
class SyntheticTraceParams:
    min_bw: float = 0.2
    max_bw: float = 4.3
    mean_state_duration: float = 5.0
    noise_std: float = 0.3
    length: int = 300
    seed: int = 0

    def validate(self):
        if not 0 < self.min_bw <= self.max_bw:
            raise InvalidParams(f"need 0 < min_bw <= max_bw, got {self.min_bw}, {self.max_bw}")
        if self.length < 10:
            raise InvalidParams(f"length must be >= 10 s, got {self.length}")
        if self.noise_std < 0:
            raise InvalidParams(f"noise_std must be >= 0, got {self.noise_std}")
        if self.mean_state_duration < 1:
            raise InvalidParams(f"mean_state_duration must be >= 1 s, got {self.mean_state_duration}")


def generate_synthetic_trace(params: SyntheticTraceParams, id: str = "") -> NetworkTrace:
    """Markov-modulated trace: piecewise-constant hidden mean plus clipped Gaussian noise."""
    params.validate()
    rng = np.random.default_rng(params.seed)
    values = np.empty(params.length)
    t = 0
    while t < params.length:
        mean = rng.uniform(params.min_bw, params.max_bw)
        dur = int(rng.geometric(1.0 / params.mean_state_duration))
        n = min(dur, params.length - t)
        values[t:t + n] = mean + rng.normal(0.0, params.noise_std, n) if params.noise_std else mean
        t += n
    values = np.clip(np.round(values, 6), params.min_bw, params.max_bw)
    return NetworkTrace(tuple((float(i), float(v)) for i, v in enumerate(values)),
                        id or f"synthetic_{params.seed}")


# ---------------------------------------------------------------- retention


@dataclass(frozen=True)
class RetentionCurve:
    entries: tuple[tuple[int, float], ...]
    fractions: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        entries = tuple((int(s), float(f)) for s, f in self.entries)
        validate_retention(entries)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "fractions", tuple(f for _, f in entries))

    @property
    def last_second(self) -> int:
        """Last second before the end mark (users still present here watched it all)."""
        return self.entries[-2][0] if len(self.entries) > 1 else 0

    def fraction(self, second: int) -> float:
        if second < 0:
            return 1.0
        fr = self.fractions
        return fr[second] if second < len(fr) else 0.0

    def survival(self, t_ms: float) -> float:
        """P(watch >= t_ms), linearly interpolated between whole seconds."""
        if t_ms <= 0:
            return 1.0
        fr = self.fractions
        s = int(t_ms // 1000)
        if s >= len(fr):
            return 0.0
        a = fr[s]
        frac = t_ms / 1000 - s
        if not frac:
            return a
        b = fr[s + 1] if s + 1 < len(fr) else 0.0
        return a + (b - a) * frac


def validate_retention(entries: Sequence[tuple[int, float]]):
    if not entries or entries[0] != (0, 1.0):
        raise BadFirstEntry(f"first entry must be (0, 1), got {entries[0] if entries else None}")
    for i, (s, f) in enumerate(entries):
        if s != i:
            raise NonConsecutiveSeconds(f"entry {i} has second {s}, expected {i}")
        if not 0.0 <= f <= 1.0:
            raise IncreasingFraction(f"second {s}: fraction {f} outside [0, 1]")
        if i and f > entries[i - 1][1]:
            raise IncreasingFraction(f"second {s}: fraction {f} exceeds previous {entries[i - 1][1]}")
    if len(entries) < 2 or entries[-1][1] != 0.0:
        raise MissingEndMark("curve must end with a zero-fraction end mark")


def parse_retention_trace(data: str | bytes) -> RetentionCurve:
    entries = []
    for lineno, line, fields in _records(_text(data)):
        if len(fields) != 2:
            raise MalformedLine(lineno, line, "expected '<second> <fraction>'")
        try:
            s, f = float(fields[0]), float(fields[1])
        except ValueError:
            raise MalformedLine(lineno, line, "not a number") from None
        if not s.is_integer():
            raise NonConsecutiveSeconds(f"line {lineno}: second {s} is not an integer")
        entries.append((int(s), f))
    if not entries:
        raise MissingEndMark("empty retention trace")
    return RetentionCurve(tuple(entries))


def format_retention_trace(curve: RetentionCurve) -> str:
    return "".join(f"{s} {_num(f)}\n" for s, f in curve.entries)


# ---------------------------------------------------------------- video


@dataclass(frozen=True)
class VideoAsset:
    name: str
    sizes: tuple[tuple[int, ...], ...]  # bytes, [chunk][level]
    retention: RetentionCurve
    ladder_kbps: tuple[int, ...] = LADDER_KBPS
    chunk_ms: int = CHUNK_MS
    duration_ms: int = 0  # 0 -> chunk_count * chunk_ms
    bits: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        sizes = tuple(tuple(int(x) for x in row) for row in self.sizes)
        if not sizes:
            raise EmptyTrace(f"video {self.name!r} has no chunks")
        for c, row in enumerate(sizes):
            if len(row) != len(self.ladder_kbps):
                raise UnequalChunkCounts(f"chunk {c} has {len(row)} levels, expected {len(self.ladder_kbps)}")
            if min(row) <= 0:
                raise NonPositiveSize(f"video {self.name!r} chunk {c}: sizes must be > 0")
        n = len(sizes)
        duration = self.duration_ms or n * self.chunk_ms
        if not (n - 1) * self.chunk_ms < duration <= n * self.chunk_ms:
            raise ValueError(f"duration {duration} ms inconsistent with {n} chunks of {self.chunk_ms} ms")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "ladder_kbps", tuple(self.ladder_kbps))
        object.__setattr__(self, "duration_ms", duration)
        object.__setattr__(self, "bits", tuple(tuple(8 * x for x in row) for row in sizes))

    @property
    def chunk_count(self) -> int:
        return len(self.sizes)

    def chunk_duration(self, c: int) -> int:
        if c == len(self.sizes) - 1:
            return self.duration_ms - c * self.chunk_ms
        return self.chunk_ms


def parse_video_trace(files: Sequence[str | bytes], name: str, retention: RetentionCurve,
                      ladder_kbps: Sequence[int] = LADDER_KBPS, chunk_ms: int = CHUNK_MS,
                      duration_ms: int = 0) -> VideoAsset:
    if len(files) != len(ladder_kbps):
        raise UnequalChunkCounts(f"expected {len(ladder_kbps)} size streams, got {len(files)}")
    columns = []
    for q, data in enumerate(files):
        col = []
        for lineno, line, fields in _records(_text(data)):
            if len(fields) != 1:
                raise MalformedLine(lineno, line, f"level {q}: expected one integer")
            try:
                size = int(fields[0])
            except ValueError:
                raise MalformedLine(lineno, line, f"level {q}: not an integer") from None
            if size <= 0:
                raise NonPositiveSize(f"level {q} line {lineno}: size {size} must be > 0")
            col.append(size)
        columns.append(col)
    counts = [len(c) for c in columns]
    if len(set(counts)) != 1:
        raise UnequalChunkCounts(f"video {name!r}: per-level chunk counts differ: {counts}")
    return VideoAsset(name, tuple(zip(*columns)), retention, tuple(ladder_kbps), chunk_ms, duration_ms)


def format_video_trace(video: VideoAsset) -> list[str]:
    return ["".join(f"{row[q]}\n" for row in video.sizes) for q in range(len(video.ladder_kbps))]


# ---------------------------------------------------------------- manifest


@dataclass(frozen=True)
class Manifest:
    videos: dict[str, VideoAsset]
    sequences: dict[str, tuple[str, ...]]
    path: str = ""

    def sequence(self, seq_id: str) -> tuple[VideoAsset, ...]:
        try:
            names = self.sequences[seq_id]
        except KeyError:
            raise KeyError(f"unknown sequence {seq_id!r}; have {sorted(self.sequences)}") from None
        return tuple(self.videos[n] for n in names)


def load_manifest(path: str | Path) -> Manifest:
    """Read a JSON manifest binding video names to size files and retention files.

    Layout::

        {"ladder_kbps": [750, 1200, 1850], "chunk_ms": 1000,
         "videos": [{"name": "tj", "duration_ms": 17000,
                     "sizes": ["tj_750.txt", "tj_1200.txt", "tj_1850.txt"],
                     "retention": "tj_retention.txt"}],
         "sequences": {"table3": ["tj", ...]}}

    Paths are relative to the manifest.  Without "sequences", one sequence
    named "all" lists the videos in file order.
    """
    path = Path(path)
    base = path.parent
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise TraceError(f"{path}: invalid JSON: {e}") from None
    ladder = tuple(doc.get("ladder_kbps", LADDER_KBPS))
    chunk_ms = int(doc.get("chunk_ms", CHUNK_MS))
    videos = {}
    for entry in doc["videos"]:
        name = entry["name"]
        retention = parse_retention_trace((base / entry["retention"]).read_bytes())
        streams = [(base / f).read_bytes() for f in entry["sizes"]]
        videos[name] = parse_video_trace(streams, name, retention, ladder, chunk_ms,
                                         int(entry.get("duration_ms", 0)))
    sequences = {k: tuple(v) for k, v in doc.get("sequences", {"all": list(videos)}).items()}
    for seq_id, names in sequences.items():
        missing = [n for n in names if n not in videos]
        if missing:
            raise TraceError(f"sequence {seq_id!r} references unknown videos {missing}")
    return Manifest(videos, sequences, str(path))


def bundled_manifest_path() -> Path:
    return Path(str(resources.files("svsim") / "data" / "manifest.json"))


def bundled_manifest() -> Manifest:
    return load_manifest(bundled_manifest_path())


def example_retention() -> RetentionCurve:
    """The five-entry retention example shipped with the sample data."""
    return parse_retention_trace((resources.files("svsim") / "data" / "example_retention.txt").read_bytes())


def category_params(category: TraceCategory, thresholds: tuple[float, float]) -> tuple[float, float]:
    """Bandwidth range whose synthetic traces usually land in ``category``."""
    low, high = thresholds
    if category is TraceCategory.LOW:
        return 0.2, low * 1.3
    if category is TraceCategory.MEDIUM:
        return low * 0.8, high * 1.1
    return high * 0.9, high * 2.0


def generate_category_traces(category: TraceCategory | str, count: int, seed: int,
                             thresholds: tuple[float, float], length: int = 300,
                             max_tries: int = 1000) -> list[NetworkTrace]:
    """``count`` synthetic traces that classify as ``category`` (rejection sampling)."""
    category = TraceCategory(category)
    lo, hi = category_params(category, thresholds)
    out = []
    start = seed + 7919 * list(TraceCategory).index(category)
    s = start
    while len(out) < count:
        if s - start >= max_tries:
            raise InvalidParams(f"could not draw {count} {category.value} traces in {max_tries} tries")
        params = SyntheticTraceParams(lo, hi, 5.0, 0.3, length, s)
        trace = generate_synthetic_trace(params, f"{category.value.lower()}_{len(out)}")
        if classify(trace, thresholds) is category:
            out.append(trace)
        s += 1
    return out
