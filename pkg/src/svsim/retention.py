"""Watch-duration sampling from retention curves, and the reverse direction."""
from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .traces import RetentionCurve


class EmptySampleSet(ValueError):
    pass


def duration_from_uniform(curve: RetentionCurve, video_duration_ms: int, u: float) -> int:
    """Map u in [0, 1) to a watch duration in ms.

    The departure second is the last s with u < fraction(s), so that
    P(duration >= s seconds) == fraction(s).  Within that second the CCDF is
    interpolated linearly, and the result is clamped to the video length, so a
    curve that runs as long as its video sends its last-second users to the end.
    """
    fr = curve.fractions
    # fractions are non-increasing, so those > u form a prefix; the end mark
    # (fraction 0) keeps s below the last index
    s = bisect_left([-f for f in fr], -u) - 1
    x = (fr[s] - u) / (fr[s] - fr[s + 1])
    ms = s * 1000 + min(int(x * 1000), 999)
    return min(ms, video_duration_ms)


def sample_watch_duration(curve: RetentionCurve, video_duration_ms: int,
                          rng: np.random.Generator) -> int:
    if video_duration_ms <= 0:
        raise ValueError(f"video duration must be positive, got {video_duration_ms}")
    return duration_from_uniform(curve, video_duration_ms, float(rng.random()))


def sample_watch_durations(curve: RetentionCurve, video_duration_ms: int, n: int,
                           rng: np.random.Generator) -> np.ndarray:
    """Vectorised form of :func:`sample_watch_duration`; same stream, same values."""
    fr = np.asarray(curve.fractions)
    u = rng.random(n)
    s = np.searchsorted(-fr, -u, side="left") - 1
    x = (fr[s] - u) / (fr[s] - fr[s + 1])
    ms = s * 1000 + np.minimum((x * 1000).astype(np.int64), 999)
    return np.minimum(ms, video_duration_ms).astype(np.int64)


def survival_counts(samples: np.ndarray, seconds: int) -> np.ndarray:
    # counts[s] = #samples >= s*1000 for s in 0..seconds
    srt = np.sort(samples)
    edges = np.arange(seconds + 1) * 1000
    return len(srt) - np.searchsorted(srt, edges, side="left")


def empirical_retention(samples: Sequence[int], video_duration_ms: int) -> RetentionCurve:
    """Per-second fraction of samples with duration >= s seconds, plus end mark."""
    arr = np.asarray(samples, dtype=np.int64)
    if arr.size == 0:
        raise EmptySampleSet("need at least one sample")
    if arr.min() < 0 or arr.max() > video_duration_ms:
        raise ValueError("samples must lie in [0, video duration]")
    last = -(-video_duration_ms // 1000)
    fracs = survival_counts(arr, last) / arr.size
    entries = []
    for s, f in enumerate(fracs):
        entries.append((s, float(f)))
        if f == 0.0:
            break
    else:
        entries.append((last + 1, 0.0))
    return RetentionCurve(tuple(entries))


def max_deviation(empirical: RetentionCurve, true: RetentionCurve) -> float:
    n = max(len(empirical.entries), len(true.entries))
    return max(abs(empirical.fraction(s) - true.fraction(s)) for s in range(n))


@dataclass(frozen=True)
class DeviationStats:
    n_samples: int
    median: float
    p90: float
    per_repeat: tuple[float, ...]


def sampling_deviation(curve: RetentionCurve, n_samples: int, repeats: int,
                       rng: np.random.Generator, video_duration_ms: int | None = None) -> DeviationStats:
    """Max |empirical - true| per repeat when rebuilding ``curve`` from n samples."""
    if n_samples < 1 or repeats < 1:
        raise ValueError("n_samples and repeats must be >= 1")
    duration = video_duration_ms or curve.last_second * 1000 or 1
    true = np.asarray(curve.fractions)
    devs = []
    for _ in range(repeats):
        samples = sample_watch_durations(curve, duration, n_samples, rng)
        emp = survival_counts(samples, len(true) - 1) / n_samples
        devs.append(float(np.max(np.abs(emp - true))))
    arr = np.asarray(devs)
    return DeviationStats(n_samples, float(np.median(arr)), float(np.percentile(arr, 90)), tuple(devs))
