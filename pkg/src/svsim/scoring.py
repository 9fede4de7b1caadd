"""QoE-minus-bandwidth utility per video, computed from a finished trajectory.

U_i = alpha * sum(R_j) - gamma * sum(S_j) - beta * sum(T_k) - theta * sum(bw_k)

R_j is the nominal bitrate (Mbps) of each played chunk, S_j the absolute
bitrate change between consecutive played chunks of the same video, T_k the
stall seconds charged to the step, and bw_k the megabits of every downloaded
chunk, played or not.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .trajectory import ChunkRecord, StepRecord


class IncompleteTrajectory(ValueError):
    pass


@dataclass(frozen=True)
class QoeCoefficients:
    alpha: float = 1.0
    beta: float = 1.85
    gamma: float = 1.0
    theta: float = 0.5

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v < 0:
                raise ValueError(f"coefficient {k} must be >= 0, got {v}")


@dataclass(frozen=True)
class VideoScore:
    quality_sum: float
    smoothness_sum: float
    rebuf_s: float
    bandwidth_mb: float
    utility: float
    played_chunks: int
    downloaded_chunks: int


@dataclass(frozen=True)
class QoeBreakdown:
    per_video: dict[int, VideoScore]
    total: float
    quality: float
    smoothness: float
    rebuf_penalty: float
    bandwidth_cost: float
    waste_mb: float
    coefficients: QoeCoefficients = field(default_factory=QoeCoefficients)

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "quality": self.quality,
            "smoothness": self.smoothness,
            "rebuf_penalty": self.rebuf_penalty,
            "bandwidth_cost": self.bandwidth_cost,
            "waste_megabits": self.waste_mb,
            "coefficients": asdict(self.coefficients),
            "per_video": {str(k): asdict(v) for k, v in sorted(self.per_video.items())},
        }


def _check(records: Sequence[StepRecord]):
    if records and not records[-1].ended:
        raise IncompleteTrajectory("trajectory does not end with a finished session")


def played_extent(records: Sequence[StepRecord]) -> dict[int, int]:
    """Final play cursor (ms) of every video that played at all."""
    cursor: dict[int, int] = {}
    for r in records:
        for vid, _, b in r.played:
            if b > cursor.get(vid, 0):
                cursor[vid] = b
    return cursor


def _downloads(records):
    out = defaultdict(dict)
    for r in records:
        if r.chunk is not None:
            out[r.chunk.video_id][r.chunk.index] = r.chunk
    return out


def score_session(records: Sequence[StepRecord],
                  coefficients: QoeCoefficients = QoeCoefficients()) -> QoeBreakdown:
    _check(records)
    a, b, g, t = coefficients.alpha, coefficients.beta, coefficients.gamma, coefficients.theta
    cursor = played_extent(records)
    downloads = _downloads(records)

    rebuf_ms: dict[int, int] = defaultdict(int)
    for r in records:
        if r.rebuf_ms:
            vid = r.chunk.video_id if r.chunk is not None else r.stall_video_id
            rebuf_ms[vid] += r.rebuf_ms

    per_video = {}
    waste_bits = 0
    for vid in sorted(set(downloads) | set(rebuf_ms)):
        chunks = downloads.get(vid, {})
        end = cursor.get(vid, 0)
        quality = smooth = 0.0
        played = 0
        prev = None
        bits = 0
        for idx in sorted(chunks):
            ch = chunks[idx]
            bits += ch.bits
            if ch.start_ms < end:
                r_j = ch.bitrate_kbps / 1000
                quality += r_j
                if prev is not None:
                    smooth += abs(r_j - prev)
                prev = r_j
                played += 1
            else:
                waste_bits += ch.bits
        rebuf_s = rebuf_ms.get(vid, 0) / 1000
        bw = bits / 1_000_000
        u = a * quality - g * smooth - b * rebuf_s - t * bw
        per_video[vid] = VideoScore(quality, smooth, rebuf_s, bw, u, played, len(chunks))

    vals = per_video.values()
    return QoeBreakdown(
        per_video=per_video,
        total=sum(v.utility for v in vals),
        quality=a * sum(v.quality_sum for v in vals),
        smoothness=g * sum(v.smoothness_sum for v in vals),
        rebuf_penalty=b * sum(v.rebuf_s for v in vals),
        bandwidth_cost=t * sum(v.bandwidth_mb for v in vals),
        waste_mb=waste_bits / 1_000_000,
        coefficients=coefficients,
    )


@dataclass(frozen=True)
class WasteReport:
    waste_mb: float
    downloaded_mb: float
    # chunks of videos that never played at all vs chunks past the swipe point
    unwatched_video: tuple[ChunkRecord, ...]
    tail_after_swipe: tuple[ChunkRecord, ...]

    @property
    def wasted_chunks(self) -> tuple[ChunkRecord, ...]:
        return self.unwatched_video + self.tail_after_swipe

    def to_json(self) -> dict:
        def rows(chunks):
            return [[c.video_id, c.index, c.level, c.bits] for c in chunks]
        return {
            "waste_megabits": self.waste_mb,
            "downloaded_megabits": self.downloaded_mb,
            "unwatched_video": rows(self.unwatched_video),
            "tail_after_swipe": rows(self.tail_after_swipe),
        }


def waste_report(records: Sequence[StepRecord]) -> WasteReport:
    _check(records)
    cursor = played_extent(records)
    unwatched, tail = [], []
    total = 0
    for r in records:
        ch = r.chunk
        if ch is None:
            continue
        total += ch.bits
        end = cursor.get(ch.video_id, 0)
        if ch.start_ms >= end:
            (unwatched if end == 0 else tail).append(ch)
    wasted = sum(c.bits for c in unwatched) + sum(c.bits for c in tail)
    return WasteReport(wasted / 1_000_000, total / 1_000_000, tuple(unwatched), tuple(tail))
