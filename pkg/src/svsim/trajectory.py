"""Per-step records of a session, and their JSON Lines form."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable


@dataclass(frozen=True, slots=True)
class ChunkRecord:
    video_id: int
    index: int
    level: int
    bits: int
    bitrate_kbps: int
    start_ms: int


@dataclass(frozen=True, slots=True)
class StepRecord:
    step: int
    decision: dict
    delay_ms: int
    rebuf_ms: int
    idle_ms: int  # wall time after the session ended inside this step
    video_size_bits: int
    play_video_id: int
    end_of_video: bool
    buffers_ms: tuple[int, ...]
    chunk: ChunkRecord | None
    played: tuple[tuple[int, int, int], ...]  # (video_id, from_ms, to_ms)
    stall_video_id: int | None
    ended: bool

    @property
    def played_ms(self) -> int:
        return sum(b - a for _, a, b in self.played)

    def to_json(self) -> dict:
        return {
            "step": self.step,
            "decision": self.decision,
            "delay_ms": self.delay_ms,
            "rebuf_ms": self.rebuf_ms,
            "idle_ms": self.idle_ms,
            "video_size_bits": self.video_size_bits,
            "play_video_id": self.play_video_id,
            "end_of_video": self.end_of_video,
            "buffers_ms": list(self.buffers_ms),
            "chunk": None if self.chunk is None else {
                "video_id": self.chunk.video_id, "index": self.chunk.index,
                "level": self.chunk.level, "bits": self.chunk.bits,
                "bitrate_kbps": self.chunk.bitrate_kbps, "start_ms": self.chunk.start_ms},
            "played": [list(p) for p in self.played],
            "stall_video_id": self.stall_video_id,
            "ended": self.ended,
        }

    @classmethod
    def from_json(cls, d: dict) -> "StepRecord":
        c = d.get("chunk")
        return cls(
            step=int(d["step"]),
            decision=d["decision"],
            delay_ms=int(d["delay_ms"]),
            rebuf_ms=int(d["rebuf_ms"]),
            idle_ms=int(d.get("idle_ms", 0)),
            video_size_bits=int(d["video_size_bits"]),
            play_video_id=int(d["play_video_id"]),
            end_of_video=bool(d["end_of_video"]),
            buffers_ms=tuple(int(b) for b in d["buffers_ms"]),
            chunk=None if c is None else ChunkRecord(
                int(c["video_id"]), int(c["index"]), int(c["level"]), int(c["bits"]),
                int(c["bitrate_kbps"]), int(c["start_ms"])),
            played=tuple((int(v), int(a), int(b)) for v, a, b in d.get("played", ())),
            stall_video_id=d.get("stall_video_id"),
            ended=bool(d.get("ended", False)),
        )


def write_jsonl(records: Iterable[StepRecord], path: str | Path):
    with open(path, "w") as f:
        for r in records:
            f.write(json.dumps(r.to_json(), separators=(",", ":")) + "\n")


def read_jsonl(path: str | Path) -> list[StepRecord]:
    with open(path) as f:
        return [StepRecord.from_json(json.loads(line)) for line in f if line.strip()]
