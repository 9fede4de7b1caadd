"""Chunk-level discrete-event simulator for multi-video prefetching.

One :class:`Session` holds a sliding window of up to five players; slot 0 is
the video being watched.  Each step either downloads one whole chunk or
sleeps, and playback is advanced over the step's wall time.  All times are
integer milliseconds.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .traces import NetworkTrace, RetentionCurve, VideoAsset
from .trajectory import ChunkRecord, StepRecord

WINDOW_SIZE = 5
MAX_STEPS = 1_000_000


class EngineError(ValueError):
    pass


class SlotOutOfWindow(EngineError):
    pass


class VideoFullyDownloaded(EngineError):
    pass


class InvalidLevel(EngineError):
    pass


class SessionEnded(EngineError):
    pass


class ZeroSleep(EngineError):
    pass


class EmptySequence(EngineError):
    pass


class DurationMismatch(EngineError):
    pass


class AlgorithmError(RuntimeError):
    pass


class NonTerminating(RuntimeError):
    pass


@dataclass(frozen=True, slots=True)
class Download:
    slot: int
    level: int

    def to_json(self) -> dict:
        return {"download": {"slot": self.slot, "level": self.level}}


@dataclass(frozen=True, slots=True)
class Sleep:
    duration: int  # ms

    def to_json(self) -> dict:
        return {"sleep": self.duration}


Decision = Download | Sleep


class PlayerView(NamedTuple):
    """What an algorithm may see of one window slot.  No watch duration."""
    video_id: int
    name: str
    chunk_count: int
    chunk_ms: int
    duration_ms: int
    downloaded_chunks: int
    buffer_ms: int
    play_cursor_ms: int
    last_level: int  # -1 before the first chunk
    next_chunk_bits: tuple[int, ...] | None
    chunk_bits: tuple[tuple[int, ...], ...]
    retention: RetentionCurve


class Observation(NamedTuple):
    delay: int
    rebuf: int
    video_size: int  # bits
    end_of_video: bool
    play_video_id: int
    players: tuple[PlayerView, ...]
    first_step: bool


@dataclass(frozen=True)
class SessionConfig:
    window_size: int = WINDOW_SIZE
    max_steps: int = MAX_STEPS


class PlayerState:
    __slots__ = ("video_id", "video", "downloaded", "levels", "buffer_ms",
                 "cursor_ms", "watch_ms", "active")

    def __init__(self, video_id: int, video: VideoAsset, watch_ms: int):
        self.video_id = video_id
        self.video = video
        self.downloaded = 0
        self.levels: list[int] = []
        self.buffer_ms = 0
        self.cursor_ms = 0
        self.watch_ms = watch_ms
        self.active = True

    def view(self) -> PlayerView:
        v = self.video
        d = self.downloaded
        return PlayerView(
            self.video_id, v.name, len(v.sizes), v.chunk_ms, v.duration_ms, d, self.buffer_ms,
            self.cursor_ms, self.levels[-1] if self.levels else -1,
            v.bits[d] if d < len(v.bits) else None, v.bits, v.retention)


class Session:
    def __init__(self, sequence: Sequence[VideoAsset], network: NetworkTrace,
                 watch_durations: Sequence[int], config: SessionConfig = SessionConfig()):
        if not sequence:
            raise EmptySequence("a session needs at least one video")
        if len(watch_durations) != len(sequence):
            raise DurationMismatch(
                f"{len(watch_durations)} watch durations for {len(sequence)} videos")
        for i, (v, w) in enumerate(zip(sequence, watch_durations)):
            if not 0 <= w <= v.duration_ms:
                raise DurationMismatch(
                    f"video {i} ({v.name}): watch duration {w} ms outside [0, {v.duration_ms}]")
        self.sequence = tuple(sequence)
        self.network = network
        self.watch_durations = tuple(int(w) for w in watch_durations)
        self.config = config
        self.clock_ms = 0
        self.ended = False
        self.records: list[StepRecord] = []
        self.players: list[PlayerState] = []  # every player ever created, by video id
        self.window: list[PlayerState] = []
        n = min(config.window_size, len(self.sequence))
        for _ in range(n):
            self._admit()
        self._swipe_finished()

    # -- window management

    def _admit(self):
        vid = len(self.players)
        p = PlayerState(vid, self.sequence[vid], self.watch_durations[vid])
        self.players.append(p)
        self.window.append(p)

    def _swipe(self):
        p = self.window.pop(0)
        p.active = False
        if len(self.players) < len(self.sequence):
            self._admit()
        if not self.window:
            self.ended = True

    def _swipe_finished(self):
        while self.window and self.window[0].cursor_ms >= self.window[0].watch_ms:
            self._swipe()

    @property
    def play_video_id(self) -> int:
        return self.window[0].video_id if self.window else len(self.sequence) - 1

    # -- observation

    def observe(self, delay=0, rebuf=0, video_size=0, end_of_video=False,
                first_step=False) -> Observation:
        return Observation(delay, rebuf, video_size, end_of_video, self.play_video_id,
                           tuple(p.view() for p in self.window), first_step)

    def initial_observation(self) -> Observation:
        return self.observe(first_step=True)

    # -- stepping

    def _play(self, wall: int):
        """Advance playback over ``wall`` ms. Returns (rebuf, idle, played, stall_vid)."""
        remaining = wall
        rebuf = 0
        played = []
        stall_vid = None
        window = self.window
        while remaining > 0:
            if not window:
                return rebuf, remaining, played, stall_vid
            p = window[0]
            avail = p.watch_ms - p.cursor_ms
            if p.buffer_ms < avail:
                avail = p.buffer_ms
            if avail == 0:
                # buffers are only credited at step end, so the stall lasts all step
                rebuf += remaining
                stall_vid = p.video_id
                break
            adv = avail if avail < remaining else remaining
            played.append((p.video_id, p.cursor_ms, p.cursor_ms + adv))
            p.cursor_ms += adv
            p.buffer_ms -= adv
            remaining -= adv
            if p.cursor_ms == p.watch_ms:
                self._swipe_finished()
        return rebuf, 0, played, stall_vid

    def step(self, decision: Decision) -> Observation:
        if self.ended:
            raise SessionEnded("session already ended")
        target = None
        if type(decision) is Download:
            slot, level = decision.slot, decision.level
            if not 0 <= slot < len(self.window):
                raise SlotOutOfWindow(f"slot {slot} outside window of {len(self.window)}")
            target = self.window[slot]
            video = target.video
            if not 0 <= level < len(video.ladder_kbps):
                raise InvalidLevel(f"level {level} outside ladder of {len(video.ladder_kbps)}")
            c = target.downloaded
            if c >= len(video.sizes):
                raise VideoFullyDownloaded(f"video {target.video_id} ({video.name}) fully downloaded")
            bits = video.bits[c][level]
            delay = self.network.download_time(self.clock_ms, bits)
        elif type(decision) is Sleep:
            delay = decision.duration
            if not isinstance(delay, int) or delay <= 0:
                raise ZeroSleep(f"sleep must be a positive integer ms, got {delay!r}")
            bits = 0
        else:
            raise TypeError(f"not a decision: {decision!r}")

        rebuf, idle, played, stall_vid = self._play(delay)

        chunk = None
        end_of_video = False
        if target is not None:
            dur = video.chunk_duration(c)
            target.downloaded = c + 1
            target.levels.append(level)
            if target.active:
                target.buffer_ms += dur
            end_of_video = c + 1 == len(video.sizes)
            chunk = ChunkRecord(target.video_id, c, level, bits, video.ladder_kbps[level],
                                c * video.chunk_ms)

        self.clock_ms += delay
        self.records.append(StepRecord(
            len(self.records), decision.to_json(), delay, rebuf, idle, bits,
            self.play_video_id, end_of_video, tuple(p.buffer_ms for p in self.window),
            chunk, _merge(played), stall_vid, self.ended))
        return self.observe(delay, rebuf, bits, end_of_video)


def _merge(played):
    out = []
    for vid, a, b in played:
        if out and out[-1][0] == vid and out[-1][2] == a:
            out[-1] = (vid, out[-1][1], b)
        else:
            out.append((vid, a, b))
    return tuple(out)


def new_session(sequence: Sequence[VideoAsset], network: NetworkTrace,
                watch_durations: Sequence[int], config: SessionConfig = SessionConfig()) -> Session:
    return Session(sequence, network, watch_durations, config)


@dataclass(frozen=True)
class SessionResult:
    breakdown: object  # scoring.QoeBreakdown
    trajectory: list[StepRecord]
    waste: object  # scoring.WasteReport

    @property
    def score(self) -> float:
        return self.breakdown.total


def drive(session: Session, algorithm) -> list[StepRecord]:
    """Run the observe -> decide -> step loop until the session ends."""
    if session.records:
        raise ValueError("run_session needs a fresh session")
    algorithm.initialize(session.config.window_size, session.sequence[0].ladder_kbps)
    attach = getattr(algorithm, "attach", None)
    if attach is not None:
        attach(session)
    obs = session.initial_observation()
    limit = session.config.max_steps
    step = session.step
    decide = algorithm.decide
    while not session.ended:
        if len(session.records) >= limit:
            raise NonTerminating(f"session did not end within {limit} steps")
        try:
            decision = decide(obs)
        except Exception as e:
            raise AlgorithmError(f"{_name(algorithm)}.decide raised {e!r}") from e
        try:
            obs = step(decision)
        except (EngineError, TypeError) as e:
            raise AlgorithmError(f"{_name(algorithm)} returned invalid decision {decision!r}: {e}") from e
    return session.records


def run_session(session: Session, algorithm, coefficients=None) -> SessionResult:
    from .scoring import QoeCoefficients, score_session, waste_report

    records = drive(session, algorithm)
    coeffs = coefficients or QoeCoefficients()
    return SessionResult(score_session(records, coeffs), records, waste_report(records))


def _name(algorithm) -> str:
    return getattr(algorithm, "name", type(algorithm).__name__)
