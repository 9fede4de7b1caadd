"""Decision algorithms: the interface, throughput estimators and baselines.

An algorithm is any object with ``initialize(window_size, ladder_kbps)`` and
``decide(observation) -> Download | Sleep``.  Register new ones with
:func:`register`, through the ``svsim.algorithms`` entry-point group, or name
them as ``package.module:ClassName`` wherever an algorithm name is accepted.
"""
from __future__ import annotations

import dataclasses
import importlib
from collections import deque
from dataclasses import dataclass, field
from importlib.metadata import entry_points
from typing import Callable, ClassVar, Sequence

import numpy as np

from .engine import Download, Observation, Sleep

SLEEP_MS = 500


class NoSamples(ValueError):
    pass


def _rates(history: Sequence[tuple[int, int]], window: int) -> list[float]:
    if not history:
        raise NoSamples("no throughput samples yet")
    out = []
    for bits, delay in history[-window:]:
        if delay <= 0:
            raise ValueError(f"delay must be positive, got {delay}")
        out.append(bits / delay / 1000)
    return out


def harmonic_estimate(history: Sequence[tuple[int, int]], window: int = 5) -> float:
    """Harmonic mean of the last ``window`` per-chunk rates, in Mbps.

    ``history`` holds (size in bits, download time in ms) pairs.
    """
    rates = _rates(history, window)
    return len(rates) / sum(1 / r for r in rates)


def moving_average_estimate(history: Sequence[tuple[int, int]], window: int = 5) -> float:
    rates = _rates(history, window)
    return sum(rates) / len(rates)


ESTIMATORS: dict[str, Callable] = {
    "harmonic": harmonic_estimate,
    "moving_average": moving_average_estimate,
}


def rate_match(estimate_mbps: float | None, ladder_kbps: Sequence[int], safety: float = 1.0) -> int:
    """Highest level whose bitrate fits under ``safety * estimate``; level 0 otherwise."""
    if estimate_mbps is None:
        return 0
    budget = estimate_mbps * safety * 1000
    level = 0
    for q, kbps in enumerate(ladder_kbps):
        if kbps <= budget:
            level = q
    return level


class Algorithm:
    """Base class.  Subclasses are dataclasses whose fields are their parameters."""

    name: ClassVar[str] = "base"
    window_size: int = 5
    ladder_kbps: tuple[int, ...] = (750, 1200, 1850)

    def initialize(self, window_size: int, ladder_kbps: Sequence[int]):
        self.window_size = window_size
        self.ladder_kbps = tuple(ladder_kbps)

    def decide(self, obs: Observation):
        raise NotImplementedError


class EstimatingAlgorithm(Algorithm):
    estimator: str = "harmonic"
    window: int = 5

    def initialize(self, window_size, ladder_kbps):
        super().initialize(window_size, ladder_kbps)
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}; choose from {sorted(ESTIMATORS)}")
        self._estimate_fn = ESTIMATORS[self.estimator]
        self.history: deque[tuple[int, int]] = deque(maxlen=self.window)

    def observe(self, obs: Observation):
        if obs.video_size > 0 and obs.delay > 0:
            self.history.append((obs.video_size, obs.delay))

    def estimate(self) -> float | None:
        if not self.history:
            return None
        return self._estimate_fn(list(self.history), self.window)


@dataclass
class NoPrefetch(EstimatingAlgorithm):
    """Finish the earliest incomplete window video before touching the next one."""

    name: ClassVar[str] = "no_prefetch"
    estimator: str = "harmonic"
    window: int = 5
    sleep_ms: int = SLEEP_MS

    def decide(self, obs):
        self.observe(obs)
        for slot, p in enumerate(obs.players):
            if p.downloaded_chunks < p.chunk_count:
                return Download(slot, rate_match(self.estimate(), self.ladder_kbps))
        return Sleep(self.sleep_ms)


@dataclass
class FixedPrefetch(Algorithm):
    """Keep the playing video ``target_ms`` ahead, then fill each queued video to K chunks."""

    name: ClassVar[str] = "fixed_prefetch"
    k: int = 4
    level: int = 1
    target_ms: int = 4000
    sleep_ms: int = SLEEP_MS

    def decide(self, obs):
        p0 = obs.players[0]
        if p0.downloaded_chunks < p0.chunk_count and p0.buffer_ms < self.target_ms:
            return Download(0, self.level)
        for slot in range(1, len(obs.players)):
            p = obs.players[slot]
            if p.downloaded_chunks < min(self.k, p.chunk_count):
                return Download(slot, self.level)
        return Sleep(self.sleep_ms)


def play_probabilities(players) -> list[float]:
    """Retention-weighted chance that each slot's next chunk is needed soon.

    Slot s scores reach(s) * P(watch >= next chunk start | watched up to cursor),
    where reach(s) multiplies, over the videos ahead of it, the chance that the
    viewer leaves them before the end.
    """
    out = []
    reach = 1.0
    for p in players:
        curve = p.retention
        here = curve.survival(p.play_cursor_ms)
        if here <= 0:
            out.append(0.0)
            reach = 0.0
            continue
        out.append(reach * min(1.0, curve.survival(p.downloaded_chunks * p.chunk_ms) / here))
        reach *= max(0.0, 1.0 - curve.survival(p.duration_ms) / here)
    return out


@dataclass
class ThresholdHeuristic(EstimatingAlgorithm):
    """Buffer-threshold prefetcher weighted by retention curves."""

    name: ClassVar[str] = "threshold"
    low_ms: int = 1000
    high_ms: int = 4000
    estimator: str = "harmonic"
    window: int = 5
    safety: float = 0.9
    max_sleep_ms: int = SLEEP_MS

    def decide(self, obs):
        self.observe(obs)
        players = obs.players
        level = rate_match(self.estimate(), self.ladder_kbps, self.safety)
        p0 = players[0]
        if p0.downloaded_chunks < p0.chunk_count and p0.buffer_ms < self.low_ms:
            return Download(0, level)
        probs = play_probabilities(players)
        best, best_p = -1, -1.0
        for slot, p in enumerate(players):
            if p.downloaded_chunks < p.chunk_count and p.buffer_ms < self.high_ms:
                if probs[slot] > best_p:
                    best, best_p = slot, probs[slot]
        if best >= 0:
            return Download(best, level)
        excess = p0.buffer_ms - self.high_ms
        return Sleep(min(self.max_sleep_ms, excess) if excess > 0 else self.max_sleep_ms)


@dataclass
class RandomPolicy(Algorithm):
    """Uniformly random valid decisions; for fuzzing the engine."""

    name: ClassVar[str] = "random"
    seed: int = 0
    p_sleep: float = 0.2
    max_sleep_ms: int = 2000

    def initialize(self, window_size, ladder_kbps):
        super().initialize(window_size, ladder_kbps)
        self.rng = np.random.default_rng(self.seed)

    def decide(self, obs):
        rng = self.rng
        open_slots = [s for s, p in enumerate(obs.players) if p.downloaded_chunks < p.chunk_count]
        if not open_slots or rng.random() < self.p_sleep:
            return Sleep(int(rng.integers(1, self.max_sleep_ms + 1)))
        return Download(open_slots[int(rng.integers(len(open_slots)))],
                        int(rng.integers(len(self.ladder_kbps))))


@dataclass
class Oracle(Algorithm):
    """Full-knowledge reference: fetches exactly the chunks that will be played.

    It reads the hidden watch durations and the network trace from the
    session it is attached to, so it is only meaningful as an upper bound.
    Chunks are fetched in playback order; each level is picked by simulating
    the next ``horizon`` needed chunks at one constant level and keeping the
    level with the best utility over that window.
    """

    name: ClassVar[str] = "oracle"
    horizon: int = 6
    alpha: float = 1.0
    beta: float = 1.85
    gamma: float = 1.0
    theta: float = 0.5
    privileged: ClassVar[bool] = True
    session: object = field(default=None, init=False, repr=False)

    def attach(self, session):
        self.session = session

    def _needed(self, vid: int) -> int:
        s = self.session
        v = s.sequence[vid]
        return -(-s.watch_durations[vid] // v.chunk_ms)

    def _downloaded(self, vid: int) -> int:
        s = self.session
        return s.players[vid].downloaded if vid < len(s.players) else 0

    def _plan(self, vid: int, c: int):
        """Needed chunks from (vid, c) onward, in playback order."""
        s = self.session
        n = len(s.sequence)
        while vid < n:
            need = self._needed(vid)
            while c < need:
                yield vid, c
                c += 1
            vid += 1
            c = 0

    def _remaining_watch(self, upto: int) -> int:
        s = self.session
        total = 0
        for p in s.window:
            if p.video_id > upto:
                break
            total += p.watch_ms - p.cursor_ms
        return total

    def _useful(self, vid: int, c: int) -> int:
        s = self.session
        v = s.sequence[vid]
        start = c * v.chunk_ms
        return min(start + v.chunk_duration(c), s.watch_durations[vid]) - start

    def decide(self, obs):
        s = self.session
        if s is None:
            raise RuntimeError("oracle must be attached to its session")
        play = obs.play_video_id
        nxt = None
        for vid in range(play, len(s.sequence)):
            if self._downloaded(vid) < self._needed(vid):
                nxt = (vid, self._downloaded(vid))
                break
        if nxt is None:
            return Sleep(max(1, self._remaining_watch(len(s.sequence))))
        vid, c = nxt
        slot = vid - play
        if slot >= len(s.window):
            return Sleep(max(1, self._remaining_watch(vid - s.config.window_size)))

        # content playable before the first stall, in ms
        ahead = self._remaining_watch(vid - 1)
        p = s.players[vid]
        ahead += min(p.buffer_ms, p.watch_ms - p.cursor_ms)
        plan = [x for _, x in zip(range(self.horizon), self._plan(vid, c))]
        ladder = s.sequence[vid].ladder_kbps
        prev = p.levels[-1] if p.levels else None
        best, best_val = 0, None
        for q in reversed(range(len(ladder))):
            val = self._plan_value(plan, q, prev, ahead)
            if best_val is None or val > best_val + 1e-12:
                best, best_val = q, val
        return Download(slot, best)

    def _plan_value(self, plan, level: int, prev_level, ahead: int) -> float:
        """Utility of fetching every planned chunk at ``level``."""
        s = self.session
        t = s.clock_ms
        stall = 0
        value = 0.0
        last = (plan[0][0], prev_level)
        for vid, c in plan:
            video = s.sequence[vid]
            bits = video.bits[c][level]
            d = s.network.download_time(t, bits)
            if d > ahead:
                stall += d - ahead
                ahead = 0
            else:
                ahead -= d
            ahead += self._useful(vid, c)
            t += d
            r = video.ladder_kbps[level] / 1000
            value += self.alpha * r - self.theta * bits / 1e6
            if last[0] == vid and last[1] is not None:
                value -= self.gamma * abs(r - video.ladder_kbps[last[1]] / 1000)
            last = (vid, level)
        return value - self.beta * stall / 1000


REGISTRY: dict[str, type] = {}


def register(cls=None, *, name: str | None = None):
    """Class decorator adding an algorithm to the registry under ``name``."""
    def wrap(c):
        REGISTRY[name or c.name] = c
        return c
    return wrap(cls) if cls is not None else wrap


for _cls in (NoPrefetch, FixedPrefetch, ThresholdHeuristic, RandomPolicy, Oracle):
    register(_cls)


def resolve(name: str) -> type:
    if name in REGISTRY:
        return REGISTRY[name]
    if ":" in name:
        module, _, attr = name.partition(":")
        return getattr(importlib.import_module(module), attr)
    for ep in entry_points(group="svsim.algorithms"):
        if ep.name == name:
            return ep.load()
    raise KeyError(f"unknown algorithm {name!r}; registered: {sorted(REGISTRY)}")


def _coerce(value, typ):
    if not isinstance(value, str):
        return value
    typ = typ if isinstance(typ, str) else getattr(typ, "__name__", str(typ))
    if typ == "int":
        return int(value)
    if typ == "float":
        return float(value)
    if typ == "bool":
        return value.strip().lower() in ("1", "true", "yes", "on")
    return value


def make_algorithm(name: str, params: dict | None = None):
    """Instantiate a registered algorithm, converting string parameters by field type."""
    cls = resolve(name)
    params = dict(params or {})
    if dataclasses.is_dataclass(cls):
        fields = {f.name: f for f in dataclasses.fields(cls) if f.init}
        unknown = set(params) - set(fields)
        if unknown:
            raise TypeError(f"{name}: unknown parameters {sorted(unknown)}")
        params = {k: _coerce(v, fields[k].type) for k, v in params.items()}
    return cls(**params)
