import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svsim.algorithms import NoPrefetch, RandomPolicy
from svsim.engine import (AlgorithmError, Download, DurationMismatch, EmptySequence, InvalidLevel,
                          NonTerminating, PlayerView, Session, SessionConfig, SessionEnded, Sleep,
                          SlotOutOfWindow, VideoFullyDownloaded, ZeroSleep, new_session, run_session)
from svsim.traces import bundled_manifest
from svsim.trajectory import StepRecord, read_jsonl, write_jsonl

from support import (conservation_failures, const_trace, random_sequence, random_trace,
                     random_watch, uniform_video)

SEQ = bundled_manifest().sequence("table3")


def full_watch(seq):
    return [v.duration_ms for v in seq]


# ---------------------------------------------------------------- construction


def test_window_holds_five_of_seven():
    s = new_session(SEQ, const_trace(3.0), full_watch(SEQ))
    obs = s.initial_observation()
    assert len(obs.players) == 5
    assert obs.players[0].name == "tj"
    assert obs.first_step and obs.play_video_id == 0
    assert all(p.buffer_ms == 0 and p.downloaded_chunks == 0 for p in obs.players)


def test_single_video_window():
    v = uniform_video("a", 3)
    assert len(Session([v], const_trace(1.0), [3000]).window) == 1


def test_watch_longer_than_video_rejected():
    v = uniform_video("a", 3)
    with pytest.raises(DurationMismatch):
        Session([v], const_trace(1.0), [3001])


def test_wrong_number_of_durations():
    with pytest.raises(DurationMismatch):
        Session([uniform_video("a", 3)], const_trace(1.0), [])


def test_empty_sequence():
    with pytest.raises(EmptySequence):
        Session([], const_trace(1.0), [])


def test_zero_length_watches_end_immediately():
    vs = [uniform_video("a", 2), uniform_video("b", 2)]
    s = Session(vs, const_trace(1.0), [0, 0])
    assert s.ended
    assert run_session(s, NoPrefetch()).score == 0.0


# ---------------------------------------------------------------- step semantics


def test_startup_stall_then_buffer():
    v = uniform_video("a", 3)
    s = Session([v], const_trace(2.0), [3000])
    obs = s.step(Download(0, 2))
    assert (obs.delay, obs.rebuf, obs.video_size) == (925, 925, 1_850_000)
    assert obs.players[0].buffer_ms == 1000
    assert not obs.first_step and not obs.end_of_video


def test_steady_state_keeps_buffer():
    v = uniform_video("a", 20, bits_per_level=(1_000_000,) * 3)
    s = Session([v], const_trace(1.0), [20_000])
    s.window[0].buffer_ms = 5000
    s.window[0].downloaded = 5
    obs = s.step(Download(0, 0))
    assert obs.delay == 1000 and obs.rebuf == 0
    assert obs.players[0].buffer_ms == 5000


def test_swipe_mid_step_then_stall_on_next_video():
    a = uniform_video("a", 5, bits_per_level=(1_000_000,) * 3)
    b = uniform_video("b", 5, bits_per_level=(1_000_000,) * 3)
    s = Session([a, b], const_trace(1.0), [300, 5000])
    s.window[0].buffer_ms = 300
    s.window[0].downloaded = 1
    obs = s.step(Download(1, 0))
    assert obs.delay == 1000
    assert obs.rebuf == 700
    assert obs.play_video_id == 1
    assert len(obs.players) == 1 and obs.players[0].buffer_ms == 1000
    rec = s.records[-1]
    assert rec.played == ((0, 0, 300),)
    assert rec.stall_video_id == 1


def test_chunk_of_swiped_video_is_not_credited():
    a = uniform_video("a", 5, bits_per_level=(1_000_000,) * 3)
    b = uniform_video("b", 5)
    s = Session([a, b], const_trace(1.0), [200, 5000])
    s.window[0].buffer_ms = 1000
    s.window[0].downloaded = 1
    obs = s.step(Download(0, 0))  # swipe happens 200 ms into this 1000 ms download
    assert obs.play_video_id == 1
    assert s.players[0].buffer_ms == 800  # untouched by the late chunk
    assert s.players[0].downloaded == 2
    assert obs.rebuf == 800


def test_multiple_swipes_in_one_step():
    vs = [uniform_video(n, 2) for n in "abcd"]
    s = Session(vs, const_trace(1.0), [100, 100, 100, 2000])
    for p in s.window[:3]:
        p.buffer_ms, p.downloaded = 1000, 1
    obs = s.step(Sleep(250))
    assert obs.play_video_id == 2
    assert s.records[-1].played == ((0, 0, 100), (1, 0, 100), (2, 0, 50))


def test_sleep_continues_playback_without_download():
    v = uniform_video("a", 4)
    s = Session([v], const_trace(1.0), [4000])
    s.step(Download(0, 0))
    obs = s.step(Sleep(400))
    assert obs.video_size == 0 and obs.rebuf == 0
    assert obs.players[0].buffer_ms == 600
    assert obs.players[0].downloaded_chunks == 1


def test_sleep_on_empty_buffer_stalls():
    s = Session([uniform_video("a", 2)], const_trace(1.0), [2000])
    obs = s.step(Sleep(300))
    assert obs.rebuf == 300 and s.records[-1].stall_video_id == 0


def test_end_of_video_flag_and_last_chunk_duration():
    v = uniform_video("a", 2, duration_ms=1400)
    s = Session([v], const_trace(10.0), [1400])
    s.step(Download(0, 0))
    obs = s.step(Download(0, 0))
    assert obs.end_of_video
    assert obs.players[0].buffer_ms == 1000 - 75 + 400


def test_session_end_sets_idle_and_flag():
    v = uniform_video("a", 1, bits_per_level=(1_000_000,) * 3)
    s = Session([v], const_trace(1.0), [1000])
    s.step(Download(0, 0))
    s.step(Sleep(1500))
    r = s.records[-1]
    assert s.ended and r.ended
    assert (r.played_ms, r.rebuf_ms, r.idle_ms) == (1000, 0, 500)
    with pytest.raises(SessionEnded):
        s.step(Sleep(1))


@pytest.mark.parametrize("decision,err", [
    (Download(5, 0), SlotOutOfWindow), (Download(-1, 0), SlotOutOfWindow),
    (Download(0, 3), InvalidLevel), (Sleep(0), ZeroSleep), (Sleep(-3), ZeroSleep),
    (Sleep(1.5), ZeroSleep),
])
def test_invalid_decisions(decision, err):
    s = Session(SEQ, const_trace(1.0), full_watch(SEQ))
    with pytest.raises(err):
        s.step(decision)


def test_fully_downloaded_video_rejected():
    s = Session([uniform_video("a", 1)], const_trace(5.0), [1000])
    s.step(Download(0, 0))
    with pytest.raises(VideoFullyDownloaded):
        s.step(Download(0, 0))


def test_window_refills_after_swipe():
    s = Session(SEQ, const_trace(3.0), [1] + full_watch(SEQ)[1:])
    s.window[0].buffer_ms, s.window[0].downloaded = 1000, 1
    obs = s.step(Sleep(10))
    assert [p.name for p in obs.players] == ["EDG", "gy", "dx", "ss", "jt"]
    assert obs.players[-1].buffer_ms == 0


# ---------------------------------------------------------------- information hiding


def test_views_hide_watch_durations():
    assert not any("watch" in f for f in PlayerView._fields)
    s = Session(SEQ, const_trace(3.0), [1234] * 5 + [5000, 6000])
    obs = s.initial_observation()
    for p in obs.players:
        assert 1234 not in [getattr(p, f) for f in PlayerView._fields]


# ---------------------------------------------------------------- whole sessions


class AlwaysSleep:
    name = "always_sleep"

    def initialize(self, window_size, ladder):
        pass

    def decide(self, obs):
        return Sleep(1000)


def test_always_sleeping_never_finishes():
    s = Session([uniform_video("a", 2)], const_trace(1.0), [1500], SessionConfig(max_steps=50))
    with pytest.raises(NonTerminating):
        run_session(s, AlwaysSleep())


def test_always_sleeping_ends_when_nothing_is_watched():
    s = Session([uniform_video("a", 2)], const_trace(1.0), [0])
    result = run_session(s, AlwaysSleep())
    assert result.trajectory == [] and result.score == 0.0


def test_no_prefetch_single_video_has_no_waste():
    v = uniform_video("a", 6)
    s = Session([v], const_trace(10.0), [6000])
    result = run_session(s, NoPrefetch())
    assert result.waste.waste_mb == 0.0
    assert sum(r.played_ms for r in result.trajectory) == 6000


def test_deterministic_trajectories():
    net = random_trace(np.random.default_rng(1))
    watch = [v.duration_ms // 2 for v in SEQ]
    a = run_session(Session(SEQ, net, watch), RandomPolicy(seed=3)).trajectory
    b = run_session(Session(SEQ, net, watch), RandomPolicy(seed=3)).trajectory
    assert a == b


def test_fresh_session_required():
    s = Session([uniform_video("a", 2)], const_trace(1.0), [2000])
    s.step(Sleep(5))
    with pytest.raises(ValueError):
        run_session(s, NoPrefetch())


class Broken:
    name = "broken"

    def initialize(self, window_size, ladder):
        pass

    def decide(self, obs):
        return Download(9, 0)


def test_invalid_decision_becomes_algorithm_error():
    with pytest.raises(AlgorithmError):
        run_session(Session(SEQ, const_trace(1.0), full_watch(SEQ)), Broken())


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_conservation_on_random_sessions(seed):
    rng = np.random.default_rng(seed)
    seq = random_sequence(rng)
    s = Session(seq, random_trace(rng), random_watch(rng, seq))
    result = run_session(s, RandomPolicy(seed=seed))
    assert conservation_failures(s, result.trajectory) == []
    for r in result.trajectory:
        assert len(r.buffers_ms) <= 5
    got = [len([r for r in result.trajectory if r.chunk is not None and r.step <= k])
           for k in range(len(result.trajectory))]
    assert all(b - a in (0, 1) for a, b in zip([0] + got, got))


def test_trajectory_jsonl_round_trip(tmp_path):
    s = Session(SEQ, const_trace(2.0), [v.duration_ms // 3 for v in SEQ])
    records = run_session(s, NoPrefetch()).trajectory
    write_jsonl(records, tmp_path / "t.jsonl")
    assert read_jsonl(tmp_path / "t.jsonl") == records
    line = (tmp_path / "t.jsonl").read_text().splitlines()[0]
    assert {"step", "decision", "delay_ms", "rebuf_ms", "video_size_bits", "play_video_id",
            "end_of_video", "buffers_ms"} <= set(json.loads(line))
    assert StepRecord.from_json(json.loads(line)) == records[0]
