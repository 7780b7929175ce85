import json

import numpy as np
import pytest

from splat4d.playback import (FrameCache, PlaybackState, advance, frame_at,
                              prefetch_plan, seek)
from splat4d.splats import load_manifest, uniform_manifest

from conftest import random_cloud


def manifest_with_times(times, duration=None):
    frames = [{"file": f"f{i}.ply", "t": t} for i, t in enumerate(times)]
    doc = {"frames": frames}
    if duration is not None:
        doc["duration"] = duration
    return load_manifest(json.dumps(doc))


class TestFrameAt:
    def test_floor_lookup(self):
        m = manifest_with_times([0.0, 0.5, 1.0])
        assert frame_at(m, 0.75) == 1

    def test_time_zero(self):
        m = manifest_with_times([0.0, 0.5, 1.0])
        assert frame_at(m, 0.0) == 0

    def test_matches_linear_scan_oracle(self):
        rng = np.random.default_rng(5)
        times = np.concatenate([[0.0], np.sort(rng.uniform(0.01, 100.0, 999))])
        times = np.unique(times)
        m = manifest_with_times(list(times), duration=110.0)
        for t in rng.uniform(0.0, 110.0, size=1000):
            expected = 0
            for i, ts in enumerate(times):
                if ts <= t:
                    expected = i
            assert frame_at(m, float(t)) == expected

    def test_monotone(self):
        rng = np.random.default_rng(6)
        times = np.concatenate([[0.0], np.sort(rng.uniform(0.01, 10.0, 50))])
        m = manifest_with_times(list(np.unique(times)))
        queries = np.sort(rng.uniform(0, 10, 200))
        indices = [frame_at(m, float(t)) for t in queries]
        assert all(a <= b for a, b in zip(indices, indices[1:]))


class TestAdvance:
    def test_speed_multiplies_wall_dt(self):
        m = manifest_with_times([0.0], duration=10.0)
        s = PlaybackState(time=0.0, playing=True, speed=2.0)
        assert advance(s, m, 0.5).time == pytest.approx(1.0)

    def test_loop_wraps_modulo_duration(self):
        m = manifest_with_times([0.0], duration=2.0)
        s = PlaybackState(time=1.9, playing=True, speed=1.0, loop=True)
        assert advance(s, m, 0.2).time == pytest.approx(0.1)

    def test_paused_state_unchanged(self):
        m = manifest_with_times([0.0], duration=2.0)
        s = PlaybackState(time=0.7, playing=False)
        assert advance(s, m, 5.0) == s

    def test_clamp_and_autopause_at_end(self):
        m = manifest_with_times([0.0], duration=2.0)
        s = PlaybackState(time=1.5, playing=True)
        out = advance(s, m, 1.0)
        assert out.time == 2.0
        assert out.playing is False

    def test_additivity_while_unclamped(self):
        m = manifest_with_times([0.0], duration=100.0)
        s = PlaybackState(time=0.0, playing=True, speed=1.7)
        rng = np.random.default_rng(2)
        for _ in range(100):
            a, b = rng.uniform(0, 5, size=2)
            two_step = advance(advance(s, m, a), m, b).time
            one_step = advance(s, m, a + b).time
            assert abs(two_step - one_step) < 1e-9

    def test_time_stays_in_range(self):
        m = manifest_with_times([0.0], duration=3.0)
        rng = np.random.default_rng(3)
        for loop in (False, True):
            s = PlaybackState(time=0.0, playing=True, speed=3.0, loop=loop)
            for _ in range(200):
                s = advance(s, m, float(rng.uniform(0, 1)))
                assert 0.0 <= s.time <= m.duration
                if not s.playing:
                    s = PlaybackState(time=s.time, playing=True, speed=3.0,
                                      loop=loop)


class TestSeek:
    def test_negative_clamps_to_zero(self):
        m = manifest_with_times([0.0], duration=2.0)
        assert seek(PlaybackState(), m, -1.0).time == 0.0

    def test_midpoint(self):
        m = manifest_with_times([0.0], duration=2.0)
        assert seek(PlaybackState(), m, 1.0).time == 1.0

    def test_loop_modulo(self):
        m = manifest_with_times([0.0], duration=2.0)
        s = PlaybackState(loop=True)
        assert seek(s, m, 5.0).time == pytest.approx(1.0)

    def test_non_loop_clamps_to_duration(self):
        m = manifest_with_times([0.0], duration=2.0)
        assert seek(PlaybackState(), m, 5.0).time == 2.0

    def test_playing_flag_unchanged(self):
        m = manifest_with_times([0.0], duration=2.0)
        s = PlaybackState(playing=True)
        assert seek(s, m, 1.0).playing is True


class TestPrefetchPlan:
    def test_basic_window(self):
        m = uniform_manifest([f"f{i}" for i in range(10)])
        cache = FrameCache(capacity=8, prefetch_window=3)
        s = PlaybackState(time=0.0)
        assert prefetch_plan(s, m, cache) == [1, 2, 3]

    def test_loop_wraparound(self):
        m = uniform_manifest([f"f{i}" for i in range(10)])
        cache = FrameCache(capacity=8, prefetch_window=3)
        s = PlaybackState(time=m.frames[8].t, loop=True)
        assert prefetch_plan(s, m, cache) == [9, 0, 1]

    def test_cached_entries_excluded(self):
        m = uniform_manifest([f"f{i}" for i in range(10)])
        cache = FrameCache(capacity=8, prefetch_window=3)
        cache.put(1, object())
        cache.put(2, object())
        s = PlaybackState(time=0.0)
        assert prefetch_plan(s, m, cache) == [3]

    def test_non_loop_stops_at_end(self):
        m = uniform_manifest([f"f{i}" for i in range(3)])
        cache = FrameCache(capacity=8, prefetch_window=3)
        s = PlaybackState(time=m.frames[1].t)
        assert prefetch_plan(s, m, cache) == [2]


class TestFrameCache:
    def test_capacity_never_exceeded(self):
        cache = FrameCache(capacity=3)
        for i in range(10):
            cache.put(i, object())
            assert len(cache) <= 3

    def test_lru_eviction(self):
        cache = FrameCache(capacity=2)
        cache.put(0, "a")
        cache.put(1, "b")
        cache.get(0)              # 0 becomes most recent
        cache.put(2, "c")
        assert 0 in cache
        assert 1 not in cache

    def test_current_frame_never_evicted(self):
        cache = FrameCache(capacity=2)
        cache.put(0, "current")
        cache.put(1, "b", current=0)
        cache.put(2, "c", current=0)
        assert 0 in cache
        assert len(cache) == 2
