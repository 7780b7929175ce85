"""4D timeline: wall-clock to scene-frame mapping and playback controls."""

from __future__ import annotations

from bisect import bisect_right
from collections import OrderedDict
from dataclasses import dataclass, replace

from .splats import EmptySequenceError, SequenceManifest, SplatCloud


@dataclass(frozen=True)
class PlaybackState:
    time: float = 0.0          # seconds into the sequence
    playing: bool = False
    speed: float = 1.0         # multiplier > 0
    loop: bool = False
    target_fps: float = 30.0   # display frames per second

    def __post_init__(self) -> None:
        if self.speed <= 0:
            raise ValueError("speed must be positive")
        if self.target_fps <= 0:
            raise ValueError("target_fps must be positive")
        if self.time < 0:
            raise ValueError("time must be >= 0")


def frame_at(manifest: SequenceManifest, time: float) -> int:
    """Index of the frame with the largest timestamp <= time."""
    if not manifest.frames:
        raise EmptySequenceError("manifest has no frames")
    times = [f.t for f in manifest.frames]
    return max(bisect_right(times, time) - 1, 0)


def advance(state: PlaybackState, manifest: SequenceManifest,
            wall_dt: float) -> PlaybackState:
    """Step playback by measured wall time; paused state passes through.

    Looping wraps modulo duration; otherwise reaching the end clamps and
    auto-pauses.
    """
    if not state.playing or wall_dt == 0.0:
        return state
    t = state.time + wall_dt * state.speed
    duration = manifest.duration
    if state.loop:
        return replace(state, time=t % duration if duration > 0 else 0.0)
    if t >= duration:
        return replace(state, time=duration, playing=False)
    return replace(state, time=t)


def seek(state: PlaybackState, manifest: SequenceManifest, t: float) -> PlaybackState:
    """Move the playhead; the playing flag is unchanged."""
    duration = manifest.duration
    if state.loop and t > duration and duration > 0:
        return replace(state, time=t % duration)
    return replace(state, time=min(max(t, 0.0), duration))


class FrameCache:
    """LRU cache of loaded splat clouds keyed by frame index."""

    def __init__(self, capacity: int = 8, prefetch_window: int = 3) -> None:
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.prefetch_window = prefetch_window
        self._entries: OrderedDict[int, SplatCloud] = OrderedDict()

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, index: int) -> bool:
        return index in self._entries

    def get(self, index: int) -> SplatCloud | None:
        cloud = self._entries.get(index)
        if cloud is not None:
            self._entries.move_to_end(index)
        return cloud

    def put(self, index: int, cloud: SplatCloud, current: int | None = None) -> None:
        """Insert, evicting least-recently-used; the current frame is kept."""
        self._entries[index] = cloud
        self._entries.move_to_end(index)
        while len(self._entries) > self.capacity:
            for key in self._entries:
                if key != current:
                    del self._entries[key]
                    break
            else:       # only the current frame remains; capacity 1 edge
                break

    @property
    def indices(self) -> list[int]:
        return list(self._entries)


def prefetch_plan(state: PlaybackState, manifest: SequenceManifest,
                  cache: FrameCache) -> list[int]:
    """Frame indices to load next, nearest first, skipping cached entries."""
    n = len(manifest.frames)
    if n == 0:
        raise EmptySequenceError("manifest has no frames")
    current = frame_at(manifest, state.time)
    plan: list[int] = []
    for step in range(1, cache.prefetch_window + 1):
        j = current + step
        if state.loop:
            j %= n
        elif j >= n:
            break
        if j == current or j in cache or j in plan:
            continue
        plan.append(j)
    return plan
