"""Frame streaming with latest-wins back-pressure.

The producer ticks at the session's target fps; encoded frames go through a
one-slot channel where a newer frame replaces an undelivered one. In-flight
frames per connection never exceed 2 (one queued + one being sent), so a slow
client drops frames instead of growing a queue. frame_seq is assigned at
production time and keeps increasing across drops.
"""

from __future__ import annotations

import asyncio
import time
from dataclasses import dataclass, field
from typing import Awaitable, Callable

from ..foveation import ImportanceProvider, query_provider, smooth_map
from ..imaging import encode_png
from ..mathutil import srgb_encode
from .protocol import (FLAG_FOVEATED, FORMAT_PNG, FORMAT_RAW, FrameHeader,
                       encode_frame_message, make_diagnostic, make_stats)
from .session import Session

IDLE_REFRESH_FPS = 1.0
STATS_INTERVAL = 0.5
PROVIDER_INTERVAL = 1.0


class LatestWinsSlot:
    """Single-item channel where offers replace an unconsumed item."""

    def __init__(self) -> None:
        self._item: bytes | None = None
        self._ready = asyncio.Event()

    def offer(self, item: bytes) -> bool:
        """Returns True when an undelivered item was replaced (dropped)."""
        replaced = self._item is not None
        self._item = item
        self._ready.set()
        return replaced

    async def take(self) -> bytes:
        await self._ready.wait()
        item = self._item
        self._item = None
        self._ready.clear()
        return item

    @property
    def pending(self) -> bool:
        return self._item is not None


@dataclass
class StreamCounters:
    produced: int = 0
    delivered: int = 0
    dropped: int = 0
    max_in_flight: int = 0
    delivered_seqs: list[int] = field(default_factory=list)


class FrameLoop:
    """Renders session frames and streams them through a latest-wins slot."""

    def __init__(self, session: Session,
                 send: Callable[[bytes], Awaitable[None]],
                 frame_format: int = FORMAT_PNG,
                 clock: Callable[[], float] = time.monotonic,
                 idle_fps: float = IDLE_REFRESH_FPS,
                 importance_provider: ImportanceProvider | None = None,
                 provider_interval: float = PROVIDER_INTERVAL) -> None:
        self.session = session
        self.send = send
        self.frame_format = frame_format
        self.clock = clock
        self.idle_fps = idle_fps
        self.importance_provider = importance_provider
        self.provider_interval = provider_interval
        if importance_provider is not None:
            session.use_provider_maps = True
        self.counters = StreamCounters()
        self._slot = LatestWinsSlot()
        self._sending = False
        self._next_stats = 0.0

    def _note_in_flight(self) -> None:
        in_flight = (1 if self._slot.pending else 0) + (1 if self._sending else 0)
        self.counters.max_in_flight = max(self.counters.max_in_flight, in_flight)

    def _encode(self, seq: int) -> bytes:
        rgb8, foveated = self.session.render_frame()
        if self.frame_format == FORMAT_RAW:
            payload = rgb8.tobytes()
        else:
            payload = encode_png(rgb8)
        header = FrameHeader(
            frame_seq=seq,
            width=self.session.render_cfg.width,
            height=self.session.render_cfg.height,
            format=self.frame_format,
            flags=FLAG_FOVEATED if foveated else 0,
            sim_time_ms=int(self.session.playback.time * 1000.0))
        return encode_frame_message(header, payload)

    async def _sender(self) -> None:
        while True:
            frame = await self._slot.take()
            self._sending = True
            self._note_in_flight()
            header_seq = int.from_bytes(frame[4:8], "little")
            await self.send(frame)
            self._sending = False
            self.counters.delivered += 1
            self.counters.delivered_seqs.append(header_seq)

    async def _poll_provider(self, stop: asyncio.Event) -> None:
        """Feed session.importance from the external provider, off the render
        path; failures fall back to the heuristic and surface as diagnostics."""
        session = self.session
        while not stop.is_set():
            if session.fcfg.enabled and session.last_fb is not None:
                cfg = session.render_cfg
                dims = (cfg.tiles_y, cfg.tiles_x)
                fb = session.last_fb
                png = await asyncio.to_thread(
                    lambda: encode_png(srgb_encode(fb.rgb)))
                result = await asyncio.to_thread(
                    query_provider, png, session.prompt,
                    self.importance_provider, dims, fb)
                previous = session.importance
                if previous is not None and previous.grid.shape == result.map.grid.shape:
                    session.importance = smooth_map(previous, result.map,
                                                    session.fcfg.temporal_beta)
                else:
                    session.importance = result.map
                session.importance_source = result.source
                if result.diagnostic:
                    session.emit_event(make_diagnostic(result.diagnostic))
            try:
                await asyncio.wait_for(stop.wait(), timeout=self.provider_interval)
            except asyncio.TimeoutError:
                pass

    async def run(self, stop: asyncio.Event,
                  max_frames: int | None = None) -> StreamCounters:
        sender = asyncio.create_task(self._sender())
        poller = None
        if self.importance_provider is not None:
            poller = asyncio.create_task(self._poll_provider(stop))
        last_tick = self.clock()
        last_emit = -1e9
        last_rev = -1
        try:
            while not stop.is_set():
                now = self.clock()
                wall_dt = now - last_tick
                last_tick = now
                self.session.tick(wall_dt)

                playing = self.session.playback.playing
                rev = self.session.state_rev
                due_refresh = (now - last_emit) >= 1.0 / self.idle_fps
                if playing or rev != last_rev or due_refresh:
                    seq = self.counters.produced
                    frame = await asyncio.to_thread(self._encode, seq)
                    self.counters.produced += 1
                    if self._slot.offer(frame):
                        self.counters.dropped += 1
                    self._note_in_flight()
                    last_emit = now
                    last_rev = rev
                    if self.session.overlay_stats and now >= self._next_stats:
                        self._next_stats = now + STATS_INTERVAL
                        self.session.emit_event(self._stats_event())
                    if max_frames is not None and self.counters.produced >= max_frames:
                        break

                elapsed = self.clock() - now
                delay = max(1.0 / self.session.playback.target_fps - elapsed, 0.0)
                try:
                    await asyncio.wait_for(stop.wait(), timeout=delay)
                except asyncio.TimeoutError:
                    pass
        finally:
            # let the last queued frame drain before stopping the sender
            for _ in range(200):
                if not self._slot.pending and not self._sending:
                    break
                await asyncio.sleep(0.005)
            sender.cancel()
            tasks = [sender] if poller is None else [sender, poller]
            if poller is not None:
                poller.cancel()
            for task in tasks:
                try:
                    await task
                except asyncio.CancelledError:
                    pass
        return self.counters

    def _stats_event(self) -> dict:
        session = self.session
        payload = {
            "time": session.playback.time,
            "frame": session.current_frame,
            "foveation_enabled": session.fcfg.enabled,
            "tau": session.fcfg.threshold,
        }
        if session.importance is not None:
            from ..foveation import classify_tiles
            payload["importance"] = session.importance.grid.tolist()
            payload["foveal"] = classify_tiles(
                session.importance, session.fcfg.threshold).astype(int).tolist()
        return make_stats(**payload)
