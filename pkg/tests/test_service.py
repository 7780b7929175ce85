import asyncio
import json
import math
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from splat4d.playback import PlaybackState
from splat4d.rasterizer import RenderConfig
from splat4d.selection import SelectionMask
from splat4d.service.app import create_app
from splat4d.service.protocol import FORMAT_RAW, decode_frame_header
from splat4d.service.scenes import SceneRecord, SceneStore, SceneUploadError
from splat4d.service.session import Session, SessionManager, handle_command
from splat4d.service.streaming import FrameLoop
from splat4d.splats import serialize_ply, uniform_manifest
from splat4d.synthetic import frame_cloud_pose, make_cloud

from conftest import random_cloud


def demo_store(n=80, frames=1):
    store = SceneStore()
    clouds = [make_cloud(n, seed=40 + i) for i in range(frames)]
    manifest = uniform_manifest([f"f{i}" for i in range(frames)])
    store.add_record(SceneRecord(id="demo", manifest=manifest, clouds=clouds))
    return store


def make_session(store=None, width=96, height=64):
    store = store or demo_store()
    manager = SessionManager()
    return manager.create(store.get("demo"), width, height), manager, store


class TestSceneStore:
    def test_upload_single_ply_default_manifest(self):
        store = SceneStore()
        data = serialize_ply(random_cloud(20, seed=1))
        scene_id = store.add_upload([("frame_0.ply", data)])
        record = store.get(scene_id)
        assert len(record.clouds) == 1
        assert record.manifest.duration == pytest.approx(1 / 30)

    def test_upload_three_plys_uniform_timestamps(self):
        store = SceneStore()
        files = [(f"frame_{i}.ply", serialize_ply(random_cloud(10, seed=i)))
                 for i in range(3)]
        record = store.get(store.add_upload(files))
        np.testing.assert_allclose(record.manifest.timestamps,
                                   [0, 1 / 30, 2 / 30])

    def test_content_addressing_is_idempotent(self):
        store = SceneStore()
        files = [("a.ply", serialize_ply(random_cloud(10, seed=2)))]
        assert store.add_upload(files) == store.add_upload(files)

    def test_different_content_different_id(self):
        store = SceneStore()
        a = store.add_upload([("a.ply", serialize_ply(random_cloud(10, seed=3)))])
        b = store.add_upload([("a.ply", serialize_ply(random_cloud(10, seed=4)))])
        assert a != b

    def test_bad_ply_names_file(self):
        store = SceneStore()
        with pytest.raises(SceneUploadError) as info:
            store.add_upload([("broken.ply", b"not a ply at all")])
        assert info.value.filename == "broken.ply"

    def test_manifest_upload(self):
        store = SceneStore()
        files = [("a.ply", serialize_ply(random_cloud(5, seed=5))),
                 ("b.ply", serialize_ply(random_cloud(5, seed=6)))]
        manifest = json.dumps({"frames": [{"file": "a.ply", "t": 0.0},
                                          {"file": "b.ply", "t": 0.25}],
                               "duration": 0.5})
        record = store.get(store.add_upload(files, manifest))
        assert record.manifest.duration == 0.5


class TestHandleCommand:
    def test_seek_clamps_and_acks(self):
        session, _, _ = make_session()
        duration = session.scene.manifest.duration
        event = handle_command(session, {"type": "Seek", "seq": 4,
                                         "t": duration + 5.0})
        assert event == {"type": "ack", "seq": 4, "time": duration}
        assert session.playback.time == duration

    def test_set_speed_zero_rejected_state_unchanged(self):
        session, _, _ = make_session()
        before = session.playback
        event = handle_command(session, {"type": "SetSpeed", "seq": 9,
                                         "speed": 0})
        assert event["type"] == "error"
        assert event["code"] == "speed_must_be_positive"
        assert event["seq"] == 9
        assert session.playback == before

    def test_play_pause_loop(self):
        session, _, _ = make_session()
        handle_command(session, {"type": "Play", "seq": 1})
        assert session.playback.playing
        handle_command(session, {"type": "Pause", "seq": 2})
        assert not session.playback.playing
        handle_command(session, {"type": "SetLoop", "seq": 3, "loop": True})
        assert session.playback.loop

    def test_set_camera(self):
        session, _, _ = make_session()
        event = handle_command(session, {
            "type": "SetCamera", "seq": 5,
            "position": [0, 0, 5], "quaternion": [1, 0, 0, 0], "vfov_deg": 70})
        assert event["type"] == "ack"
        np.testing.assert_allclose(session.camera.position, [0, 0, 5])
        assert session.camera.vfov == pytest.approx(math.radians(70))

    def test_set_camera_invalid(self):
        session, _, _ = make_session()
        event = handle_command(session, {"type": "SetCamera", "seq": 6,
                                         "position": [0, 0], "quaternion": [1, 0, 0, 0]})
        assert event["code"] == "invalid_pose"

    def test_select_edit_undo_flow(self):
        session, _, _ = make_session()
        n = len(session.current_cloud)
        event = handle_command(session, {
            "type": "Select", "seq": 1, "mode": "replace",
            "shape": {"kind": "rect", "p0": [0, 0],
                      "p1": [session.render_cfg.width, session.render_cfg.height]}})
        assert event["type"] == "ack"
        assert event["selected"] > 0

        event = handle_command(session, {"type": "Edit", "seq": 2,
                                         "op": "translate", "delta": [1, 0, 0]})
        assert event["type"] == "ack"
        assert session.selection is None     # consumed by the edit

        event = handle_command(session, {"type": "Undo", "seq": 3})
        assert event["type"] == "ack"
        np.testing.assert_array_equal(
            session.current_cloud.positions,
            session.scene.clouds[session.current_frame].positions)

    def test_edit_without_selection(self):
        session, _, _ = make_session()
        event = handle_command(session, {"type": "Edit", "seq": 1, "op": "delete"})
        assert event["code"] == "no_selection"

    def test_undo_empty_history(self):
        session, _, _ = make_session()
        event = handle_command(session, {"type": "Undo", "seq": 1})
        assert event["code"] == "empty_history"

    def test_sphere_via_screen_point(self):
        session, _, _ = make_session()
        cx = session.render_cfg.width / 2
        cy = session.render_cfg.height / 2
        event = handle_command(session, {
            "type": "Select", "seq": 1, "mode": "replace",
            "shape": {"kind": "sphere", "screen": [cx, cy], "radius": 0.05}})
        assert event["type"] == "ack"
        assert event["selected"] >= 1

    def test_set_foveation_valid_and_invalid(self):
        session, _, _ = make_session()
        event = handle_command(session, {"type": "SetFoveation", "seq": 1,
                                         "threshold": 0.8, "downsample": 2,
                                         "enabled": True, "overlay": True})
        assert event["type"] == "ack"
        assert session.fcfg.threshold == 0.8
        assert session.overlay_stats

        event = handle_command(session, {"type": "SetFoveation", "seq": 2,
                                         "downsample": 3})
        assert event["code"] == "invalid_foveation"
        assert session.fcfg.peripheral_downsample == 2   # unchanged

    def test_set_prompt(self):
        session, _, _ = make_session()
        handle_command(session, {"type": "SetPrompt", "seq": 1, "text": "a cat"})
        assert session.prompt == "a cat"

    def test_load_scene(self):
        store = demo_store()
        other = SceneRecord(id="other", manifest=uniform_manifest(["x"]),
                            clouds=[make_cloud(30, seed=77)])
        store.add_record(other)
        session, _, _ = make_session(store)
        event = handle_command(session, {"type": "LoadScene", "seq": 1,
                                         "scene": "other"},
                               scene_lookup=store.get)
        assert event["type"] == "ack"
        assert session.scene.id == "other"
        event = handle_command(session, {"type": "LoadScene", "seq": 2,
                                         "scene": "missing"},
                               scene_lookup=store.get)
        assert event["code"] == "unknown_scene"

    def test_start_export_requires_launcher_and_trajectory(self):
        session, _, _ = make_session()
        event = handle_command(session, {"type": "StartExport", "seq": 1})
        assert event["code"] in ("invalid_export_params", "export_unavailable")

        launched = []
        traj = {"mode": "linear", "keyframes": [
            {"t": 0.0, "position": [0, 0, 5], "quaternion": [1, 0, 0, 0]},
            {"t": 1.0, "position": [1, 0, 5], "quaternion": [1, 0, 0, 0]}]}
        event = handle_command(session, {"type": "StartExport", "seq": 2,
                                         "trajectory": traj},
                               export_launcher=lambda s, m: launched.append(m))
        assert event["type"] == "ack"
        assert len(launched) == 1

        session.export_running = True
        event = handle_command(session, {"type": "StartExport", "seq": 3,
                                         "trajectory": traj},
                               export_launcher=lambda s, m: launched.append(m))
        assert event["code"] == "export_busy"

    def test_command_serializability_counter(self):
        session, _, _ = make_session()
        rev0 = session.state_rev
        handle_command(session, {"type": "Play", "seq": 1})
        handle_command(session, {"type": "Pause", "seq": 2})
        assert session.state_rev == rev0 + 2


class TestSessionManager:
    def test_reconnect_within_grace(self):
        t = {"now": 100.0}
        manager = SessionManager(grace=60.0, clock=lambda: t["now"])
        store = demo_store()
        session = manager.create(store.get("demo"), 64, 48)
        handle_command(session, {"type": "Seek", "seq": 1, "t": 0.02})
        manager.detach(session)
        t["now"] += 30.0
        again = manager.attach(session.id)
        assert again is session
        assert again.playback.time == pytest.approx(0.02)

    def test_expiry_after_grace(self):
        t = {"now": 0.0}
        manager = SessionManager(grace=60.0, clock=lambda: t["now"])
        store = demo_store()
        session = manager.create(store.get("demo"), 64, 48)
        manager.detach(session)
        t["now"] = 61.0
        assert manager.attach(session.id) is None


class TestHttpEndpoints:
    def test_healthz(self):
        client = TestClient(create_app(demo_store()))
        body = client.get("/healthz").json()
        assert body["status"] == "ok"
        assert "demo" in body["scenes"]

    def test_manifest_endpoint(self):
        client = TestClient(create_app(demo_store(frames=2)))
        body = client.get("/scenes/demo/manifest").json()
        assert len(body["frames"]) == 2
        assert body["splat_counts"] == [80, 80]

    def test_manifest_404(self):
        client = TestClient(create_app(demo_store()))
        assert client.get("/scenes/nope/manifest").status_code == 404

    def test_upload_roundtrip_and_error(self):
        client = TestClient(create_app(SceneStore()))
        ply = serialize_ply(random_cloud(10, seed=8))
        r = client.post("/scenes", files=[("files", ("f.ply", ply))])
        assert r.status_code == 200
        scene_id = r.json()["scene_id"]
        assert client.get(f"/scenes/{scene_id}/manifest").status_code == 200

        r = client.post("/scenes", files=[("files", ("bad.ply", b"junk"))])
        assert r.status_code == 400
        assert r.json()["detail"]["file"] == "bad.ply"


class TestWebSocket:
    def test_hello_then_ack_totality_over_50_commands(self):
        client = TestClient(create_app(demo_store()))
        with client.websocket_connect("/session?scene=demo&width=64&height=48") as ws:
            ws.send_text(json.dumps({"type": "hello", "format": "png"}))
            hello = ws.receive_json()
            assert hello["type"] == "hello"
            assert hello["width"] == 64

            commands = []
            for seq in range(50):
                kind = seq % 5
                if kind == 0:
                    commands.append({"type": "Ping", "seq": seq})
                elif kind == 1:
                    commands.append({"type": "Seek", "seq": seq, "t": 0.01})
                elif kind == 2:
                    commands.append({"type": "SetSpeed", "seq": seq,
                                     "speed": 0 if seq % 2 else 1.5})
                elif kind == 3:
                    commands.append({"type": "Frobnicate", "seq": seq})
                else:
                    commands.append({"type": "SetLoop", "seq": seq,
                                     "loop": bool(seq % 2)})

            events = {}
            for cmd in commands:
                ws.send_text(json.dumps(cmd))
                while True:
                    msg = ws.receive()
                    if "text" in msg:
                        event = json.loads(msg["text"])
                        if event["type"] in ("ack", "error"):
                            assert event["seq"] not in events
                            events[event["seq"]] = event
                            break
            assert sorted(events) == list(range(50))
            for seq, event in events.items():
                if commands[seq]["type"] == "Frobnicate":
                    assert event["code"] == "unknown_command"

    def test_unknown_scene_rejected(self):
        client = TestClient(create_app(demo_store()))
        with client.websocket_connect("/session?scene=missing") as ws:
            ws.send_text(json.dumps({"type": "hello", "format": "png"}))
            msg = ws.receive_json()
            assert msg["type"] == "error"
            assert msg["code"] == "unknown_scene"

    def test_raw_format_frames(self):
        client = TestClient(create_app(demo_store()))
        with client.websocket_connect(
                "/session?scene=demo&width=32&height=24&format=raw") as ws:
            ws.send_text(json.dumps({"type": "hello", "format": "raw"}))
            hello = ws.receive_json()
            assert hello["format"] == "raw"
            while True:
                msg = ws.receive()
                if "bytes" in msg:
                    header, payload = decode_frame_header(msg["bytes"])
                    assert header.format == FORMAT_RAW
                    assert len(payload) == 32 * 24 * 3
                    break


class TestFrameLoopBackpressure:
    @staticmethod
    def _session(width=64, height=48, target_fps=60.0):
        session, manager, store = make_session(width=width, height=height)
        session.playback = PlaybackState(playing=True, loop=True,
                                         target_fps=target_fps)
        return session

    def test_slow_client_latest_wins(self):
        async def scenario():
            session = self._session()
            delivered_at = []

            async def slow_send(frame: bytes) -> None:
                await asyncio.sleep(0.1)       # client drains at ~10 fps
                delivered_at.append(time.monotonic())

            loop = FrameLoop(session, slow_send)
            stop = asyncio.Event()
            task = asyncio.create_task(loop.run(stop))
            await asyncio.sleep(1.2)
            stop.set()
            return await task

        counters = asyncio.run(scenario())
        assert counters.max_in_flight <= 2
        assert counters.delivered >= 5
        assert counters.produced > counters.delivered   # frames were dropped
        assert counters.dropped > 0
        seqs = counters.delivered_seqs
        assert all(a < b for a, b in zip(seqs, seqs[1:]))
        assert seqs[-1] - seqs[0] >= len(seqs)          # gaps exist

    def test_fast_client_gap_free(self):
        async def scenario():
            session = self._session(width=32, height=24, target_fps=30.0)

            async def fast_send(frame: bytes) -> None:
                return None

            loop = FrameLoop(session, fast_send)
            stop = asyncio.Event()
            task = asyncio.create_task(loop.run(stop, max_frames=20))
            counters = await asyncio.wait_for(task, timeout=15)
            stop.set()
            return counters

        counters = asyncio.run(scenario())
        seqs = counters.delivered_seqs
        assert counters.dropped == 0
        assert seqs == list(range(len(seqs)))

    def test_paused_session_idles_at_keepalive_rate(self):
        async def scenario():
            session = self._session(width=32, height=24)
            session.playback = PlaybackState(playing=False, target_fps=60.0)

            async def send(frame: bytes) -> None:
                return None

            loop = FrameLoop(session, send)
            stop = asyncio.Event()
            task = asyncio.create_task(loop.run(stop))
            await asyncio.sleep(1.1)
            stop.set()
            return await task

        counters = asyncio.run(scenario())
        # one initial refresh plus at most ~1/s keepalive
        assert counters.produced <= 3

    def test_provider_poller_feeds_importance_without_blocking(self):
        from splat4d.foveation import ImportanceProvider

        class ScriptedProvider(ImportanceProvider):
            def __init__(self):
                self.calls = 0

            def fetch_map(self, image_png, prompt, rows, cols):
                self.calls += 1
                if self.calls == 2:
                    raise RuntimeError("scripted outage")
                return np.full((rows, cols), 0.25)

        async def scenario():
            session = self._session(width=32, height=24, target_fps=30.0)
            events = []
            session.event_sink = events.append
            provider = ScriptedProvider()

            async def send(frame):
                return None

            loop = FrameLoop(session, send, importance_provider=provider,
                             provider_interval=0.05)
            stop = asyncio.Event()
            task = asyncio.create_task(loop.run(stop))
            await asyncio.sleep(0.6)
            stop.set()
            await task
            return session, provider, events

        session, provider, events = asyncio.run(scenario())
        assert session.use_provider_maps
        assert provider.calls >= 2
        assert session.importance is not None
        assert session.importance_source in ("provider", "heuristic")
        # the scripted outage surfaced as a diagnostic, not a render failure
        assert any(e["type"] == "diagnostic" for e in events)
        # provider values flowed into the smoothed map
        assert session.importance.grid.max() <= 1.0

    def test_stats_events_when_overlay_enabled(self):
        async def scenario():
            session = self._session(width=32, height=24)
            session.overlay_stats = True
            events = []
            session.event_sink = events.append

            async def send(frame: bytes) -> None:
                return None

            loop = FrameLoop(session, send)
            stop = asyncio.Event()
            task = asyncio.create_task(loop.run(stop, max_frames=10))
            await asyncio.wait_for(task, timeout=15)
            stop.set()
            return events

        events = asyncio.run(scenario())
        stats = [e for e in events if e["type"] == "stats"]
        assert stats
        assert "importance" in stats[0]
        assert "foveal" in stats[0]
