"""HTTP + WebSocket service: scene upload, session streaming, export jobs."""

from __future__ import annotations

import asyncio
import json
import time
from pathlib import Path

from fastapi import FastAPI, Request, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse

from ..export import ExportJob, image_sequence_sink, run_export
from ..foveation import provider_from_env
from ..splats import ManifestError
from ..trajectory import trajectory_from_json
from .protocol import (FORMAT_PNG, FORMAT_RAW, ProtocolError,
                       UnknownCommandError, make_ack, make_error,
                       make_export_done, make_export_progress, parse_command)
from .scenes import SceneStore, SceneUploadError
from .session import Session, SessionManager, handle_command
from .streaming import FrameLoop

EXPORT_PROGRESS_EVERY = 10


def create_app(store: SceneStore | None = None, *,
               session_grace: float = 60.0,
               export_root: str | Path | None = None,
               default_width: int = 640,
               default_height: int = 360,
               frontend_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="splat4d", version="0.1.0")
    app.state.store = store or SceneStore()
    app.state.sessions = SessionManager(grace=session_grace)
    app.state.export_root = Path(export_root) if export_root else Path("exports")

    if frontend_dir:
        front = Path(frontend_dir)
        if (front / "index.html").exists():
            from fastapi.responses import FileResponse
            from fastapi.staticfiles import StaticFiles

            @app.get("/")
            async def index():
                return FileResponse(front / "index.html")

            if (front / "dist").is_dir():
                app.mount("/dist", StaticFiles(directory=front / "dist"),
                          name="dist")

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok", "scenes": app.state.store.ids()}

    @app.post("/scenes")
    async def upload_scene(request: Request):
        form = await request.form()
        files: list[tuple[str, bytes]] = []
        manifest_text = None
        for key, value in form.multi_items():
            if hasattr(value, "read"):          # an UploadFile
                data = await value.read()
                name = value.filename or key
                if name.endswith(".json") or key == "manifest":
                    manifest_text = data.decode("utf-8")
                else:
                    files.append((name, data))
            elif key == "manifest":
                manifest_text = str(value)
        try:
            scene_id = app.state.store.add_upload(files, manifest_text)
        except SceneUploadError as exc:
            return JSONResponse(status_code=400, content={
                "detail": {"file": exc.filename, "error": exc.message}})
        except ManifestError as exc:
            return JSONResponse(status_code=400, content={
                "detail": {"file": "manifest", "error": str(exc)}})
        return {"scene_id": scene_id}

    @app.get("/scenes/{scene_id}/manifest")
    async def scene_manifest(scene_id: str):
        record = app.state.store.get(scene_id)
        if record is None:
            return JSONResponse(status_code=404,
                                content={"detail": f"no scene {scene_id!r}"})
        doc = record.manifest.to_json_dict()
        doc["splat_counts"] = [len(c) for c in record.clouds]
        return doc

    @app.websocket("/session")
    async def session_socket(ws: WebSocket):
        await ws.accept()
        store: SceneStore = app.state.store
        manager: SessionManager = app.state.sessions

        scene_id = ws.query_params.get("scene")
        session_id = ws.query_params.get("session")
        width = int(ws.query_params.get("width", default_width))
        height = int(ws.query_params.get("height", default_height))
        frame_format = FORMAT_RAW if ws.query_params.get("format") == "raw" \
            else FORMAT_PNG

        # optional client hello: {"type": "hello", "format": "png"|"raw"}
        pending_first: dict | None = None
        try:
            first = await asyncio.wait_for(ws.receive_text(), timeout=1.0)
            msg = json.loads(first)
            if isinstance(msg, dict) and msg.get("type") == "hello":
                if msg.get("format") == "raw":
                    frame_format = FORMAT_RAW
                elif msg.get("format") == "png":
                    frame_format = FORMAT_PNG
            else:
                pending_first = msg
        except asyncio.TimeoutError:
            pass
        except (WebSocketDisconnect, json.JSONDecodeError):
            await ws.close()
            return

        session: Session | None = None
        if session_id:
            session = manager.attach(session_id)
        if session is None:
            record = store.get(scene_id) if scene_id else None
            if record is None:
                await ws.send_json(make_error(-1, "unknown_scene",
                                              f"no scene {scene_id!r}"))
                await ws.close()
                return
            session = manager.create(record, width, height)

        send_lock = asyncio.Lock()

        async def send_json(obj: dict) -> None:
            async with send_lock:
                await ws.send_json(obj)

        async def send_bytes(data: bytes) -> None:
            async with send_lock:
                await ws.send_bytes(data)

        loop = asyncio.get_running_loop()
        events: asyncio.Queue = asyncio.Queue(maxsize=256)

        def sink(event: dict) -> None:
            try:
                events.put_nowait(event)
            except asyncio.QueueFull:
                pass

        session.event_sink = sink

        await send_json({
            "type": "hello",
            "session": session.id,
            "scene": session.scene.id,
            "width": session.render_cfg.width,
            "height": session.render_cfg.height,
            "format": "raw" if frame_format == FORMAT_RAW else "png",
            "duration": session.scene.manifest.duration,
            "frames": len(session.scene.manifest.frames),
            "target_fps": session.playback.target_fps,
        })

        def export_launcher(sess: Session, msg: dict) -> None:
            _launch_export(app, loop, sess, msg)

        async def handle(msg: dict) -> None:
            try:
                parse_command(msg)
            except UnknownCommandError as exc:
                await send_json(make_error(
                    msg.get("seq", -1) if isinstance(msg.get("seq", -1), int) else -1,
                    "unknown_command", str(exc)))
                return
            except ProtocolError as exc:
                await send_json(make_error(-1, "bad_command", str(exc)))
                return
            event = handle_command(session, msg, export_launcher=export_launcher,
                                   scene_lookup=store.get)
            await send_json(event)

        stop = asyncio.Event()
        frame_loop = FrameLoop(session, send_bytes, frame_format=frame_format,
                               importance_provider=provider_from_env())

        async def pump_events() -> None:
            while True:
                event = await events.get()
                await send_json(event)

        async def receive_commands() -> None:
            if pending_first is not None:
                await handle(pending_first)
            while True:
                text = await ws.receive_text()
                try:
                    msg = json.loads(text)
                except json.JSONDecodeError:
                    await send_json(make_error(-1, "bad_json", "unparseable command"))
                    continue
                await handle(msg)

        tasks = [
            asyncio.create_task(receive_commands()),
            asyncio.create_task(frame_loop.run(stop)),
            asyncio.create_task(pump_events()),
        ]
        try:
            done, pending = await asyncio.wait(tasks,
                                               return_when=asyncio.FIRST_COMPLETED)
        finally:
            stop.set()
            for task in tasks:
                task.cancel()
            for task in tasks:
                try:
                    await task
                except (asyncio.CancelledError, WebSocketDisconnect, RuntimeError):
                    pass
            manager.detach(session)

    return app


def _launch_export(app: FastAPI, loop: asyncio.AbstractEventLoop,
                   session: Session, msg: dict) -> None:
    """Build an ExportJob from session state + params and run it off-loop."""
    trajectory = trajectory_from_json(msg["trajectory"])
    fps = float(msg.get("fps", 30))
    width = int(msg.get("width", session.render_cfg.width))
    height = int(msg.get("height", session.render_cfg.height))
    out_dir = app.state.export_root / f"{session.id}-{int(time.time() * 1000)}"
    job = ExportJob(
        trajectory=trajectory,
        manifest=session.scene.manifest,
        clouds=list(session.clouds),
        width=width, height=height, fps=fps,
        sink=image_sequence_sink(out_dir),
        foveation=session.fcfg,
        prompt=session.prompt,
    )
    session.export_running = True

    total = int(trajectory.duration * fps) + 1

    def progress(frames_done: int) -> None:
        if frames_done % EXPORT_PROGRESS_EVERY == 0:
            loop.call_soon_threadsafe(
                session.emit_event,
                make_export_progress(frames_done, total))

    async def run() -> None:
        try:
            result = await asyncio.to_thread(run_export, job, progress)
            session.emit_event(make_export_done(str(result.output),
                                                result.frame_count))
        except Exception as exc:  # noqa: BLE001 - forwarded as an error event
            session.emit_event(make_error(-1, "export_failed", str(exc)))
        finally:
            session.export_running = False

    loop.create_task(run())
