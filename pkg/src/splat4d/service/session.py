"""Per-session state and the command dispatcher.

Commands are applied strictly in arrival order; every command yields exactly
one ack or error event carrying its client sequence number. Invalid payloads
leave the session untouched.
"""

from __future__ import annotations

import math
import secrets
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from ..foveation import FoveationConfig, ImportanceMap, heuristic_importance, smooth_map
from ..mathutil import quat_normalize, srgb_encode
from ..playback import PlaybackState, advance, frame_at, seek
from ..rasterizer import Framebuffer, RenderConfig, project_cloud, render_tiled
from ..foveation import render_foveated
from ..selection import (BrushShape, DeleteOp, EditHistory, EmptyHistoryError,
                         EmptySelectionError, LassoShape, PolygonShape,
                         RectShape, SelectionMask, SphereShape, StaleMaskError,
                         TranslateOp, DegenerateShapeError, select, apply_edit,
                         undo)
from ..synthetic import frame_cloud_pose
from ..trajectory import CameraPose, trajectory_from_json
from .protocol import make_ack, make_error
from .scenes import SceneRecord

DEFAULT_GRACE = 60.0


class ValidationFailed(ValueError):
    def __init__(self, code: str, message: str = "") -> None:
        super().__init__(message or code)
        self.code = code


@dataclass
class Session:
    id: str
    scene: SceneRecord
    clouds: list            # mutable per-frame clouds (edits swap entries)
    camera: CameraPose
    playback: PlaybackState
    render_cfg: RenderConfig
    fcfg: FoveationConfig = field(default_factory=FoveationConfig)
    prompt: str = ""
    selection: SelectionMask | None = None
    selection_frame: int | None = None
    history: EditHistory = field(default_factory=EditHistory)
    importance: ImportanceMap | None = None
    importance_source: str = "heuristic"
    use_provider_maps: bool = False    # an async poller owns session.importance
    last_fb: Framebuffer | None = None
    overlay_stats: bool = False
    export_running: bool = False
    state_rev: int = 0            # bumped by every mutating command
    event_sink: Callable[[dict], None] | None = None
    detached_at: float | None = None

    def touch(self) -> None:
        self.state_rev += 1

    def emit_event(self, event: dict) -> None:
        if self.event_sink is not None:
            self.event_sink(event)

    @property
    def current_frame(self) -> int:
        return frame_at(self.scene.manifest, self.playback.time)

    @property
    def current_cloud(self):
        return self.clouds[self.current_frame]

    def tick(self, wall_dt: float) -> None:
        self.playback = advance(self.playback, self.scene.manifest, wall_dt)

    def render_frame(self) -> tuple[np.ndarray, bool]:
        """Render the current frame; returns (rgb8, foveated flag).

        Without an external provider the importance map refreshes from the
        previous framebuffer through the session's temporal EMA, so a paused
        scene converges to a stable map instead of flickering. With a
        provider, an async poller owns session.importance and rendering just
        uses the latest smoothed map available (never blocking on it).
        """
        cfg = self.render_cfg
        cloud = self.current_cloud
        if self.fcfg.enabled:
            dims = (cfg.tiles_y, cfg.tiles_x)
            if self.use_provider_maps:
                imap = self.importance
                if imap is None or imap.grid.shape != dims:
                    imap = heuristic_importance(self.last_fb, dims)
            else:
                raw = heuristic_importance(self.last_fb, dims)
                imap = raw if self.importance is None else smooth_map(
                    self.importance, raw, self.fcfg.temporal_beta)
                self.importance = imap
            result = render_foveated(cloud, self.camera, imap, cfg, self.fcfg)
            fb = result.framebuffer
            foveated = True
        else:
            fb = render_tiled(cloud, self.camera, cfg)
            foveated = False
        self.last_fb = fb
        return srgb_encode(fb.rgb), foveated


class SessionManager:
    """Creates, reattaches, and expires sessions."""

    def __init__(self, grace: float = DEFAULT_GRACE,
                 clock: Callable[[], float] = time.monotonic) -> None:
        self.grace = grace
        self._clock = clock
        self._sessions: dict[str, Session] = {}

    def create(self, scene: SceneRecord, width: int, height: int,
               target_fps: float = 30.0) -> Session:
        session = Session(
            id=secrets.token_hex(8),
            scene=scene,
            clouds=list(scene.clouds),
            camera=frame_cloud_pose(scene.clouds[0]),
            playback=PlaybackState(target_fps=target_fps),
            render_cfg=RenderConfig(width=width, height=height),
        )
        self._sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session | None:
        self.reap()
        return self._sessions.get(session_id)

    def attach(self, session_id: str) -> Session | None:
        """Reattach within the grace period; clears the expiry clock."""
        session = self.get(session_id)
        if session is not None:
            session.detached_at = None
        return session

    def detach(self, session: Session) -> None:
        session.detached_at = self._clock()
        session.event_sink = None

    def reap(self) -> None:
        now = self._clock()
        expired = [sid for sid, s in self._sessions.items()
                   if s.detached_at is not None and now - s.detached_at > self.grace]
        for sid in expired:
            del self._sessions[sid]


# ---------------------------------------------------------------------------
# Payload parsing helpers


def _require_number(msg: dict, key: str, code: str) -> float:
    value = msg.get(key)
    if not isinstance(value, (int, float)) or isinstance(value, bool) \
            or not math.isfinite(value):
        raise ValidationFailed(code, f"{key} must be a finite number")
    return float(value)


def _require_vec(msg: dict, key: str, length: int, code: str) -> np.ndarray:
    value = msg.get(key)
    if (not isinstance(value, (list, tuple)) or len(value) != length
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                       and math.isfinite(v) for v in value)):
        raise ValidationFailed(code, f"{key} must be a list of {length} finite numbers")
    return np.asarray(value, dtype=np.float64)


def _parse_pose(msg: dict) -> CameraPose:
    position = _require_vec(msg, "position", 3, "invalid_pose")
    quat = _require_vec(msg, "quaternion", 4, "invalid_pose")
    norm = np.linalg.norm(quat)
    if norm < 1e-9:
        raise ValidationFailed("invalid_pose", "zero quaternion")
    vfov_deg = msg.get("vfov_deg", 60.0)
    if not isinstance(vfov_deg, (int, float)) or not 0.0 < vfov_deg < 180.0:
        raise ValidationFailed("invalid_pose", "vfov_deg must lie in (0,180)")
    return CameraPose(position=position, orientation=quat_normalize(quat),
                      vfov=math.radians(float(vfov_deg)))


def _parse_points(raw, code: str) -> tuple[tuple[float, float], ...]:
    if not isinstance(raw, (list, tuple)):
        raise ValidationFailed(code, "expected a list of [x,y] points")
    pts = []
    for p in raw:
        if (not isinstance(p, (list, tuple)) or len(p) != 2
                or not all(isinstance(v, (int, float)) and math.isfinite(v) for v in p)):
            raise ValidationFailed(code, "points must be [x,y] pairs")
        pts.append((float(p[0]), float(p[1])))
    return tuple(pts)


def _parse_shape(session: Session, payload) -> object:
    if not isinstance(payload, dict):
        raise ValidationFailed("invalid_shape", "shape must be an object")
    kind = payload.get("kind")
    try:
        if kind == "rect":
            p0 = _require_vec(payload, "p0", 2, "invalid_shape")
            p1 = _require_vec(payload, "p1", 2, "invalid_shape")
            return RectShape(p0=tuple(p0), p1=tuple(p1))
        if kind == "polygon":
            return PolygonShape(vertices=_parse_points(payload.get("vertices"),
                                                       "invalid_shape"))
        if kind == "lasso":
            return LassoShape(vertices=_parse_points(payload.get("vertices"),
                                                     "invalid_shape"))
        if kind == "brush":
            stroke = _parse_points(payload.get("stroke"), "invalid_shape")
            radius = _require_number(payload, "radius", "invalid_shape")
            return BrushShape(stroke=stroke, radius=radius)
        if kind == "sphere":
            radius = _require_number(payload, "radius", "invalid_shape")
            if "center" in payload:
                center = _require_vec(payload, "center", 3, "invalid_shape")
            else:
                screen = _require_vec(payload, "screen", 2, "invalid_shape")
                center = _pick_splat_center(session, screen)
            return SphereShape(center=tuple(center), radius=radius)
    except DegenerateShapeError as exc:
        raise ValidationFailed("invalid_shape", str(exc)) from exc
    raise ValidationFailed("invalid_shape", f"unknown shape kind {kind!r}")


def _pick_splat_center(session: Session, screen: np.ndarray) -> np.ndarray:
    """Cast a screen point to the nearest projected splat's world position
    (the client has no depth knowledge, so sphere picking lands server-side)."""
    cloud = session.current_cloud
    proj = project_cloud(cloud, session.camera, session.render_cfg)
    if len(proj) == 0:
        raise ValidationFailed("no_splat_under_cursor", "nothing to pick")
    d2 = np.sum((proj.means2d - screen) ** 2, axis=1)
    best = int(np.argmin(d2))
    return cloud.positions[proj.source_indices[best]]


# ---------------------------------------------------------------------------
# Command dispatch


def handle_command(session: Session, msg: dict,
                   export_launcher: Callable[[Session, dict], None] | None = None,
                   scene_lookup: Callable[[str], SceneRecord | None] | None = None,
                   ) -> dict:
    """Apply one command; returns the ack/error event for it."""
    seq = msg.get("seq", -1) if isinstance(msg.get("seq", -1), int) else -1
    tag = msg.get("type")
    try:
        return _dispatch(session, tag, msg, seq, export_launcher, scene_lookup)
    except ValidationFailed as exc:
        return make_error(seq, exc.code, str(exc))
    except StaleMaskError as exc:
        return make_error(seq, "stale_mask", str(exc))
    except EmptySelectionError as exc:
        return make_error(seq, "empty_selection", str(exc))
    except EmptyHistoryError as exc:
        return make_error(seq, "empty_history", str(exc))


def _dispatch(session: Session, tag: str | None, msg: dict, seq: int,
              export_launcher, scene_lookup) -> dict:
    manifest = session.scene.manifest

    if tag == "Ping":
        return make_ack(seq)

    if tag == "Seek":
        t = _require_number(msg, "t", "invalid_time")
        session.playback = seek(session.playback, manifest, t)
        session.touch()
        return make_ack(seq, time=session.playback.time)

    if tag == "Play":
        session.playback = replace(session.playback, playing=True)
        session.touch()
        return make_ack(seq)

    if tag == "Pause":
        session.playback = replace(session.playback, playing=False)
        session.touch()
        return make_ack(seq)

    if tag == "SetSpeed":
        speed = _require_number(msg, "speed", "speed_must_be_positive")
        if speed <= 0:
            raise ValidationFailed("speed_must_be_positive")
        session.playback = replace(session.playback, speed=speed)
        session.touch()
        return make_ack(seq)

    if tag == "SetFps":
        fps = _require_number(msg, "fps", "fps_must_be_positive")
        if fps <= 0:
            raise ValidationFailed("fps_must_be_positive")
        session.playback = replace(session.playback, target_fps=fps)
        session.touch()
        return make_ack(seq)

    if tag == "SetLoop":
        loop = msg.get("loop")
        if not isinstance(loop, bool):
            raise ValidationFailed("invalid_loop", "loop must be a boolean")
        session.playback = replace(session.playback, loop=loop)
        session.touch()
        return make_ack(seq)

    if tag == "SetCamera":
        session.camera = _parse_pose(msg)
        session.touch()
        return make_ack(seq)

    if tag == "Select":
        mode = msg.get("mode", "replace")
        if mode not in ("replace", "add", "subtract"):
            raise ValidationFailed("invalid_mode", f"unknown mode {mode!r}")
        shape = _parse_shape(session, msg.get("shape"))
        frame = session.current_frame
        cloud = session.clouds[frame]
        existing = session.selection if session.selection_frame == frame else None
        if mode != "replace" and existing is None:
            raise ValidationFailed("stale_mask",
                                   "no selection on the current frame to combine with")
        mask = select(cloud, session.camera, session.render_cfg, shape,
                      mode=mode, existing=existing)
        session.selection = mask
        session.selection_frame = frame
        session.touch()
        return make_ack(seq, selected=mask.count)

    if tag == "Edit":
        op_name = msg.get("op")
        if op_name == "delete":
            op = DeleteOp()
        elif op_name == "translate":
            op = TranslateOp(delta=tuple(_require_vec(msg, "delta", 3, "invalid_edit")))
        else:
            raise ValidationFailed("invalid_edit", f"unknown op {op_name!r}")
        frame = session.current_frame
        if session.selection is None or session.selection_frame != frame:
            raise ValidationFailed("no_selection", "select splats before editing")
        new_cloud, record = apply_edit(session.clouds[frame], session.selection, op)
        session.clouds[frame] = new_cloud
        session.history.push((frame, record))
        session.selection = None
        session.selection_frame = None
        session.touch()
        return make_ack(seq, splats=len(new_cloud))

    if tag == "Undo":
        frame, record = session.history.pop()
        shim = EditHistory()
        shim.push(record)
        session.clouds[frame] = undo(shim, session.clouds[frame])
        session.selection = None
        session.selection_frame = None
        session.touch()
        return make_ack(seq, splats=len(session.clouds[frame]))

    if tag == "SetFoveation":
        try:
            fcfg = FoveationConfig(
                threshold=float(msg.get("threshold", session.fcfg.threshold)),
                peripheral_downsample=int(msg.get(
                    "downsample", session.fcfg.peripheral_downsample)),
                blur_radius=int(msg.get("blur_radius", session.fcfg.blur_radius)),
                temporal_beta=float(msg.get("beta", session.fcfg.temporal_beta)),
                enabled=bool(msg.get("enabled", session.fcfg.enabled)),
            )
        except (TypeError, ValueError) as exc:
            raise ValidationFailed("invalid_foveation", str(exc)) from exc
        session.fcfg = fcfg
        if "overlay" in msg:
            if not isinstance(msg["overlay"], bool):
                raise ValidationFailed("invalid_foveation", "overlay must be a boolean")
            session.overlay_stats = msg["overlay"]
        session.touch()
        return make_ack(seq)

    if tag == "SetPrompt":
        text = msg.get("text")
        if not isinstance(text, str):
            raise ValidationFailed("invalid_prompt", "text must be a string")
        session.prompt = text
        session.touch()
        return make_ack(seq)

    if tag == "LoadScene":
        scene_id = msg.get("scene")
        record = scene_lookup(scene_id) if scene_lookup and isinstance(scene_id, str) \
            else None
        if record is None:
            raise ValidationFailed("unknown_scene", f"no scene {scene_id!r}")
        session.scene = record
        session.clouds = list(record.clouds)
        session.playback = replace(session.playback, time=0.0, playing=False)
        session.selection = None
        session.selection_frame = None
        session.history = EditHistory()
        session.importance = None
        session.last_fb = None
        session.camera = frame_cloud_pose(record.clouds[0])
        session.touch()
        return make_ack(seq)

    if tag == "StartExport":
        if session.export_running:
            raise ValidationFailed("export_busy", "an export is already running")
        if export_launcher is None:
            raise ValidationFailed("export_unavailable",
                                   "this endpoint cannot run exports")
        if not isinstance(msg.get("trajectory"), dict):
            raise ValidationFailed("invalid_export_params", "trajectory required")
        try:
            trajectory_from_json(msg["trajectory"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationFailed("invalid_export_params",
                                   f"bad trajectory: {exc}") from exc
        fps = msg.get("fps", 30)
        if not isinstance(fps, (int, float)) or fps <= 0:
            raise ValidationFailed("invalid_export_params", "fps must be positive")
        export_launcher(session, msg)
        return make_ack(seq)

    raise ValidationFailed("unknown_command", f"unknown command {tag!r}")
