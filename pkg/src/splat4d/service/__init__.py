"""Live interaction surface: scene store, sessions, wire protocol, streaming."""

from .protocol import (FORMAT_PNG, FORMAT_RAW, FrameHeader, decode_frame_header,
                       encode_frame_message)
from .scenes import SceneRecord, SceneStore
from .session import Session, SessionManager, handle_command

__all__ = [
    "FORMAT_PNG", "FORMAT_RAW", "FrameHeader", "SceneRecord", "SceneStore",
    "Session", "SessionManager", "decode_frame_header", "encode_frame_message",
    "handle_command",
]
