"""Wire protocol: binary frame messages, JSON commands and events.

Frame messages are binary with a fixed 20-byte little-endian header:

    offset  size  field
    0       4     magic "S4DF"
    4       4     frame_seq   (u32, strictly increasing per connection)
    8       2     width       (u16)
    10      2     height      (u16)
    12      1     format      (u8: 0 = PNG, 1 = raw RGB8)
    13      1     flags       (u8: bit0 = foveated)
    14      2     reserved    (u16, zero)
    16      4     sim_time_ms (u32, playback time, wraps)

followed by the payload. Commands are JSON objects with a "type" tag and a
client sequence number "seq"; every command yields exactly one ack or error
event echoing that number.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

FRAME_MAGIC = b"S4DF"
_HEADER = struct.Struct("<4sIHHBBHI")
HEADER_SIZE = _HEADER.size          # 20 bytes

FORMAT_PNG = 0
FORMAT_RAW = 1
FLAG_FOVEATED = 1

COMMAND_TYPES = frozenset({
    "LoadScene", "SetCamera", "Seek", "Play", "Pause", "SetSpeed", "SetFps",
    "SetLoop", "Select", "Edit", "Undo", "SetFoveation", "SetPrompt",
    "StartExport", "Ping",
})


class ProtocolError(ValueError):
    pass


class UnknownCommandError(ProtocolError):
    pass


@dataclass(frozen=True)
class FrameHeader:
    frame_seq: int
    width: int
    height: int
    format: int          # FORMAT_PNG | FORMAT_RAW
    flags: int
    sim_time_ms: int


def encode_frame_message(header: FrameHeader, payload: bytes) -> bytes:
    return _HEADER.pack(
        FRAME_MAGIC, header.frame_seq & 0xFFFFFFFF,
        header.width, header.height, header.format, header.flags, 0,
        header.sim_time_ms & 0xFFFFFFFF) + payload


def decode_frame_header(data: bytes) -> tuple[FrameHeader, bytes]:
    if len(data) < HEADER_SIZE:
        raise ProtocolError(f"frame message shorter than header ({len(data)} bytes)")
    magic, seq, width, height, fmt, flags, _reserved, sim_ms = \
        _HEADER.unpack_from(data, 0)
    if magic != FRAME_MAGIC:
        raise ProtocolError(f"bad frame magic {magic!r}")
    header = FrameHeader(frame_seq=seq, width=width, height=height,
                         format=fmt, flags=flags, sim_time_ms=sim_ms)
    return header, data[HEADER_SIZE:]


def parse_command(msg: dict) -> tuple[str, int]:
    """Validate the envelope; returns (type, seq). Payload checks happen in
    the session dispatcher."""
    if not isinstance(msg, dict):
        raise ProtocolError("command must be a JSON object")
    seq = msg.get("seq", -1)
    if not isinstance(seq, int):
        raise ProtocolError("seq must be an integer")
    tag = msg.get("type")
    if tag not in COMMAND_TYPES:
        raise UnknownCommandError(f"unknown command {tag!r}")
    return tag, seq


# ---------------------------------------------------------------------------
# Event builders


def make_ack(seq: int, **extra) -> dict:
    evt = {"type": "ack", "seq": seq}
    evt.update(extra)
    return evt


def make_error(seq: int, code: str, message: str = "") -> dict:
    return {"type": "error", "seq": seq, "code": code, "message": message}


def make_export_progress(frames_done: int, frame_count: int) -> dict:
    return {"type": "export_progress", "frames_done": frames_done,
            "frame_count": frame_count}


def make_export_done(output: str, frames: int) -> dict:
    return {"type": "export_done", "output": output, "frames": frames}


def make_diagnostic(message: str) -> dict:
    return {"type": "diagnostic", "message": message}


def make_stats(**payload) -> dict:
    evt = {"type": "stats"}
    evt.update(payload)
    return evt
