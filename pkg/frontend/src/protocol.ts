/**
 * Wire protocol shared with the server.
 *
 * Binary frame messages carry a 20-byte little-endian header:
 *   magic "S4DF" | frame_seq u32 | width u16 | height u16 |
 *   format u8 (0 png, 1 raw RGB8) | flags u8 (bit0 foveated) |
 *   reserved u16 | sim_time_ms u32
 * followed by the payload. Commands are JSON objects tagged by "type" and
 * carrying a client sequence number "seq"; the server answers every command
 * with exactly one ack or error echoing that number.
 */

export const HEADER_SIZE = 20;
export const FORMAT_PNG = 0;
export const FORMAT_RAW = 1;
export const FLAG_FOVEATED = 1;

export interface FrameHeader {
  frameSeq: number;
  width: number;
  height: number;
  format: number;
  flags: number;
  simTimeMs: number;
}

export function decodeFrameHeader(buffer: ArrayBuffer): {
  header: FrameHeader;
  payload: Uint8Array;
} {
  if (buffer.byteLength < HEADER_SIZE) {
    throw new Error(`frame message shorter than header (${buffer.byteLength})`);
  }
  const bytes = new Uint8Array(buffer);
  if (bytes[0] !== 0x53 || bytes[1] !== 0x34 || bytes[2] !== 0x44 || bytes[3] !== 0x46) {
    throw new Error("bad frame magic");
  }
  const view = new DataView(buffer);
  const header: FrameHeader = {
    frameSeq: view.getUint32(4, true),
    width: view.getUint16(8, true),
    height: view.getUint16(10, true),
    format: view.getUint8(12),
    flags: view.getUint8(13),
    simTimeMs: view.getUint32(16, true),
  };
  return { header, payload: bytes.subarray(HEADER_SIZE) };
}

// ---------------------------------------------------------------------------
// Commands (field order matters: it is the documented JSON shape)

export type Vec2 = [number, number];
export type Vec3 = [number, number, number];
export type Quat = [number, number, number, number]; // (w, x, y, z)

export type SelectionMode = "replace" | "add" | "subtract";

export type ShapePayload =
  | { kind: "rect"; p0: Vec2; p1: Vec2 }
  | { kind: "polygon"; vertices: Vec2[] }
  | { kind: "lasso"; vertices: Vec2[] }
  | { kind: "brush"; stroke: Vec2[]; radius: number }
  | { kind: "sphere"; screen: Vec2; radius: number }
  | { kind: "sphere"; center: Vec3; radius: number };

export interface TrajectoryKeyframe {
  t: number;
  position: Vec3;
  quaternion: Quat;
  vfov_deg: number;
}

export interface TrajectoryPayload {
  mode: "linear" | "catmull_rom";
  keyframes: TrajectoryKeyframe[];
}

export interface Command {
  type: string;
  seq: number;
  [key: string]: unknown;
}

export const commands = {
  ping: (seq: number): Command => ({ type: "Ping", seq }),
  seek: (seq: number, t: number): Command => ({ type: "Seek", seq, t }),
  play: (seq: number): Command => ({ type: "Play", seq }),
  pause: (seq: number): Command => ({ type: "Pause", seq }),
  setSpeed: (seq: number, speed: number): Command => ({ type: "SetSpeed", seq, speed }),
  setFps: (seq: number, fps: number): Command => ({ type: "SetFps", seq, fps }),
  setLoop: (seq: number, loop: boolean): Command => ({ type: "SetLoop", seq, loop }),
  setCamera: (seq: number, position: Vec3, quaternion: Quat, vfovDeg: number): Command =>
    ({ type: "SetCamera", seq, position, quaternion, vfov_deg: vfovDeg }),
  select: (seq: number, shape: ShapePayload, mode: SelectionMode): Command =>
    ({ type: "Select", seq, shape, mode }),
  editDelete: (seq: number): Command => ({ type: "Edit", seq, op: "delete" }),
  editTranslate: (seq: number, delta: Vec3): Command =>
    ({ type: "Edit", seq, op: "translate", delta }),
  undo: (seq: number): Command => ({ type: "Undo", seq }),
  setFoveation: (
    seq: number,
    fields: Partial<{
      enabled: boolean;
      threshold: number;
      downsample: number;
      blur_radius: number;
      beta: number;
      overlay: boolean;
    }>,
  ): Command => ({ type: "SetFoveation", seq, ...fields }),
  setPrompt: (seq: number, text: string): Command => ({ type: "SetPrompt", seq, text }),
  startExport: (seq: number, trajectory: TrajectoryPayload, fps: number): Command =>
    ({ type: "StartExport", seq, trajectory, fps }),
};

// ---------------------------------------------------------------------------
// Server events

export interface ServerEvent {
  type: string;
  [key: string]: unknown;
}

export function parseEvent(text: string): ServerEvent {
  const parsed: unknown = JSON.parse(text);
  if (typeof parsed !== "object" || parsed === null || !("type" in parsed)) {
    throw new Error("event without a type tag");
  }
  return parsed as ServerEvent;
}
