import { ViewerClient, SocketLike } from "../src/client.js";
import { HEADER_SIZE } from "../src/protocol.js";

/** In-memory stand-in for a WebSocket connected to the server. */
export class MockSocket implements SocketLike {
  sent: string[] = [];
  closed = false;
  onopen: (() => void) | null = null;
  onmessage: ((event: { data: string | ArrayBuffer }) => void) | null = null;
  onclose: (() => void) | null = null;
  onerror: (() => void) | null = null;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }

  // --- test-side controls ---
  open(): void {
    this.onopen?.();
  }

  emit(obj: unknown): void {
    this.onmessage?.({ data: JSON.stringify(obj) });
  }

  emitBinary(buffer: ArrayBuffer): void {
    this.onmessage?.({ data: buffer });
  }

  dropConnection(): void {
    this.onclose?.();
  }
}

export interface Harness {
  client: ViewerClient;
  socket: MockSocket;
  sockets: MockSocket[];
  urls: string[];
  timers: { fn: () => void; ms: number }[];
  frames: { seq: number }[];
}

export const HELLO = {
  type: "hello", session: "sess-1", scene: "demo", width: 640, height: 360,
  format: "png", duration: 2.0, frames: 60, target_fps: 30,
};

/** Client wired to mock sockets and manual timers, connected through the
 * hello handshake. */
export function connectedHarness(
  options: { autoHello?: boolean } = {},
): Harness {
  const sockets: MockSocket[] = [];
  const urls: string[] = [];
  const timers: { fn: () => void; ms: number }[] = [];
  const frames: { seq: number }[] = [];
  const client = new ViewerClient("ws://test", "demo", {
    socketFactory: (url) => {
      urls.push(url);
      const socket = new MockSocket();
      sockets.push(socket);
      return socket;
    },
    setTimer: (fn, ms) => {
      timers.push({ fn, ms });
      return 0;
    },
    onFrame: (header) => frames.push({ seq: header.frameSeq }),
  });
  client.connect();
  const socket = sockets[0];
  socket.open();
  if (options.autoHello !== false) {
    socket.emit(HELLO);
  }
  return { client, socket, sockets, urls, timers, frames };
}

/** Encode a frame message the way the server does (little-endian header). */
export function encodeFrame(seq: number, width = 4, height = 4, format = 1,
                            flags = 0, simTimeMs = 0,
                            payload = new Uint8Array(0)): ArrayBuffer {
  const buffer = new ArrayBuffer(HEADER_SIZE + payload.length);
  const bytes = new Uint8Array(buffer);
  bytes.set([0x53, 0x34, 0x44, 0x46], 0); // "S4DF"
  const view = new DataView(buffer);
  view.setUint32(4, seq, true);
  view.setUint16(8, width, true);
  view.setUint16(10, height, true);
  view.setUint8(12, format);
  view.setUint8(13, flags);
  view.setUint16(14, 0, true);
  view.setUint32(16, simTimeMs, true);
  bytes.set(payload, HEADER_SIZE);
  return buffer;
}
