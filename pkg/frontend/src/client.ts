/** Connection management: hello handshake, command sending with client
 * sequence numbers, frame ordering, and bounded-backoff reconnect.
 *
 * The client never sends while disconnected; gestures fired during an outage
 * are dropped, not replayed (latest-wins, matching the server's streaming
 * policy).
 */

import { backoffSeconds, FrameGate } from "./frames.js";
import { Command, FrameHeader, ServerEvent, decodeFrameHeader, parseEvent } from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((event: { data: string | ArrayBuffer }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export type ConnectionStatus = "connecting" | "connected" | "reconnecting" | "closed";

export interface HelloInfo {
  session: string;
  scene: string;
  width: number;
  height: number;
  format: string;
  duration: number;
  frames: number;
  target_fps: number;
}

export interface ClientOptions {
  socketFactory?: SocketFactory;
  frameFormat?: "png" | "raw";
  setTimer?: (fn: () => void, ms: number) => unknown;
  onStatus?: (status: ConnectionStatus) => void;
  onHello?: (hello: HelloInfo) => void;
  onEvent?: (event: ServerEvent) => void;
  onFrame?: (header: FrameHeader, payload: Uint8Array) => void;
}

export class ViewerClient {
  status: ConnectionStatus = "closed";
  hello: HelloInfo | null = null;
  readonly frameGate = new FrameGate();

  private socket: SocketLike | null = null;
  private seq = 0;
  private attempt = 0;
  private sessionId: string | null = null;
  private stopped = false;

  constructor(
    private readonly baseUrl: string,
    private readonly sceneId: string,
    private readonly options: ClientOptions = {},
  ) {}

  nextSeq(): number {
    return this.seq++;
  }

  get connected(): boolean {
    return this.status === "connected";
  }

  connect(): void {
    this.stopped = false;
    this.open();
  }

  close(): void {
    this.stopped = true;
    this.setStatus("closed");
    this.socket?.close();
    this.socket = null;
  }

  /** Sends a command; silently dropped while disconnected. */
  send(command: Command): boolean {
    if (!this.connected || this.socket === null) {
      return false;
    }
    this.socket.send(JSON.stringify(command));
    return true;
  }

  private url(): string {
    const session = this.sessionId ? `&session=${this.sessionId}` : "";
    return `${this.baseUrl}/session?scene=${encodeURIComponent(this.sceneId)}${session}`;
  }

  private setStatus(status: ConnectionStatus): void {
    this.status = status;
    this.options.onStatus?.(status);
  }

  private open(): void {
    const factory = this.options.socketFactory
      ?? ((url: string) => new WebSocket(url) as unknown as SocketLike);
    this.setStatus(this.attempt === 0 ? "connecting" : "reconnecting");
    const socket = factory(this.url());
    this.socket = socket;

    socket.onopen = () => {
      socket.send(JSON.stringify({
        type: "hello",
        format: this.options.frameFormat ?? "png",
      }));
    };
    socket.onmessage = (event) => this.handleMessage(event.data);
    socket.onerror = () => { /* close follows; backoff handles it */ };
    socket.onclose = () => {
      this.socket = null;
      if (this.stopped) return;
      this.setStatus("reconnecting");
      const delay = backoffSeconds(this.attempt);
      this.attempt += 1;
      const timer = this.options.setTimer
        ?? ((fn: () => void, ms: number) => setTimeout(fn, ms));
      timer(() => {
        if (!this.stopped) this.open();
      }, delay * 1000);
    };
  }

  private handleMessage(data: string | ArrayBuffer): void {
    if (typeof data === "string") {
      const event = parseEvent(data);
      if (event.type === "hello") {
        this.hello = event as unknown as HelloInfo;
        this.sessionId = this.hello.session;
        this.attempt = 0;
        this.frameGate.reset();
        this.setStatus("connected");
        this.options.onHello?.(this.hello);
      } else {
        this.options.onEvent?.(event);
      }
      return;
    }
    const { header, payload } = decodeFrameHeader(data);
    if (this.frameGate.accept(header.frameSeq)) {
      this.options.onFrame?.(header, payload);
    }
  }
}
