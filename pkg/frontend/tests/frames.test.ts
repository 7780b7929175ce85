/** Frame ordering: the display is monotone in frame_seq even when the
 * network delivers frames out of order. */

import { describe, expect, it } from "vitest";

import { FrameGate, backoffSeconds } from "../src/frames.js";
import { decodeFrameHeader, FLAG_FOVEATED, FORMAT_RAW } from "../src/protocol.js";
import { connectedHarness, encodeFrame } from "./helpers.js";

describe("frame gate", () => {
  it("accepts strictly increasing sequences only", () => {
    const gate = new FrameGate();
    expect(gate.accept(0)).toBe(true);
    expect(gate.accept(1)).toBe(true);
    expect(gate.accept(1)).toBe(false);
    expect(gate.accept(0)).toBe(false);
    expect(gate.accept(5)).toBe(true);
    expect(gate.accept(3)).toBe(false);
  });

  it("display stays monotone under shuffled delivery", () => {
    const { client, socket, frames } = connectedHarness();
    const shuffled = [0, 2, 1, 5, 3, 4, 7, 6, 9, 8];
    for (const seq of shuffled) {
      socket.emitBinary(encodeFrame(seq));
    }
    const displayed = frames.map((f) => f.seq);
    expect(displayed).toEqual([0, 2, 5, 7, 9]);
    for (let i = 1; i < displayed.length; i++) {
      expect(displayed[i]).toBeGreaterThan(displayed[i - 1]);
    }
    expect(client.frameGate.lastDisplayedSeq).toBe(9);
  });
});

describe("frame header decoding", () => {
  it("decodes the documented 20-byte layout", () => {
    const buffer = encodeFrame(7, 640, 360, FORMAT_RAW, FLAG_FOVEATED, 1500,
                               new Uint8Array([0xaa, 0xbb]));
    // golden byte check mirrors the server's fixture
    const bytes = new Uint8Array(buffer);
    expect([...bytes.subarray(0, 20)]).toEqual([
      0x53, 0x34, 0x44, 0x46,
      0x07, 0x00, 0x00, 0x00,
      0x80, 0x02,
      0x68, 0x01,
      0x01,
      0x01,
      0x00, 0x00,
      0xdc, 0x05, 0x00, 0x00,
    ]);
    const { header, payload } = decodeFrameHeader(buffer);
    expect(header).toEqual({
      frameSeq: 7, width: 640, height: 360, format: FORMAT_RAW,
      flags: FLAG_FOVEATED, simTimeMs: 1500,
    });
    expect([...payload]).toEqual([0xaa, 0xbb]);
  });

  it("rejects short buffers and bad magic", () => {
    expect(() => decodeFrameHeader(new ArrayBuffer(4))).toThrow();
    const bad = new Uint8Array(encodeFrame(0));
    bad[0] = 0x58;
    expect(() => decodeFrameHeader(bad.buffer)).toThrow(/magic/);
  });
});

describe("reconnect backoff", () => {
  it("doubles 1, 2, 4 and caps at 8 seconds", () => {
    expect([0, 1, 2, 3, 4, 5].map(backoffSeconds)).toEqual([1, 2, 4, 8, 8, 8]);
  });
});
