import { describe, expect, it } from "vitest";

import { CommandThrottle, defaultOrbit, orbitDrag, orbitEye, orbitZoom,
         PITCH_LIMIT_RAD } from "../src/gestures.js";
import { lookAtQuat, sphericalOffset } from "../src/math.js";
import { Command } from "../src/protocol.js";

describe("orbit math", () => {
  it("canonical front view: eye on +z, identity quaternion", () => {
    const orbit = defaultOrbit([0, 0, 0], 3);
    expect(orbitEye(orbit)).toEqual([0, 0, 3]);
    expect(lookAtQuat([0, 0, 3], [0, 0, 0])).toEqual([1, 0, 0, 0]);
  });

  it("pitch clamps at +-89 degrees", () => {
    let orbit = defaultOrbit();
    orbit = orbitDrag(orbit, 0, 1e9);
    expect(orbit.pitchRad).toBe(PITCH_LIMIT_RAD);
    orbit = orbitDrag(orbit, 0, -1e9);
    expect(orbit.pitchRad).toBe(-PITCH_LIMIT_RAD);
  });

  it("wheel scales distance by 1.1 per notch", () => {
    let orbit = defaultOrbit([0, 0, 0], 2);
    orbit = orbitZoom(orbit, -1);       // zoom out one notch
    expect(orbit.distance).toBeCloseTo(2.2, 12);
    orbit = orbitZoom(orbit, 2);        // zoom in two notches
    expect(orbit.distance).toBeCloseTo(2.2 / 1.21, 12);
  });

  it("spherical offset follows the documented convention", () => {
    expect(sphericalOffset(0, 0, 1)[2]).toBeCloseTo(1, 12);
    const onX = sphericalOffset(Math.PI / 2, 0, 1);
    expect(onX[0]).toBeCloseTo(1, 12);
    expect(onX[1]).toBeCloseTo(0, 12);
    const up = sphericalOffset(0, Math.PI / 2, 1);
    expect(up[1]).toBeCloseTo(1, 12);
  });

  it("target offsets translate the eye", () => {
    const orbit = defaultOrbit([5, -1, 2], 3);
    expect(orbitEye(orbit)).toEqual([5, -1, 5]);
  });
});

describe("command throttle", () => {
  it("enforces the rate and keeps the latest command", () => {
    let now = 0;
    const sent: Command[] = [];
    const throttle = new CommandThrottle((c) => sent.push(c), 10, () => now);

    throttle.offer({ type: "SetCamera", seq: 0 });
    throttle.offer({ type: "SetCamera", seq: 1 });   // within 100ms: held
    throttle.offer({ type: "SetCamera", seq: 2 });   // replaces held
    expect(sent.map((c) => c.seq)).toEqual([0]);

    now = 0.05;
    throttle.flush();                                // still too soon
    expect(sent.length).toBe(1);

    now = 0.11;
    throttle.flush();                                // latest-wins emit
    expect(sent.map((c) => c.seq)).toEqual([0, 2]);

    now = 0.4;
    throttle.offer({ type: "SetCamera", seq: 3 });   // interval elapsed
    expect(sent.map((c) => c.seq)).toEqual([0, 2, 3]);
  });

  it("zero drag produces no command at the driver level", () => {
    // orbitDrag with zero deltas returns an identical pose; the DOM layer
    // only offers a command on actual pointer movement, so nothing is sent
    const orbit = defaultOrbit();
    const same = orbitDrag(orbit, 0, 0);
    expect(same).toEqual(orbit);
  });
});
