/** Orbit-camera gestures: drag to yaw/pitch, wheel to dolly. Every gesture
 * maps onto one documented SetCamera command. */

import { add, lookAtQuat, sphericalOffset } from "./math.js";
import { Command, Vec3, commands } from "./protocol.js";

export const ORBIT_RADIANS_PER_PX = 0.005;
export const PITCH_LIMIT_RAD = (89 * Math.PI) / 180;
export const ZOOM_BASE = 1.1;

export interface OrbitState {
  target: Vec3;
  distance: number;
  yawRad: number;
  pitchRad: number;
  vfovDeg: number;
}

export function defaultOrbit(target: Vec3 = [0, 0, 0], distance = 3): OrbitState {
  return { target, distance, yawRad: 0, pitchRad: 0, vfovDeg: 60 };
}

export function orbitDrag(state: OrbitState, dxPx: number, dyPx: number): OrbitState {
  const yawRad = state.yawRad + dxPx * ORBIT_RADIANS_PER_PX;
  let pitchRad = state.pitchRad + dyPx * ORBIT_RADIANS_PER_PX;
  pitchRad = Math.min(Math.max(pitchRad, -PITCH_LIMIT_RAD), PITCH_LIMIT_RAD);
  return { ...state, yawRad, pitchRad };
}

export function orbitZoom(state: OrbitState, notches: number): OrbitState {
  return { ...state, distance: state.distance * Math.pow(ZOOM_BASE, -notches) };
}

export function orbitEye(state: OrbitState): Vec3 {
  return add(state.target, sphericalOffset(state.yawRad, state.pitchRad, state.distance));
}

export function orbitCameraCommand(seq: number, state: OrbitState): Command {
  const eye = orbitEye(state);
  return commands.setCamera(seq, eye, lookAtQuat(eye, state.target), state.vfovDeg);
}

/** Latest-wins rate limiter for camera commands (at most maxPerSecond). */
export class CommandThrottle {
  private lastSent = -Infinity;
  private pending: Command | null = null;

  constructor(
    private readonly send: (command: Command) => void,
    public maxPerSecond: number,
    private readonly now: () => number = () => performance.now() / 1000,
  ) {}

  offer(command: Command): void {
    const t = this.now();
    if (t - this.lastSent >= 1 / this.maxPerSecond) {
      this.lastSent = t;
      this.pending = null;
      this.send(command);
    } else {
      this.pending = command;
    }
  }

  /** Emit a deferred command once the interval has elapsed (call on ticks). */
  flush(): void {
    if (this.pending === null) return;
    const t = this.now();
    if (t - this.lastSent >= 1 / this.maxPerSecond) {
      this.lastSent = t;
      const command = this.pending;
      this.pending = null;
      this.send(command);
    }
  }
}
