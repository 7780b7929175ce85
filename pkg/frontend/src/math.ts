/** Small vector/quaternion helpers matching the server's camera convention:
 * right-handed, camera x right / y up / forward along -z, quaternions
 * (w, x, y, z). */

import type { Quat, Vec3 } from "./protocol.js";

export function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

export function add(a: Vec3, b: Vec3): Vec3 {
  return [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
}

export function scale(a: Vec3, s: number): Vec3 {
  return [a[0] * s, a[1] * s, a[2] * s];
}

export function norm(a: Vec3): number {
  return Math.hypot(a[0], a[1], a[2]);
}

export function normalize(a: Vec3): Vec3 {
  const n = norm(a);
  return [a[0] / n, a[1] / n, a[2] / n];
}

export function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

/** Rotation matrix (columns = camera axes in world space) to quaternion,
 * Shepperd's method, w kept non-negative. */
export function matrixToQuat(m: number[][]): Quat {
  const trace = m[0][0] + m[1][1] + m[2][2];
  let q: Quat;
  if (trace > 0) {
    const s = Math.sqrt(trace + 1) * 2;
    q = [0.25 * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s,
         (m[1][0] - m[0][1]) / s];
  } else if (m[0][0] >= m[1][1] && m[0][0] >= m[2][2]) {
    const s = Math.sqrt(1 + m[0][0] - m[1][1] - m[2][2]) * 2;
    q = [(m[2][1] - m[1][2]) / s, 0.25 * s, (m[0][1] + m[1][0]) / s,
         (m[0][2] + m[2][0]) / s];
  } else if (m[1][1] >= m[2][2]) {
    const s = Math.sqrt(1 + m[1][1] - m[0][0] - m[2][2]) * 2;
    q = [(m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, 0.25 * s,
         (m[1][2] + m[2][1]) / s];
  } else {
    const s = Math.sqrt(1 + m[2][2] - m[0][0] - m[1][1]) * 2;
    q = [(m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s,
         (m[1][2] + m[2][1]) / s, 0.25 * s];
  }
  if (q[0] < 0) q = [-q[0], -q[1], -q[2], -q[3]];
  const n = Math.hypot(q[0], q[1], q[2], q[3]);
  // + 0 folds negative zeros so identity comes out as exactly [1, 0, 0, 0]
  return [q[0] / n + 0, q[1] / n + 0, q[2] / n + 0, q[3] / n + 0];
}

/** Orientation quaternion for a camera at `eye` looking at `target`. */
export function lookAtQuat(eye: Vec3, target: Vec3, up: Vec3 = [0, 1, 0]): Quat {
  const forward = normalize(sub(target, eye));
  const right = normalize(cross(forward, up));
  const trueUp = cross(right, forward);
  // columns: right, up, -forward
  return matrixToQuat([
    [right[0], trueUp[0], -forward[0]],
    [right[1], trueUp[1], -forward[1]],
    [right[2], trueUp[2], -forward[2]],
  ]);
}

/** Orbit offset: yaw about +y from the +z axis, pitch upward. */
export function sphericalOffset(yawRad: number, pitchRad: number,
                                distance: number): Vec3 {
  const cp = Math.cos(pitchRad);
  return [
    distance * cp * Math.sin(yawRad),
    distance * Math.sin(pitchRad),
    distance * cp * Math.cos(yawRad),
  ];
}
