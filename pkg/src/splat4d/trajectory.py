"""Pinhole camera model and keyframed camera-path interpolation.

Positions follow centripetal Catmull-Rom (or piecewise linear), orientations
shortest-path slerp between the bracketing keyframes, and vfov/near/far
interpolate linearly. Times outside the keyframe range clamp.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, replace

import numpy as np

from .mathutil import quat_normalize, quat_to_rotmat, rotmat_to_quat, slerp

DEFAULT_VFOV = math.radians(60.0)
DEFAULT_NEAR = 0.01
DEFAULT_FAR = 1000.0


class EmptyTrajectoryError(ValueError):
    pass


class InvalidFpsError(ValueError):
    pass


class DegenerateBasisError(ValueError):
    pass


@dataclass(frozen=True)
class CameraPose:
    """Pinhole camera: position + camera-to-world orientation quaternion.

    Camera space is right-handed with x right, y up, forward along -z.
    """

    position: np.ndarray                 # (3,) world units
    orientation: np.ndarray              # (4,) unit quaternion (w,x,y,z)
    vfov: float = DEFAULT_VFOV           # vertical field of view, radians
    near: float = DEFAULT_NEAR
    far: float = DEFAULT_FAR

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        q = np.asarray(self.orientation, dtype=np.float64)
        if abs(np.linalg.norm(q) - 1.0) > 1e-6:
            raise ValueError("orientation must be a unit quaternion within 1e-6")
        object.__setattr__(self, "orientation", q)
        if not (0.0 < self.vfov < math.pi):
            raise ValueError("vfov must lie in (0, pi)")
        if not (0.0 < self.near < self.far):
            raise ValueError("require 0 < near < far")


@dataclass(frozen=True)
class Keyframe:
    pose: CameraPose
    time: float   # seconds >= 0


@dataclass(frozen=True)
class Trajectory:
    keyframes: tuple[Keyframe, ...]
    mode: str = "catmull_rom"            # "linear" | "catmull_rom"

    def __post_init__(self) -> None:
        object.__setattr__(self, "keyframes", tuple(self.keyframes))
        if not self.keyframes:
            raise EmptyTrajectoryError("trajectory needs at least one keyframe")
        times = [k.time for k in self.keyframes]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("keyframe times must strictly increase")
        if self.mode not in ("linear", "catmull_rom"):
            raise ValueError(f"unknown interpolation mode {self.mode!r}")

    @property
    def duration(self) -> float:
        return self.keyframes[-1].time - self.keyframes[0].time


def _catmull_rom(p0, p1, p2, p3, u: float) -> np.ndarray:
    """Centripetal Catmull-Rom (Barry-Goldman) through p1..p2 at u in [0,1].

    Zero-length knot intervals (duplicated end knots) fall back to unit
    spacing, which keeps the pyramid exact at the endpoints.
    """
    alpha = 0.5

    def knot_delta(a, b):
        d = float(np.linalg.norm(b - a)) ** alpha
        return d if d > 0.0 else 1.0

    t0 = 0.0
    t1 = t0 + knot_delta(p0, p1)
    t2 = t1 + knot_delta(p1, p2)
    t3 = t2 + knot_delta(p2, p3)
    s = t1 + u * (t2 - t1)

    a1 = ((t1 - s) * p0 + (s - t0) * p1) / (t1 - t0)
    a2 = ((t2 - s) * p1 + (s - t1) * p2) / (t2 - t1)
    a3 = ((t3 - s) * p2 + (s - t2) * p3) / (t3 - t2)
    b1 = ((t2 - s) * a1 + (s - t0) * a2) / (t2 - t0)
    b2 = ((t3 - s) * a2 + (s - t1) * a3) / (t3 - t1)
    return ((t2 - s) * b1 + (s - t1) * b2) / (t2 - t1)


def interpolate(traj: Trajectory, t: float) -> CameraPose:
    """Camera pose along the trajectory at time t (clamped to the key range)."""
    keys = traj.keyframes
    times = [k.time for k in keys]
    if t <= times[0]:
        return keys[0].pose
    if t >= times[-1]:
        return keys[-1].pose
    seg = bisect_right(times, t) - 1
    if times[seg] == t:
        return keys[seg].pose

    k0, k1 = keys[seg], keys[seg + 1]
    u = (t - k0.time) / (k1.time - k0.time)

    if traj.mode == "linear":
        position = (1.0 - u) * k0.pose.position + u * k1.pose.position
    else:
        p_prev = keys[seg - 1].pose.position if seg > 0 else k0.pose.position
        p_next = keys[seg + 2].pose.position if seg + 2 < len(keys) else k1.pose.position
        position = _catmull_rom(p_prev, k0.pose.position, k1.pose.position, p_next, u)

    orientation = slerp(k0.pose.orientation, k1.pose.orientation, u)
    vfov = (1.0 - u) * k0.pose.vfov + u * k1.pose.vfov
    near = (1.0 - u) * k0.pose.near + u * k1.pose.near
    far = (1.0 - u) * k0.pose.far + u * k1.pose.far
    return CameraPose(position=position, orientation=orientation,
                      vfov=vfov, near=near, far=far)


def sample_uniform(traj: Trajectory, fps: float) -> list[CameraPose]:
    """Poses at first.time + k/fps for k = 0..floor(duration*fps)."""
    if fps <= 0:
        raise InvalidFpsError("fps must be positive")
    t0 = traj.keyframes[0].time
    count = int(math.floor(traj.duration * fps)) + 1
    return [interpolate(traj, t0 + k / fps) for k in range(count)]


def look_at(eye, target, up=(0.0, 1.0, 0.0), *,
            vfov: float = DEFAULT_VFOV, near: float = DEFAULT_NEAR,
            far: float = DEFAULT_FAR) -> CameraPose:
    """Pose at eye with the camera's -z axis pointing at target."""
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)

    forward = target - eye
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise DegenerateBasisError("eye and target coincide")
    forward /= norm
    right = np.cross(forward, up)
    rnorm = np.linalg.norm(right)
    if rnorm < 1e-9:
        raise DegenerateBasisError("up is parallel to the view direction")
    right /= rnorm
    true_up = np.cross(right, forward)

    rot = np.stack([right, true_up, -forward], axis=1)   # columns: x, y, z axes
    return CameraPose(position=eye, orientation=rotmat_to_quat(rot),
                      vfov=vfov, near=near, far=far)


def camera_to_world(pose: CameraPose) -> np.ndarray:
    """4x4 rigid camera-to-world transform."""
    m = np.eye(4)
    m[:3, :3] = quat_to_rotmat(pose.orientation)
    m[:3, 3] = pose.position
    return m


def view_transform(pose: CameraPose) -> np.ndarray:
    """4x4 world-to-camera matrix (inverse of camera_to_world)."""
    r = quat_to_rotmat(pose.orientation)
    m = np.eye(4)
    m[:3, :3] = r.T
    m[:3, 3] = -r.T @ pose.position
    return m


# ---------------------------------------------------------------------------
# Trajectory file format


def trajectory_from_json(doc: dict | str) -> Trajectory:
    """Load `{ "mode": ..., "keyframes": [ { "t", "position", "quaternion",
    "vfov_deg", ... } ] }`."""
    if isinstance(doc, str):
        doc = json.loads(doc)
    mode = doc.get("mode", "catmull_rom")
    keyframes = []
    for kf in doc.get("keyframes", []):
        pose = CameraPose(
            position=np.asarray(kf["position"], dtype=np.float64),
            orientation=quat_normalize(np.asarray(kf["quaternion"], dtype=np.float64)),
            vfov=math.radians(float(kf.get("vfov_deg", 60.0))),
            near=float(kf.get("near", DEFAULT_NEAR)),
            far=float(kf.get("far", DEFAULT_FAR)),
        )
        keyframes.append(Keyframe(pose=pose, time=float(kf["t"])))
    return Trajectory(keyframes=tuple(keyframes), mode=mode)


def trajectory_to_json(traj: Trajectory) -> dict:
    return {
        "mode": traj.mode,
        "keyframes": [
            {
                "t": k.time,
                "position": [float(v) for v in k.pose.position],
                "quaternion": [float(v) for v in k.pose.orientation],
                "vfov_deg": math.degrees(k.pose.vfov),
                "near": k.pose.near,
                "far": k.pose.far,
            }
            for k in traj.keyframes
        ],
    }
