"""Deterministic synthetic scenes for benchmarks and fixtures."""

from __future__ import annotations

import numpy as np

from .mathutil import quat_normalize
from .splats import SplatCloud
from .trajectory import CameraPose, look_at


def make_cloud(n: int, seed: int = 0, extent: float = 1.0,
               scale_range: tuple[float, float] = (0.01, 0.08),
               distribution: str = "normal") -> SplatCloud:
    """Random splat cloud: a Gaussian ball or a uniform slab.

    The uniform slab spreads splats evenly over a wide, shallow box so that,
    viewed head-on, rendering work distributes across the whole screen; use
    it for foveation cost benchmarks.
    """
    rng = np.random.default_rng(seed)
    if distribution == "normal":
        positions = rng.normal(0.0, extent / 2.0, size=(n, 3))
    elif distribution == "uniform":
        positions = rng.uniform(-extent, extent, size=(n, 3))
        positions[:, 2] *= 0.2
    else:
        raise ValueError(f"unknown distribution {distribution!r}")
    rotations = quat_normalize(rng.normal(size=(n, 4)))
    lo, hi = scale_range
    scales = np.exp(rng.uniform(np.log(lo * extent), np.log(hi * extent), size=(n, 3)))
    opacities = rng.uniform(0.3, 0.95, size=n)
    colors = rng.uniform(0.05, 0.95, size=(n, 3))
    return SplatCloud(positions=positions, rotations=rotations, scales=scales,
                      opacities=opacities, colors=colors)


def benchmark_scene(n: int = 100_000, seed: int = 7) -> SplatCloud:
    """Screen-filling uniform scene for the foveation cost benchmark."""
    return make_cloud(n, seed=seed, extent=2.0, scale_range=(0.005, 0.03),
                      distribution="uniform")


def frame_cloud_pose(cloud: SplatCloud, distance_factor: float = 2.5) -> CameraPose:
    """Camera looking at the cloud center from a distance framing its bounds."""
    bmin, bmax = cloud.bounds
    center = (bmin + bmax) / 2.0
    radius = max(float(np.linalg.norm(bmax - bmin)) / 2.0, 1e-3)
    eye = center + np.array([0.0, 0.0, distance_factor * radius])
    return look_at(eye, center)


def random_pose(cloud: SplatCloud, seed: int = 0,
                distance_factor: float = 2.5) -> CameraPose:
    """Random orbit viewpoint around the cloud, deterministic per seed."""
    rng = np.random.default_rng(seed)
    bmin, bmax = cloud.bounds
    center = (bmin + bmax) / 2.0
    radius = max(float(np.linalg.norm(bmax - bmin)) / 2.0, 1e-3)
    yaw = rng.uniform(0.0, 2.0 * np.pi)
    pitch = rng.uniform(-0.9, 0.9)
    direction = np.array([
        np.cos(pitch) * np.sin(yaw),
        np.sin(pitch),
        np.cos(pitch) * np.cos(yaw),
    ])
    eye = center + distance_factor * radius * direction
    return look_at(eye, center)
