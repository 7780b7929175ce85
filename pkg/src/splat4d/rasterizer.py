"""3D Gaussian projection and depth-ordered alpha compositing.

Two render paths share one projection and one compositing semantics:
``render_reference`` is the slow, numpy-only oracle; ``render_tiled`` is the
fast tile-binned path. Both honor the same sigma_cutoff footprint, so their
outputs agree to floating-point noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .mathutil import quat_to_rotmat
from .splats import SplatCloud
from .trajectory import CameraPose


@dataclass(frozen=True)
class RenderConfig:
    width: int
    height: int
    tile_size: int = 16
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    sigma_cutoff: float = 3.0            # footprint radius in stddevs
    alpha_min: float = 1.0 / 255.0       # minimum contribution
    alpha_max: float = 0.99              # per-splat alpha clamp
    dilation: float = 0.3                # screen covariance diagonal add, px^2
    transmittance_floor: float = 1e-4    # early-exit threshold

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0 or self.tile_size <= 0:
            raise ValueError("width, height, tile_size must be positive")
        if not (0.0 < self.alpha_min < self.alpha_max < 1.0):
            raise ValueError("require 0 < alpha_min < alpha_max < 1")

    @property
    def tiles_x(self) -> int:
        return (self.width + self.tile_size - 1) // self.tile_size

    @property
    def tiles_y(self) -> int:
        return (self.height + self.tile_size - 1) // self.tile_size


@dataclass(frozen=True)
class ProjectedSplat:
    mean2d: np.ndarray        # (2,) screen px
    conic: np.ndarray         # (3,) inverse 2D covariance (a, b, c)
    depth: float              # camera-space depth > near
    color: np.ndarray         # (3,)
    alpha_base: float
    aabb: np.ndarray          # (4,) int pixel box (x0, y0, x1, y1), inclusive


@dataclass
class ProjectedCloud:
    """Struct-of-arrays projection result, in original splat order."""

    means2d: np.ndarray       # (M,2) float64
    conics: np.ndarray        # (M,3)
    depths: np.ndarray        # (M,)
    colors: np.ndarray        # (M,3)
    alphas: np.ndarray        # (M,)
    aabbs: np.ndarray         # (M,4) int32, clipped to the viewport
    source_indices: np.ndarray  # (M,) indices into the cloud

    def __len__(self) -> int:
        return len(self.depths)

    def reorder(self, perm: np.ndarray) -> "ProjectedCloud":
        return ProjectedCloud(
            means2d=self.means2d[perm], conics=self.conics[perm],
            depths=self.depths[perm], colors=self.colors[perm],
            alphas=self.alphas[perm], aabbs=self.aabbs[perm],
            source_indices=self.source_indices[perm])

    def splat(self, i: int) -> ProjectedSplat:
        return ProjectedSplat(
            mean2d=self.means2d[i], conic=self.conics[i],
            depth=float(self.depths[i]), color=self.colors[i],
            alpha_base=float(self.alphas[i]), aabb=self.aabbs[i])


@dataclass
class Framebuffer:
    rgb: np.ndarray            # (H,W,3) linear float64
    transmittance: np.ndarray  # (H,W) float64 in [0,1]

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    @property
    def width(self) -> int:
        return self.rgb.shape[1]


def focal_length(cfg: RenderConfig, pose: CameraPose) -> float:
    return cfg.height / (2.0 * math.tan(pose.vfov / 2.0))


def projection_jacobian(cam_point: np.ndarray, f: float) -> np.ndarray:
    """Jacobian of the pinhole projection at a camera-space point.

    Screen coords: u = cx + f*x/d, v = cy - f*y/d with d = -z (camera looks
    down -z, image y grows downward).
    """
    x, y, z = cam_point
    d = -z
    return np.array([
        [f / d, 0.0, f * x / (d * d)],
        [0.0, -f / d, -f * y / (d * d)],
    ])


def project_point(cam_point: np.ndarray, f: float, cx: float, cy: float) -> np.ndarray:
    x, y, z = cam_point
    d = -z
    return np.array([cx + f * x / d, cy - f * y / d])


def project_cloud(cloud: SplatCloud, pose: CameraPose, cfg: RenderConfig) -> ProjectedCloud:
    """Project every splat; culled splats are dropped, original order kept.

    Culls: depth <= near; opacity below alpha_min; screen covariance
    numerically singular (det < 1e-12); mean farther outside the viewport
    than sigma_cutoff times the footprint's max extent; footprint covering
    no pixel center.
    """
    n = len(cloud)
    if n == 0:
        return _empty_projection()
    f = focal_length(cfg, pose)
    w_mat = np.ascontiguousarray(quat_to_rotmat(pose.orientation).T)

    keep = np.zeros(n, dtype=np.uint8)
    means2d = np.zeros((n, 2))
    conics = np.zeros((n, 3))
    depths = np.zeros(n)
    aabbs = np.zeros((n, 4), dtype=np.int32)
    _kernels.project_splats(
        cloud.positions, cloud.rotations, cloud.scales, cloud.opacities,
        w_mat, pose.position, pose.near, f,
        cfg.width / 2.0, cfg.height / 2.0,
        cfg.width, cfg.height, cfg.sigma_cutoff, cfg.dilation, cfg.alpha_min,
        keep, means2d, conics, depths, aabbs)

    idx = np.nonzero(keep)[0]
    if idx.size == 0:
        return _empty_projection()
    return ProjectedCloud(
        means2d=means2d[idx], conics=conics[idx], depths=depths[idx],
        colors=cloud.colors[idx], alphas=cloud.opacities[idx],
        aabbs=aabbs[idx], source_indices=idx)


def _project_cloud_numpy(cloud: SplatCloud, pose: CameraPose,
                         cfg: RenderConfig) -> ProjectedCloud:
    """Vectorized numpy mirror of project_cloud; oracle for kernel tests."""
    f = focal_length(cfg, pose)
    cx = cfg.width / 2.0
    cy = cfg.height / 2.0

    w_mat = quat_to_rotmat(pose.orientation).T      # world -> camera rotation
    cam = (cloud.positions - pose.position) @ w_mat.T
    depths = -cam[:, 2]

    alive = (depths > pose.near) & (cloud.opacities >= cfg.alpha_min)
    idx = np.nonzero(alive)[0]
    if idx.size == 0:
        return _empty_projection()
    cam = cam[idx]
    depths = depths[idx]

    x, y = cam[:, 0], cam[:, 1]
    u = cx + f * x / depths
    v = cy - f * y / depths

    # 3D covariance in camera space: W R diag(s^2) R^T W^T
    rot = quat_to_rotmat(cloud.rotations[idx])
    m = rot * cloud.scales[idx][:, None, :]
    cov3d = m @ m.transpose(0, 2, 1)
    cov_cam = np.einsum("ab,nbc,dc->nad", w_mat, cov3d, w_mat)

    d2 = depths * depths
    jac = np.zeros((len(idx), 2, 3))
    jac[:, 0, 0] = f / depths
    jac[:, 0, 2] = f * x / d2
    jac[:, 1, 1] = -f / depths
    jac[:, 1, 2] = -f * y / d2

    cov2d = np.einsum("nij,njk,nlk->nil", jac, cov_cam, jac)
    a = cov2d[:, 0, 0] + cfg.dilation
    b = cov2d[:, 0, 1]
    c = cov2d[:, 1, 1] + cfg.dilation

    det = a * c - b * b
    nonsingular = det >= 1e-12

    lam_max = 0.5 * (a + c) + np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
    extent = cfg.sigma_cutoff * np.sqrt(np.maximum(lam_max, 0.0))
    margin = cfg.sigma_cutoff * extent
    dx_out = np.maximum(np.maximum(0.0 - u, u - cfg.width), 0.0)
    dy_out = np.maximum(np.maximum(0.0 - v, v - cfg.height), 0.0)
    in_view = dx_out * dx_out + dy_out * dy_out <= margin * margin

    rx = cfg.sigma_cutoff * np.sqrt(np.maximum(a, 0.0))
    ry = cfg.sigma_cutoff * np.sqrt(np.maximum(c, 0.0))
    ix0 = np.ceil(u - rx - 0.5).astype(np.int64)
    ix1 = np.floor(u + rx - 0.5).astype(np.int64)
    iy0 = np.ceil(v - ry - 0.5).astype(np.int64)
    iy1 = np.floor(v + ry - 0.5).astype(np.int64)
    covers = ((ix1 >= 0) & (iy1 >= 0) & (ix0 <= cfg.width - 1)
              & (iy0 <= cfg.height - 1) & (ix0 <= ix1) & (iy0 <= iy1))

    keep = nonsingular & in_view & covers
    if not np.any(keep):
        return _empty_projection()

    idx = idx[keep]
    u, v = u[keep], v[keep]
    a, b, c, det = a[keep], b[keep], c[keep], det[keep]
    conics = np.stack([c / det, -b / det, a / det], axis=1)
    aabbs = np.stack([
        np.clip(ix0[keep], 0, cfg.width - 1),
        np.clip(iy0[keep], 0, cfg.height - 1),
        np.clip(ix1[keep], 0, cfg.width - 1),
        np.clip(iy1[keep], 0, cfg.height - 1),
    ], axis=1).astype(np.int32)
    return ProjectedCloud(
        means2d=np.stack([u, v], axis=1),
        conics=conics,
        depths=depths[keep],
        colors=cloud.colors[idx],
        alphas=cloud.opacities[idx],
        aabbs=aabbs,
        source_indices=idx,
    )


def _empty_projection() -> ProjectedCloud:
    return ProjectedCloud(
        means2d=np.zeros((0, 2)), conics=np.zeros((0, 3)),
        depths=np.zeros(0), colors=np.zeros((0, 3)), alphas=np.zeros(0),
        aabbs=np.zeros((0, 4), dtype=np.int32),
        source_indices=np.zeros(0, dtype=np.int64))


def project(splat_cloud: SplatCloud, index: int, pose: CameraPose,
            cfg: RenderConfig) -> ProjectedSplat | None:
    """Project one splat of a cloud; None when culled."""
    proj = project_cloud(splat_cloud, pose, cfg)
    hits = np.nonzero(proj.source_indices == index)[0]
    if hits.size == 0:
        return None
    return proj.splat(int(hits[0]))


def sort_front_to_back(depths: np.ndarray) -> np.ndarray:
    """Ascending-depth permutation; ties keep original (stable) order."""
    return np.argsort(np.asarray(depths), kind="stable")


def bin_to_tiles(proj: ProjectedCloud, cfg: RenderConfig) -> list[np.ndarray]:
    """Per-tile index lists (into proj's order), tiles in row-major order."""
    offsets, indices = _kernels.bin_csr(
        np.ascontiguousarray(proj.aabbs), cfg.tile_size, cfg.tiles_x, cfg.tiles_y)
    return [indices[offsets[t]:offsets[t + 1]] for t in range(cfg.tiles_x * cfg.tiles_y)]


def prepare_sorted(cloud: SplatCloud, pose: CameraPose, cfg: RenderConfig):
    """Projection, global front-to-back sort, and CSR tile lists."""
    proj = project_cloud(cloud, pose, cfg)
    perm = sort_front_to_back(proj.depths)
    proj = proj.reorder(perm)
    offsets, indices = _kernels.bin_csr(
        np.ascontiguousarray(proj.aabbs), cfg.tile_size, cfg.tiles_x, cfg.tiles_y)
    return proj, offsets, indices


def render_reference(cloud: SplatCloud, pose: CameraPose, cfg: RenderConfig) -> Framebuffer:
    """Brute-force oracle: composite all projected splats front to back.

    Pure numpy, splat-major; kept independent of the tile kernels so it can
    arbitrate their output.
    """
    rgb = np.zeros((cfg.height, cfg.width, 3))
    trans = np.ones((cfg.height, cfg.width))

    proj = project_cloud(cloud, pose, cfg)
    order = sort_front_to_back(proj.depths)
    for j in order:
        x0, y0, x1, y1 = proj.aabbs[j]
        sub_t = trans[y0:y1 + 1, x0:x1 + 1]
        px = np.arange(x0, x1 + 1) + 0.5
        py = np.arange(y0, y1 + 1) + 0.5
        dx = px[None, :] - proj.means2d[j, 0]
        dy = py[:, None] - proj.means2d[j, 1]
        ca, cb, cc = proj.conics[j]
        q = ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy
        alpha = np.minimum(cfg.alpha_max, proj.alphas[j] * np.exp(-0.5 * q))
        active = (alpha >= cfg.alpha_min) & (sub_t >= cfg.transmittance_floor)
        w = np.where(active, sub_t * alpha, 0.0)
        rgb[y0:y1 + 1, x0:x1 + 1] += w[:, :, None] * proj.colors[j]
        sub_t *= np.where(active, 1.0 - alpha, 1.0)

    rgb += trans[:, :, None] * np.asarray(cfg.background)
    return Framebuffer(rgb=rgb, transmittance=trans)


def render_tiled(cloud: SplatCloud, pose: CameraPose, cfg: RenderConfig) -> Framebuffer:
    """Fast tile-binned renderer; matches render_reference within 1e-5."""
    proj, offsets, indices = prepare_sorted(cloud, pose, cfg)
    rgb = np.zeros((cfg.height, cfg.width, 3))
    trans = np.ones((cfg.height, cfg.width))
    ntiles = cfg.tiles_x * cfg.tiles_y
    tile_mask = np.ones(ntiles, dtype=np.uint8)
    tile_samples = np.zeros(ntiles, dtype=np.int64)
    _kernels.composite_tiles(
        cfg.width, cfg.height, cfg.tile_size, cfg.tiles_x,
        offsets, indices,
        proj.means2d, proj.conics, proj.colors, proj.alphas, proj.aabbs,
        tile_mask, cfg.alpha_min, cfg.alpha_max, cfg.transmittance_floor,
        rgb, trans, tile_samples)
    rgb += trans[:, :, None] * np.asarray(cfg.background)
    return Framebuffer(rgb=rgb, transmittance=trans)
