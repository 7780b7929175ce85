"""Importance-map-guided adaptive rendering.

Foveal tiles composite at full precision; peripheral tiles composite on a
k-times-downsampled sample grid, get bilinearly upsampled, and receive a box
blur confined to peripheral pixels. Importance maps come from an external
vision-language provider when configured, with a deterministic center-prior /
contrast heuristic as total fallback.
"""

from __future__ import annotations

import base64
import os
import time
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .rasterizer import Framebuffer, RenderConfig, prepare_sorted
from .splats import SplatCloud
from .trajectory import CameraPose

CENTER_PRIOR_SIGMA = 0.35
LUMA_WEIGHTS = np.array([0.2126, 0.7152, 0.0722])

IMPORTANCE_PROVIDER_URL_ENV = "IMPORTANCE_PROVIDER_URL"


class DimMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class ImportanceMap:
    """Saliency grid in [0,1]; dims match the render tile grid."""

    grid: np.ndarray   # (rows, cols) float64

    def __post_init__(self) -> None:
        g = np.ascontiguousarray(self.grid, dtype=np.float64)
        if g.ndim != 2 or g.size == 0:
            raise ValueError("importance grid must be a non-empty 2D array")
        if not np.all(np.isfinite(g)) or g.min() < 0.0 or g.max() > 1.0:
            raise ValueError("importance values must lie in [0,1]")
        g.setflags(write=False)
        object.__setattr__(self, "grid", g)

    @property
    def rows(self) -> int:
        return self.grid.shape[0]

    @property
    def cols(self) -> int:
        return self.grid.shape[1]


@dataclass(frozen=True)
class FoveationConfig:
    threshold: float = 0.5             # tau: foveal iff importance >= tau
    peripheral_downsample: int = 4     # k, per axis, in {2, 4}
    blur_radius: int = 4               # box radius, full-resolution px
    temporal_beta: float = 0.7         # EMA weight on the previous map
    enabled: bool = True

    def __post_init__(self) -> None:
        if not (0.0 <= self.threshold <= 1.0):
            raise ValueError("threshold must lie in [0,1]")
        if self.peripheral_downsample not in (2, 4):
            raise ValueError("peripheral_downsample must be 2 or 4")
        if self.blur_radius < 0:
            raise ValueError("blur_radius must be >= 0")
        if not (0.0 <= self.temporal_beta <= 1.0):
            raise ValueError("temporal_beta must lie in [0,1]")


@dataclass
class RenderStats:
    """Counters gathered during one foveated render."""

    foveal_fraction: float = 1.0
    composite_samples: int = 0
    elapsed: float = 0.0


@dataclass
class FoveatedRender:
    framebuffer: Framebuffer
    stats: RenderStats


def cost_report(stats: RenderStats) -> dict:
    return {
        "foveal_fraction": stats.foveal_fraction,
        "composite_samples": stats.composite_samples,
        "elapsed": stats.elapsed,
    }


# ---------------------------------------------------------------------------
# Importance sources


def heuristic_importance(frame: Framebuffer | np.ndarray | None,
                         dims: tuple[int, int]) -> ImportanceMap:
    """Deterministic fallback map: center prior modulated by local contrast.

    map = normalize(center_prior * (0.5 + 0.5*contrast)); the center prior is
    a Gaussian over normalized distance to the grid center (sigma 0.35) and
    contrast is per-cell luminance standard deviation scaled by the maximum
    cell. Without a frame (or with a flat one) contrast is 1 everywhere.
    """
    rows, cols = dims
    if rows < 1 or cols < 1:
        raise ValueError("dims must be at least 1x1")

    cy = (np.arange(rows) + 0.5) / rows - 0.5
    cx = (np.arange(cols) + 0.5) / cols - 0.5
    d2 = cy[:, None] ** 2 + cx[None, :] ** 2
    prior = np.exp(-d2 / (2.0 * CENTER_PRIOR_SIGMA ** 2))

    contrast = np.ones((rows, cols))
    rgb = frame.rgb if isinstance(frame, Framebuffer) else frame
    if rgb is not None and rgb.shape[0] >= rows and rgb.shape[1] >= cols:
        luma = np.asarray(rgb, dtype=np.float64) @ LUMA_WEIGHTS
        h, w = luma.shape
        rb = (np.arange(rows) * h) // rows
        cb = (np.arange(cols) * w) // cols
        s1 = np.add.reduceat(np.add.reduceat(luma, rb, axis=0), cb, axis=1)
        s2 = np.add.reduceat(np.add.reduceat(luma * luma, rb, axis=0), cb, axis=1)
        rsz = np.diff(np.append(rb, h)).astype(np.float64)
        csz = np.diff(np.append(cb, w)).astype(np.float64)
        counts = rsz[:, None] * csz[None, :]
        var = np.maximum(s2 / counts - (s1 / counts) ** 2, 0.0)
        std = np.sqrt(var)
        peak = std.max()
        if peak > 0.0:
            contrast = std / peak

    grid = prior * (0.5 + 0.5 * contrast)
    grid = grid / grid.max()
    return ImportanceMap(grid=np.clip(grid, 0.0, 1.0))


class ImportanceProvider:
    """External importance-map source; see HttpImportanceProvider."""

    timeout: float = 2.0

    def fetch_map(self, image_png: bytes, prompt: str,
                  rows: int, cols: int) -> np.ndarray:
        raise NotImplementedError


class HttpImportanceProvider(ImportanceProvider):
    """POSTs the encoded frame and prompt, expects {"map": [[...]]} back."""

    def __init__(self, url: str, timeout: float = 2.0) -> None:
        self.url = url
        self.timeout = timeout
        self._transport = None   # test hook for httpx.MockTransport

    def fetch_map(self, image_png: bytes, prompt: str,
                  rows: int, cols: int) -> np.ndarray:
        import httpx

        payload = {
            "image_png_base64": base64.b64encode(image_png).decode("ascii"),
            "prompt": prompt,
            "rows": rows,
            "cols": cols,
        }
        with httpx.Client(transport=self._transport, timeout=self.timeout) as client:
            resp = client.post(self.url, json=payload)
        if resp.status_code != 200:
            raise RuntimeError(f"provider returned HTTP {resp.status_code}")
        return np.asarray(resp.json()["map"], dtype=np.float64)


def provider_from_env() -> HttpImportanceProvider | None:
    url = os.environ.get(IMPORTANCE_PROVIDER_URL_ENV)
    return HttpImportanceProvider(url) if url else None


@dataclass
class ImportanceQueryResult:
    map: ImportanceMap
    source: str                    # "provider" | "heuristic"
    diagnostic: str | None = None


def query_provider(frame_png: bytes | None, prompt: str,
                   provider: ImportanceProvider | None,
                   dims: tuple[int, int],
                   fallback_frame: Framebuffer | np.ndarray | None = None,
                   ) -> ImportanceQueryResult:
    """Total importance lookup: provider result when valid, heuristic otherwise.

    Provider failures (transport, timeout, wrong shape, bad values) never
    surface to the render loop; they are reported as a diagnostic string.
    """
    rows, cols = dims
    diagnostic = None
    if provider is not None and frame_png is not None:
        try:
            raw = provider.fetch_map(frame_png, prompt, rows, cols)
            if raw.shape != (rows, cols):
                raise ValueError(f"provider map shape {raw.shape} != {(rows, cols)}")
            if not np.all(np.isfinite(raw)):
                raise ValueError("provider map contains non-finite values")
            grid = np.clip(raw, 0.0, 1.0)
            return ImportanceQueryResult(map=ImportanceMap(grid=grid), source="provider")
        except Exception as exc:  # noqa: BLE001 - fallback must be total
            diagnostic = f"importance provider failed: {exc}"
    return ImportanceQueryResult(
        map=heuristic_importance(fallback_frame, dims),
        source="heuristic", diagnostic=diagnostic)


def smooth_map(previous: ImportanceMap, current: ImportanceMap,
               beta: float) -> ImportanceMap:
    """Elementwise EMA: beta * previous + (1 - beta) * current."""
    if previous.grid.shape != current.grid.shape:
        raise DimMismatchError(
            f"map dims {previous.grid.shape} != {current.grid.shape}")
    return ImportanceMap(grid=beta * previous.grid + (1.0 - beta) * current.grid)


def classify_tiles(imap: ImportanceMap, tau: float) -> np.ndarray:
    """Boolean foveal grid: value >= tau, with an at-least-one-foveal floor.

    When no cell reaches tau, the argmax cell (ties to the lowest row-major
    index) is promoted so a frame is never fully degraded.
    """
    foveal = imap.grid >= tau
    if not foveal.any():
        flat = np.zeros(imap.grid.size, dtype=bool)
        flat[int(np.argmax(imap.grid))] = True
        foveal = flat.reshape(imap.grid.shape)
    return foveal


# ---------------------------------------------------------------------------
# Foveated rendering


def render_foveated(cloud: SplatCloud, pose: CameraPose, imap: ImportanceMap,
                    cfg: RenderConfig, fcfg: FoveationConfig) -> FoveatedRender:
    """Adaptive render: full precision on foveal tiles, cheap on the rest.

    With every tile foveal (or foveation disabled) the output is bit-identical
    to render_tiled.
    """
    t_start = time.perf_counter()
    ntx, nty = cfg.tiles_x, cfg.tiles_y
    if fcfg.enabled:
        if imap.grid.shape != (nty, ntx):
            raise DimMismatchError(
                f"importance dims {imap.grid.shape} != tile grid {(nty, ntx)}")
        foveal = classify_tiles(imap, fcfg.threshold)
    else:
        foveal = np.ones((nty, ntx), dtype=bool)

    proj, offsets, indices = prepare_sorted(cloud, pose, cfg)
    rgb = np.zeros((cfg.height, cfg.width, 3))
    trans = np.ones((cfg.height, cfg.width))
    ntiles = ntx * nty
    tile_mask = np.ascontiguousarray(foveal.reshape(-1).astype(np.uint8))
    tile_samples = np.zeros(ntiles, dtype=np.int64)
    _kernels.composite_tiles(
        cfg.width, cfg.height, cfg.tile_size, ntx,
        offsets, indices,
        proj.means2d, proj.conics, proj.colors, proj.alphas, proj.aabbs,
        tile_mask, cfg.alpha_min, cfg.alpha_max, cfg.transmittance_floor,
        rgb, trans, tile_samples)
    rgb += trans[:, :, None] * np.asarray(cfg.background)

    samples = int(tile_samples.sum())
    peri_ids = np.nonzero(tile_mask == 0)[0].astype(np.int64)
    if peri_ids.size:
        k = fcfg.peripheral_downsample
        max_s = (cfg.tile_size + k - 1) // k
        samp_rgb = np.zeros((peri_ids.size, max_s, max_s, 3))
        samp_t = np.ones((peri_ids.size, max_s, max_s))
        samp_counts = np.zeros(peri_ids.size, dtype=np.int64)
        _kernels.composite_peripheral_samples(
            cfg.width, cfg.height, cfg.tile_size, ntx, k,
            offsets, indices,
            proj.means2d, proj.conics, proj.colors, proj.alphas, proj.aabbs,
            peri_ids, cfg.alpha_min, cfg.alpha_max, cfg.transmittance_floor,
            samp_rgb, samp_t, samp_counts)
        samp_rgb = samp_rgb + samp_t[..., None] * np.asarray(cfg.background)
        _kernels.upsample_peripheral(
            cfg.width, cfg.height, cfg.tile_size, ntx, k,
            peri_ids, samp_rgb, samp_t, rgb, trans)
        samples += int(samp_counts.sum())

        if fcfg.blur_radius > 0:
            ts = cfg.tile_size
            mask = np.repeat(np.repeat((~foveal).astype(np.float64), ts, axis=0),
                             ts, axis=1)[:cfg.height, :cfg.width]
            mask = np.ascontiguousarray(mask)
            num_h = np.empty_like(rgb)
            den_h = np.empty_like(mask)
            _kernels.masked_box_h(rgb, mask, fcfg.blur_radius, num_h, den_h)
            _kernels.masked_box_v_apply(num_h, den_h, mask, fcfg.blur_radius, rgb)

    stats = RenderStats(
        foveal_fraction=float(foveal.sum()) / foveal.size,
        composite_samples=samples,
        elapsed=time.perf_counter() - t_start)
    return FoveatedRender(framebuffer=Framebuffer(rgb=rgb, transmittance=trans),
                          stats=stats)
