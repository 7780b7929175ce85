"""Performance and semantic evaluation: FPS metering, CLIP-style scores,
and the foveation benchmark harness."""

from __future__ import annotations

import base64
import os
import statistics
import time
from collections import deque
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .foveation import FoveationConfig, classify_tiles, heuristic_importance, render_foveated
from .rasterizer import RenderConfig, render_tiled
from .splats import SplatCloud
from .trajectory import CameraPose

EMBEDDING_PROVIDER_URL_ENV = "EMBEDDING_PROVIDER_URL"


class ZeroVectorError(ValueError):
    pass


class DimMismatchError(ValueError):
    pass


class FpsMeter:
    """Sliding-window frame counter: fps = completions in the window / window."""

    def __init__(self, window: float = 1.0) -> None:
        if window <= 0:
            raise ValueError("window must be positive")
        self.window = window
        self._timestamps: deque[float] = deque()

    def record(self, now: float) -> None:
        self._timestamps.append(now)
        self._evict(now)

    def fps(self, now: float) -> float:
        self._evict(now)
        count = sum(1 for t in self._timestamps if now - self.window < t <= now)
        return count / self.window

    def _evict(self, now: float) -> None:
        while self._timestamps and self._timestamps[0] <= now - self.window:
            self._timestamps.popleft()


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimMismatchError(f"vector dims {u.shape} != {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ZeroVectorError("cosine of a zero vector is undefined")
    return float(u @ v / (nu * nv))


class EmbeddingProvider:
    """Image/text -> unit-norm embedding vectors, fixed dimension."""

    def embed_image(self, image_png: bytes) -> np.ndarray:
        raise NotImplementedError

    def embed_text(self, text: str) -> np.ndarray:
        raise NotImplementedError


class HttpEmbeddingProvider(EmbeddingProvider):
    """POSTs {"image_png_base64": ...} or {"text": ...} to the endpoint."""

    def __init__(self, url: str, timeout: float = 10.0) -> None:
        self.url = url
        self.timeout = timeout
        self._transport = None   # test hook for httpx.MockTransport

    def _post(self, payload: dict) -> np.ndarray:
        import httpx

        with httpx.Client(transport=self._transport, timeout=self.timeout) as client:
            resp = client.post(self.url, json=payload)
        resp.raise_for_status()
        return np.asarray(resp.json()["embedding"], dtype=np.float64)

    def embed_image(self, image_png: bytes) -> np.ndarray:
        return self._post({"image_png_base64": base64.b64encode(image_png).decode("ascii")})

    def embed_text(self, text: str) -> np.ndarray:
        return self._post({"text": text})


def embedding_provider_from_env() -> HttpEmbeddingProvider | None:
    url = os.environ.get(EMBEDDING_PROVIDER_URL_ENV)
    return HttpEmbeddingProvider(url) if url else None


def _unit(vec: np.ndarray) -> np.ndarray:
    # providers promise unit norm within 1e-4; re-normalize defensively
    vec = np.asarray(vec, dtype=np.float64)
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise ZeroVectorError("provider returned a zero embedding")
    return vec / norm


def clip_consistency(views: Sequence[bytes], center: bytes,
                     provider: EmbeddingProvider) -> float:
    """Mean cosine between each view's embedding and the reference view's."""
    if not views:
        raise ValueError("need at least one view")
    center_vec = _unit(provider.embed_image(center))
    scores = [cosine(_unit(provider.embed_image(v)), center_vec) for v in views]
    return float(np.mean(scores))


def clip_score(prompt: str, image: bytes, provider: EmbeddingProvider) -> float:
    """Cosine between the prompt embedding and the image embedding."""
    return cosine(_unit(provider.embed_text(prompt)), _unit(provider.embed_image(image)))


@dataclass(frozen=True)
class EvalReport:
    cc: float                  # mean view-consistency cosine, [-1,1]
    cs: float                  # prompt-image cosine, [-1,1]
    fps_mean: float
    fps_min: float
    foveated_speedup: float

    def __post_init__(self) -> None:
        if not (-1.0 <= self.cc <= 1.0 and -1.0 <= self.cs <= 1.0):
            raise ValueError("cc and cs must lie in [-1,1]")
        if self.fps_mean < 0 or self.fps_min < 0:
            raise ValueError("fps values must be >= 0")

    def as_dict(self) -> dict:
        # raw cosines plus x100 values, since published CC tables use a
        # scaled convention
        return {
            "cc": self.cc, "cs": self.cs,
            "cc_x100": self.cc * 100.0, "cs_x100": self.cs * 100.0,
            "fps_mean": self.fps_mean, "fps_min": self.fps_min,
            "foveated_speedup": self.foveated_speedup,
        }


def benchmark_foveation(cloud: SplatCloud, pose: CameraPose, cfg: RenderConfig,
                        taus: Sequence[float], fcfg: FoveationConfig | None = None,
                        reps: int = 20, warmup: int = 3) -> list[dict]:
    """Timing/cost table across foveation thresholds.

    Per tau: render `reps` times, discard the first `warmup` as JIT/cache
    warm-up, report the median wall ms. Sample counts are deterministic;
    rows come back sorted by foveal_fraction.
    """
    if reps <= warmup:
        raise ValueError("reps must exceed warmup")
    base = fcfg or FoveationConfig()
    full = render_tiled(cloud, pose, cfg)
    imap = heuristic_importance(full, (cfg.tiles_y, cfg.tiles_x))

    rows = []
    for tau in taus:
        config = replace(base, threshold=tau, enabled=True)
        times_ms = []
        samples = 0
        fraction = 0.0
        for _ in range(reps):
            t0 = time.perf_counter()
            result = render_foveated(cloud, pose, imap, cfg, config)
            times_ms.append((time.perf_counter() - t0) * 1000.0)
            samples = result.stats.composite_samples
            fraction = result.stats.foveal_fraction
        rows.append({
            "tau": float(tau),
            "foveal_fraction": fraction,
            "ms_per_frame": statistics.median(times_ms[warmup:]),
            "composite_samples": samples,
        })
    rows.sort(key=lambda r: r["foveal_fraction"])
    return rows


def tau_for_fraction(cloud: SplatCloud, pose: CameraPose, cfg: RenderConfig,
                     target_fraction: float) -> float:
    """Threshold whose foveal fraction is closest to the target, from the
    heuristic map's value distribution."""
    full = render_tiled(cloud, pose, cfg)
    imap = heuristic_importance(full, (cfg.tiles_y, cfg.tiles_x))
    tau = float(np.quantile(imap.grid, 1.0 - target_fraction))
    tau = min(max(tau, 0.0), 1.0)
    return tau
