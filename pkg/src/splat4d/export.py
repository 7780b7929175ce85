"""Offline video export: trajectory sampling, pose smoothing, frame delivery.

Frames render along the smoothed camera path, convert to 8-bit sRGB, and
stream to an EncoderSink in strict index order. With the heuristic importance
source the whole export is a pure function of the job.
"""

from __future__ import annotations

import json
import shlex
import subprocess
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .foveation import (FoveationConfig, ImportanceProvider, query_provider,
                        render_foveated, smooth_map)
from .imaging import encode_png
from .mathutil import slerp, srgb_encode
from .playback import frame_at
from .rasterizer import RenderConfig, render_tiled
from .splats import SequenceManifest, SplatCloud
from .trajectory import CameraPose, Trajectory, sample_uniform


class SinkFailure(RuntimeError):
    """An encoder sink rejected a frame or failed to finish."""


class SpawnFailure(SinkFailure):
    """The external encoder process could not be started."""


class EncoderExitNonzero(SinkFailure):
    def __init__(self, code: int) -> None:
        super().__init__(f"encoder exited with code {code}")
        self.code = code


class EncoderSink:
    """Ordered frame consumer: start once, accept gap-free indices, finalize."""

    def start(self, width: int, height: int, fps: float) -> None:
        pass

    def accept(self, index: int, width: int, height: int, pixels: np.ndarray) -> None:
        raise NotImplementedError

    def finalize(self):
        raise NotImplementedError


@dataclass
class ExportJob:
    trajectory: Trajectory
    manifest: SequenceManifest
    clouds: Sequence[SplatCloud]         # one per manifest frame
    width: int
    height: int
    fps: float
    sink: EncoderSink
    foveation: FoveationConfig = field(default_factory=FoveationConfig)
    smoothing_alpha: float = 0.8         # camera-pose EMA weight, in (0,1]
    prompt: str = ""
    provider: ImportanceProvider | None = None
    render: RenderConfig | None = None   # defaults to RenderConfig(width, height)

    def __post_init__(self) -> None:
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("dims must be positive")
        if not (0.0 < self.smoothing_alpha <= 1.0):
            raise ValueError("smoothing_alpha must lie in (0,1]")
        if len(self.clouds) != len(self.manifest.frames):
            raise ValueError("need one cloud per manifest frame")


@dataclass(frozen=True)
class ExportResult:
    frame_count: int
    output: object


def smooth_poses(poses: Sequence[CameraPose], alpha: float) -> list[CameraPose]:
    """Exponential moving average over a pose sequence; identity at alpha=1."""
    if not poses:
        return []
    out = [poses[0]]
    for pose in poses[1:]:
        prev = out[-1]
        out.append(CameraPose(
            position=alpha * pose.position + (1.0 - alpha) * prev.position,
            orientation=slerp(prev.orientation, pose.orientation, alpha),
            vfov=alpha * pose.vfov + (1.0 - alpha) * prev.vfov,
            near=alpha * pose.near + (1.0 - alpha) * prev.near,
            far=alpha * pose.far + (1.0 - alpha) * prev.far,
        ))
    return out


def run_export(job: ExportJob,
               progress: Callable[[int], None] | None = None) -> ExportResult:
    """Render the trajectory over the 4D sequence and stream frames to the sink.

    Trajectory time maps into sequence time relative to the first keyframe,
    clamped to [0, duration]. Sink failures abort the export and propagate.
    """
    cfg = job.render or RenderConfig(width=job.width, height=job.height)
    if cfg.width != job.width or cfg.height != job.height:
        raise ValueError("render config dims must match job dims")

    poses = smooth_poses(sample_uniform(job.trajectory, job.fps), job.smoothing_alpha)
    job.sink.start(job.width, job.height, job.fps)

    dims = (cfg.tiles_y, cfg.tiles_x)
    prev_fb = None
    prev_map = None
    for k, pose in enumerate(poses):
        seq_t = min(max(k / job.fps, 0.0), job.manifest.duration)
        cloud = job.clouds[frame_at(job.manifest, seq_t)]

        if job.foveation.enabled:
            frame_png = None
            if job.provider is not None and prev_fb is not None:
                frame_png = encode_png(srgb_encode(prev_fb.rgb))
            raw = query_provider(frame_png, job.prompt, job.provider, dims,
                                 fallback_frame=prev_fb).map
            current = raw if prev_map is None else smooth_map(prev_map, raw,
                                                              job.foveation.temporal_beta)
            prev_map = current
            result = render_foveated(cloud, pose, current, cfg, job.foveation)
            fb = result.framebuffer
        else:
            fb = render_tiled(cloud, pose, cfg)
        prev_fb = fb

        job.sink.accept(k, job.width, job.height, srgb_encode(fb.rgb))
        if progress is not None:
            progress(k + 1)

    output = job.sink.finalize()
    return ExportResult(frame_count=len(poses), output=output)


# ---------------------------------------------------------------------------
# Sinks


class ImageSequenceSink(EncoderSink):
    """Writes frame_000000.png ... plus a JSON sidecar with fps and count."""

    def __init__(self, directory: str | Path) -> None:
        self.directory = Path(directory)
        self._fps: float | None = None
        self._count = 0

    def start(self, width: int, height: int, fps: float) -> None:
        self._fps = fps
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise SinkFailure(f"cannot create {self.directory}: {exc}") from exc

    def accept(self, index: int, width: int, height: int, pixels: np.ndarray) -> None:
        if index != self._count:
            raise SinkFailure(f"out-of-order frame {index}, expected {self._count}")
        path = self.directory / f"frame_{index:06d}.png"
        try:
            path.write_bytes(encode_png(pixels))
        except OSError as exc:
            raise SinkFailure(f"cannot write {path}: {exc}") from exc
        self._count += 1

    def finalize(self) -> str:
        sidecar = {"fps": self._fps, "frames": self._count}
        try:
            (self.directory / "sequence.json").write_text(json.dumps(sidecar))
        except OSError as exc:
            raise SinkFailure(f"cannot write sidecar: {exc}") from exc
        return str(self.directory)


def image_sequence_sink(directory: str | Path) -> ImageSequenceSink:
    return ImageSequenceSink(directory)


class ExternalEncoderSink(EncoderSink):
    """Pipes raw RGB24 frames into a child encoder process.

    The command template receives {width}, {height}, {fps} and {output};
    frames stream to the child's stdin tightly packed, row-major. Default
    template matches ffmpeg's rawvideo input.
    """

    DEFAULT_TEMPLATE = ("ffmpeg -y -loglevel error -f rawvideo -pix_fmt rgb24 "
                        "-s {width}x{height} -r {fps} -i - {output}")

    def __init__(self, output: str | Path,
                 command_template: str | None = None) -> None:
        self.output = str(output)
        self.template = command_template or self.DEFAULT_TEMPLATE
        self._proc: subprocess.Popen | None = None
        self._count = 0

    def start(self, width: int, height: int, fps: float) -> None:
        cmd = shlex.split(self.template.format(
            width=width, height=height, fps=fps, output=shlex.quote(self.output)))
        try:
            self._proc = subprocess.Popen(cmd, stdin=subprocess.PIPE)
        except OSError as exc:
            raise SpawnFailure(f"cannot start encoder {cmd[0]!r}: {exc}") from exc

    def accept(self, index: int, width: int, height: int, pixels: np.ndarray) -> None:
        if self._proc is None:
            raise SinkFailure("sink not started")
        if index != self._count:
            raise SinkFailure(f"out-of-order frame {index}, expected {self._count}")
        data = np.ascontiguousarray(pixels, dtype=np.uint8).tobytes()
        try:
            self._proc.stdin.write(data)
        except (BrokenPipeError, OSError) as exc:
            code = self._proc.poll()
            if code is not None and code != 0:
                raise EncoderExitNonzero(code) from exc
            raise SinkFailure(f"encoder pipe failed: {exc}") from exc
        self._count += 1

    def finalize(self) -> str:
        if self._proc is None:
            raise SinkFailure("sink not started")
        self._proc.stdin.close()
        code = self._proc.wait()
        if code != 0:
            raise EncoderExitNonzero(code)
        return self.output


def external_encoder_sink(output: str | Path,
                          command_template: str | None = None) -> ExternalEncoderSink:
    return ExternalEncoderSink(output, command_template)
