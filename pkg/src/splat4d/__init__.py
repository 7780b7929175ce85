"""splat4d: real-time 4D Gaussian-splat rendering with foveated shading."""

__version__ = "0.1.0"

from .rasterizer import Framebuffer, RenderConfig, render_reference, render_tiled
from .splats import SequenceManifest, Splat, SplatCloud, load_manifest, parse_ply, serialize_ply
from .trajectory import CameraPose, Keyframe, Trajectory, interpolate, look_at

__all__ = [
    "CameraPose", "Framebuffer", "Keyframe", "RenderConfig", "SequenceManifest",
    "Splat", "SplatCloud", "Trajectory", "interpolate", "load_manifest",
    "look_at", "parse_ply", "render_reference", "render_tiled", "serialize_ply",
]
