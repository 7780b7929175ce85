"""Gaussian-splat domain types, PLY parsing/serialization, and sequence manifests.

Splat PLY files follow the de-facto 3DGS field convention: raw values store
pre-activation parameters (logit opacity, log scales, unnormalized quaternion,
SH DC term). Parsing applies the activations; serialization inverts them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from io import BytesIO

import numpy as np

SH_C0 = 0.28209479177
LOGIT_CLAMP = 16.0

_REQUIRED_PROPS = (
    "x", "y", "z",
    "f_dc_0", "f_dc_1", "f_dc_2",
    "opacity",
    "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
)

_PLY_SCALAR_SIZES = {
    "char": 1, "int8": 1, "uchar": 1, "uint8": 1,
    "short": 2, "int16": 2, "ushort": 2, "uint16": 2,
    "int": 4, "int32": 4, "uint": 4, "uint32": 4,
    "float": 4, "float32": 4, "double": 8, "float64": 8,
}

_PLY_NUMPY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


class PlyError(ValueError):
    """Base class for splat PLY parse failures."""


class MissingPropertyError(PlyError):
    pass


class TruncatedError(PlyError):
    pass


class NonFiniteError(PlyError):
    pass


class UnsupportedFormatError(PlyError):
    pass


class ManifestError(ValueError):
    """Base class for sequence-manifest failures."""


class ManifestParseError(ManifestError):
    pass


class NonMonotoneTimestampsError(ManifestError):
    pass


class EmptySequenceError(ManifestError):
    pass


class EmptyCloudError(ValueError):
    pass


@dataclass(frozen=True)
class Splat:
    """Scalar view of one Gaussian: activated, render-ready values."""

    position: np.ndarray      # (3,) world units
    rotation: np.ndarray      # (4,) unit quaternion (w,x,y,z)
    scale: np.ndarray         # (3,) positive stddevs, world units
    opacity: float            # [0,1]
    color: np.ndarray         # (3,) linear RGB in [0,1]
    sh_rest: np.ndarray | None = None


@dataclass
class SplatCloud:
    """Array-backed splat cloud; one temporal frame of a 4D scene.

    Arrays are locked read-only after construction: edits go through
    ``selection_edit`` and produce a new cloud with a higher version.
    """

    positions: np.ndarray           # (N,3) float64
    rotations: np.ndarray           # (N,4) float64, unit rows
    scales: np.ndarray              # (N,3) float64, > 0
    opacities: np.ndarray           # (N,) float64 in [0,1]
    colors: np.ndarray              # (N,3) float64 in [0,1]
    sh_rest: np.ndarray | None = None   # (N,K) float64, parsed but never evaluated
    bounds: tuple[np.ndarray, np.ndarray] = field(init=False)
    version: int = 0

    def __post_init__(self) -> None:
        n = len(self.positions)
        for name in ("positions", "rotations", "scales", "opacities", "colors"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            setattr(self, name, arr)
            if len(arr) != n:
                raise ValueError(f"{name} length {len(arr)} != {n}")
        if self.sh_rest is not None:
            self.sh_rest = np.ascontiguousarray(self.sh_rest, dtype=np.float64)
        self._validate()
        if n:
            bmin = self.positions.min(axis=0)
            bmax = self.positions.max(axis=0)
        else:
            bmin = np.zeros(3)
            bmax = np.zeros(3)
        object.__setattr__(self, "bounds", (bmin, bmax))
        self._freeze()

    def _validate(self) -> None:
        for name in ("positions", "rotations", "scales", "opacities", "colors"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise NonFiniteError(f"non-finite values in {name}")
        if self.sh_rest is not None and not np.all(np.isfinite(self.sh_rest)):
            raise NonFiniteError("non-finite values in sh_rest")
        if len(self.rotations):
            norms = np.linalg.norm(self.rotations, axis=1)
            if not np.allclose(norms, 1.0, atol=1e-6):
                raise ValueError("rotations must be unit quaternions within 1e-6")
            if np.any(self.scales <= 0.0):
                raise ValueError("scale components must be positive")
            if np.any((self.opacities < 0.0) | (self.opacities > 1.0)):
                raise ValueError("opacity must lie in [0,1]")

    def _freeze(self) -> None:
        for name in ("positions", "rotations", "scales", "opacities", "colors", "sh_rest"):
            arr = getattr(self, name)
            if arr is not None:
                arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.positions)

    def splat(self, i: int) -> Splat:
        return Splat(
            position=self.positions[i],
            rotation=self.rotations[i],
            scale=self.scales[i],
            opacity=float(self.opacities[i]),
            color=self.colors[i],
            sh_rest=None if self.sh_rest is None else self.sh_rest[i],
        )

    def replace(self, *, version: int | None = None, **arrays) -> "SplatCloud":
        """New cloud with some arrays swapped; bumps version unless given."""
        kwargs = {
            "positions": self.positions,
            "rotations": self.rotations,
            "scales": self.scales,
            "opacities": self.opacities,
            "colors": self.colors,
            "sh_rest": self.sh_rest,
        }
        kwargs.update(arrays)
        return SplatCloud(version=self.version + 1 if version is None else version, **kwargs)


@dataclass(frozen=True)
class FrameEntry:
    ref: str      # file path or scene-frame id
    t: float      # seconds >= 0


@dataclass(frozen=True)
class SequenceManifest:
    frames: tuple[FrameEntry, ...]
    duration: float
    source_fps: float = 30.0

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([f.t for f in self.frames], dtype=np.float64)

    def to_json_dict(self) -> dict:
        return {
            "source_fps": self.source_fps,
            "frames": [{"file": f.ref, "t": f.t} for f in self.frames],
            "duration": self.duration,
        }


def bounding_box(cloud: SplatCloud) -> tuple[np.ndarray, np.ndarray]:
    """Exact axis-aligned min/max of splat positions."""
    if len(cloud) == 0:
        raise EmptyCloudError("bounding_box of an empty cloud")
    return cloud.bounds


# ---------------------------------------------------------------------------
# PLY parsing


def _parse_header(data: bytes):
    end = data.find(b"end_header")
    if end < 0:
        raise TruncatedError("no end_header in PLY stream")
    nl = data.find(b"\n", end)
    if nl < 0:
        raise TruncatedError("end_header line unterminated")
    header_text = data[:end].decode("ascii", errors="replace")
    body = data[nl + 1:]

    lines = [ln.strip() for ln in header_text.splitlines() if ln.strip()]
    if not lines or lines[0] != "ply":
        raise UnsupportedFormatError("missing ply magic")

    fmt = None
    vertex_count = None
    properties: list[tuple[str, str]] = []  # (type, name), vertex element only
    in_vertex = False
    seen_element = False
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] == "format":
            if len(parts) < 2:
                raise UnsupportedFormatError("malformed format line")
            fmt = parts[1]
        elif parts[0] == "comment":
            continue
        elif parts[0] == "element":
            if parts[1] == "vertex":
                if seen_element:
                    raise UnsupportedFormatError("vertex element must come first")
                in_vertex = True
                vertex_count = int(parts[2])
            else:
                in_vertex = False
            seen_element = True
        elif parts[0] == "property" and in_vertex:
            if parts[1] == "list":
                raise UnsupportedFormatError("list properties unsupported on vertex element")
            if parts[1] not in _PLY_SCALAR_SIZES:
                raise UnsupportedFormatError(f"unknown property type {parts[1]!r}")
            properties.append((parts[1], parts[2]))

    if fmt is None:
        raise UnsupportedFormatError("missing format line")
    if fmt == "binary_big_endian":
        raise UnsupportedFormatError("big-endian PLY not supported")
    if fmt not in ("ascii", "binary_little_endian"):
        raise UnsupportedFormatError(f"unsupported format {fmt!r}")
    if vertex_count is None:
        raise MissingPropertyError("no vertex element declared")

    names = [name for _, name in properties]
    for req in _REQUIRED_PROPS:
        if req not in names:
            raise MissingPropertyError(f"required property {req!r} absent")
    return fmt, vertex_count, properties, body


def _read_vertex_table(fmt: str, count: int, properties: list[tuple[str, str]],
                       body: bytes) -> dict[str, np.ndarray]:
    names = [name for _, name in properties]
    if fmt == "binary_little_endian":
        dtype = np.dtype([(name, "<" + _PLY_NUMPY_TYPES[typ]) for typ, name in properties])
        need = count * dtype.itemsize
        if len(body) < need:
            raise TruncatedError(
                f"payload holds {len(body)} bytes, header promises {need}")
        table = np.frombuffer(body[:need], dtype=dtype)
    else:
        tokens = body.split()
        need = count * len(properties)
        if len(tokens) < need:
            raise TruncatedError(
                f"ascii payload holds {len(tokens)} values, header promises {need}")
        try:
            flat = np.array(tokens[:need], dtype=np.float64)
        except ValueError as exc:
            raise TruncatedError(f"malformed ascii value: {exc}") from exc
        table = flat.reshape(count, len(properties))
        return {name: table[:, i].astype(np.float64) for i, name in enumerate(names)}
    return {name: table[name].astype(np.float64) for name in names}


def parse_ply(data: bytes) -> SplatCloud:
    """Parse a Gaussian-splat PLY byte stream into an activated SplatCloud.

    Raw stored values are activated: sigmoid(opacity), exp(scale) per
    component, quaternion normalized, color = SH_C0 * f_dc + 0.5 clamped to
    [0,1]. Splat order follows file order. Extra f_rest_* coefficients are
    retained (never evaluated); other extra properties are ignored.
    """
    fmt, count, properties, body = _parse_header(bytes(data))
    cols = _read_vertex_table(fmt, count, properties, body)

    raw = np.stack([cols[p] for p in _REQUIRED_PROPS], axis=1) if count else \
        np.zeros((0, len(_REQUIRED_PROPS)))
    if not np.all(np.isfinite(raw)):
        raise NonFiniteError("non-finite raw value in splat fields")

    positions = raw[:, 0:3]
    f_dc = raw[:, 3:6]
    opacity_raw = raw[:, 6]
    scale_raw = raw[:, 7:10]
    rot_raw = raw[:, 10:14]

    rot_norm = np.linalg.norm(rot_raw, axis=1)
    if np.any(rot_norm == 0.0):
        raise NonFiniteError("zero-norm rotation cannot be normalized")
    rotations = rot_raw / rot_norm[:, None]

    opacities = 1.0 / (1.0 + np.exp(-opacity_raw))
    with np.errstate(over="raise"):
        try:
            scales = np.exp(scale_raw)
        except FloatingPointError as exc:
            raise NonFiniteError("scale activation overflow") from exc
    colors = np.clip(SH_C0 * f_dc + 0.5, 0.0, 1.0)

    rest_names = sorted(
        (n for n in cols if n.startswith("f_rest_")),
        key=lambda n: int(n.split("_")[-1]))
    sh_rest = None
    if rest_names:
        sh_rest = np.stack([cols[n] for n in rest_names], axis=1)
        if not np.all(np.isfinite(sh_rest)):
            raise NonFiniteError("non-finite raw value in f_rest fields")

    return SplatCloud(
        positions=positions, rotations=rotations, scales=scales,
        opacities=opacities, colors=colors, sh_rest=sh_rest)


def serialize_ply(cloud: SplatCloud) -> bytes:
    """Serialize a cloud to binary-little-endian splat PLY.

    Inverse activations are applied (logit opacity clamped to +-16, log
    scale); parse_ply(serialize_ply(c)) reproduces c within 1e-5 per field.
    Higher-order SH columns, when present, are appended after rot_3.
    """
    n = len(cloud)
    rest_cols = 0 if cloud.sh_rest is None else cloud.sh_rest.shape[1]

    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {p}" for p in _REQUIRED_PROPS]
    header += [f"property float f_rest_{i}" for i in range(rest_cols)]
    header.append("end_header")

    f_dc = (cloud.colors - 0.5) / SH_C0
    with np.errstate(divide="ignore"):
        logit = np.log(cloud.opacities) - np.log1p(-cloud.opacities)
    opacity_raw = np.clip(logit, -LOGIT_CLAMP, LOGIT_CLAMP)
    scale_raw = np.log(cloud.scales)

    table = np.empty((n, len(_REQUIRED_PROPS) + rest_cols), dtype="<f4")
    table[:, 0:3] = cloud.positions
    table[:, 3:6] = f_dc
    table[:, 6] = opacity_raw
    table[:, 7:10] = scale_raw
    table[:, 10:14] = cloud.rotations
    if rest_cols:
        table[:, 14:] = cloud.sh_rest

    out = BytesIO()
    out.write(("\n".join(header) + "\n").encode("ascii"))
    out.write(table.tobytes())
    return out.getvalue()


# ---------------------------------------------------------------------------
# Sequence manifest


def load_manifest(text: str) -> SequenceManifest:
    """Parse the JSON sequence manifest.

    Per-frame timestamps are optional; when omitted they default to uniform
    1/source_fps spacing. Duration defaults to last timestamp + 1/source_fps
    so a single still frame loops over a non-zero interval.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "frames" not in doc:
        raise ManifestParseError("manifest must be an object with a 'frames' list")

    source_fps = doc.get("source_fps", 30)
    if not isinstance(source_fps, (int, float)) or source_fps <= 0:
        raise ManifestParseError("source_fps must be a positive number")
    source_fps = float(source_fps)

    raw_frames = doc["frames"]
    if not isinstance(raw_frames, list):
        raise ManifestParseError("'frames' must be a list")
    if not raw_frames:
        raise EmptySequenceError("manifest declares no frames")

    refs: list[str] = []
    times: list[float | None] = []
    for i, fr in enumerate(raw_frames):
        if not isinstance(fr, dict) or "file" not in fr:
            raise ManifestParseError(f"frame {i} must be an object with 'file'")
        refs.append(str(fr["file"]))
        if "t" in fr:
            t = fr["t"]
            if not isinstance(t, (int, float)) or not math.isfinite(t) or t < 0:
                raise ManifestParseError(f"frame {i} timestamp must be a finite number >= 0")
            times.append(float(t))
        else:
            times.append(None)

    have_t = [t is not None for t in times]
    if any(have_t) and not all(have_t):
        raise ManifestParseError("either all frames carry 't' or none do")

    if all(have_t):
        ts = [float(t) for t in times]  # type: ignore[arg-type]
        if ts[0] != 0.0:
            raise ManifestParseError("first timestamp must be 0")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise NonMonotoneTimestampsError("timestamps must strictly increase")
    else:
        ts = [i / source_fps for i in range(len(refs))]

    default_duration = ts[-1] + 1.0 / source_fps
    duration = doc.get("duration", default_duration)
    if not isinstance(duration, (int, float)) or not math.isfinite(duration):
        raise ManifestParseError("duration must be a finite number")
    duration = float(duration)
    if duration < ts[-1]:
        raise ManifestParseError("duration must be >= last timestamp")

    frames = tuple(FrameEntry(ref=r, t=t) for r, t in zip(refs, ts))
    return SequenceManifest(frames=frames, duration=duration, source_fps=source_fps)


def uniform_manifest(refs: list[str], source_fps: float = 30.0) -> SequenceManifest:
    """Manifest with uniform 1/source_fps spacing, for manifest-less uploads."""
    if not refs:
        raise EmptySequenceError("no frames")
    frames = tuple(FrameEntry(ref=r, t=i / source_fps) for i, r in enumerate(refs))
    return SequenceManifest(frames=frames, duration=len(refs) / source_fps,
                            source_fps=source_fps)
