"""Splat selection (screen-space and world-space) and edits with undo.

Screen-space hit tests use the projected splat mean; splats culled by
projection are never hit by screen shapes. Sphere selection works in world
space and ignores visibility.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .rasterizer import RenderConfig, project_cloud
from .splats import SplatCloud
from .trajectory import CameraPose

UNDO_DEPTH = 32

MODES = ("replace", "add", "subtract")


class StaleMaskError(ValueError):
    pass


class DegenerateShapeError(ValueError):
    pass


class EmptySelectionError(ValueError):
    pass


class EmptyHistoryError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Shapes


@dataclass(frozen=True)
class RectShape:
    p0: tuple[float, float]      # screen px; corners in any order
    p1: tuple[float, float]


@dataclass(frozen=True)
class PolygonShape:
    vertices: tuple[tuple[float, float], ...]   # closed, >= 3 vertices

    def __post_init__(self) -> None:
        if len(self.vertices) < 3:
            raise DegenerateShapeError("polygon needs at least 3 vertices")


@dataclass(frozen=True)
class LassoShape(PolygonShape):
    """Freehand outline; treated as a closed polygon."""


@dataclass(frozen=True)
class BrushShape:
    stroke: tuple[tuple[float, float], ...]     # polyline, >= 1 point
    radius: float                               # px > 0

    def __post_init__(self) -> None:
        if not self.stroke:
            raise DegenerateShapeError("brush stroke needs at least one point")
        if self.radius <= 0:
            raise DegenerateShapeError("brush radius must be positive")


@dataclass(frozen=True)
class SphereShape:
    center: tuple[float, float, float]          # world units
    radius: float                               # world units > 0

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise DegenerateShapeError("sphere radius must be positive")


SelectionShape = RectShape | PolygonShape | LassoShape | BrushShape | SphereShape


@dataclass
class SelectionMask:
    bits: np.ndarray            # bool per splat index
    cloud_version: int

    def __post_init__(self) -> None:
        self.bits = np.ascontiguousarray(self.bits, dtype=bool)

    @classmethod
    def empty(cls, cloud: SplatCloud) -> "SelectionMask":
        return cls(bits=np.zeros(len(cloud), dtype=bool), cloud_version=cloud.version)

    @property
    def count(self) -> int:
        return int(self.bits.sum())


# ---------------------------------------------------------------------------
# Hit tests


def point_in_polygon(points: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Vectorized even-odd (ray crossing) test for many points at once."""
    px = points[:, 0]
    py = points[:, 1]
    inside = np.zeros(len(points), dtype=bool)
    k = len(vertices)
    j = k - 1
    for i in range(k):
        xi, yi = vertices[i]
        xj, yj = vertices[j]
        crosses = (yi > py) != (yj > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_at = (xj - xi) * (py - yi) / (yj - yi) + xi
        inside ^= crosses & (px < x_at)
        j = i
    return inside


def _point_segment_dist(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(points - a, axis=1)
    t = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    closest = a + t[:, None] * ab
    return np.linalg.norm(points - closest, axis=1)


def _screen_hits(points: np.ndarray, shape: SelectionShape) -> np.ndarray:
    if isinstance(shape, RectShape):
        lo = np.minimum(shape.p0, shape.p1)
        hi = np.maximum(shape.p0, shape.p1)
        return ((points[:, 0] >= lo[0]) & (points[:, 0] <= hi[0])
                & (points[:, 1] >= lo[1]) & (points[:, 1] <= hi[1]))
    if isinstance(shape, PolygonShape):   # covers LassoShape
        return point_in_polygon(points, np.asarray(shape.vertices, dtype=np.float64))
    if isinstance(shape, BrushShape):
        stroke = np.asarray(shape.stroke, dtype=np.float64)
        dist = np.full(len(points), np.inf)
        if len(stroke) == 1:
            dist = np.linalg.norm(points - stroke[0], axis=1)
        else:
            for a, b in zip(stroke[:-1], stroke[1:]):
                dist = np.minimum(dist, _point_segment_dist(points, a, b))
        return dist <= shape.radius
    raise TypeError(f"not a screen shape: {type(shape).__name__}")


def select(cloud: SplatCloud, pose: CameraPose, cfg: RenderConfig,
           shape: SelectionShape, mode: str = "replace",
           existing: SelectionMask | None = None) -> SelectionMask:
    """Build a selection mask from a shape, combined with `existing` per mode."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if mode != "replace":
        if existing is None:
            raise StaleMaskError("add/subtract need an existing mask")
        if existing.cloud_version != cloud.version or len(existing.bits) != len(cloud):
            raise StaleMaskError("mask was built against a different cloud version")

    hits = np.zeros(len(cloud), dtype=bool)
    if isinstance(shape, SphereShape):
        center = np.asarray(shape.center, dtype=np.float64)
        dist = np.linalg.norm(cloud.positions - center, axis=1)
        hits = dist <= shape.radius
    else:
        proj = project_cloud(cloud, pose, cfg)
        if len(proj):
            hits[proj.source_indices] = _screen_hits(proj.means2d, shape)

    if mode == "replace":
        bits = hits
    elif mode == "add":
        bits = existing.bits | hits
    else:
        bits = existing.bits & ~hits
    return SelectionMask(bits=bits, cloud_version=cloud.version)


# ---------------------------------------------------------------------------
# Edits and undo


@dataclass(frozen=True)
class DeleteOp:
    pass


@dataclass(frozen=True)
class TranslateOp:
    delta: tuple[float, float, float]

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.delta)):
            raise ValueError("translate delta must be finite")


EditOp = DeleteOp | TranslateOp


@dataclass(frozen=True)
class UndoRecord:
    kind: str                           # "delete" | "translate"
    indices: np.ndarray | None = None   # original indices of removed splats
    removed: dict | None = None         # removed array rows, keyed by field
    mask: np.ndarray | None = None      # translate target mask
    delta: np.ndarray | None = None
    prior: np.ndarray | None = None     # pre-translate positions of the mask
                                        # ((x+d)-d loses bits; exactness needs
                                        # the original values)


class EditHistory:
    """Bounded undo stack; the oldest record drops past UNDO_DEPTH edits."""

    def __init__(self, depth: int = UNDO_DEPTH) -> None:
        self._records: deque = deque(maxlen=depth)

    def push(self, record) -> None:
        self._records.append(record)

    def pop(self):
        if not self._records:
            raise EmptyHistoryError("nothing to undo")
        return self._records.pop()

    def __len__(self) -> int:
        return len(self._records)


def _check_mask(cloud: SplatCloud, mask: SelectionMask) -> None:
    if mask.cloud_version != cloud.version or len(mask.bits) != len(cloud):
        raise StaleMaskError("mask was built against a different cloud version")


def apply_edit(cloud: SplatCloud, mask: SelectionMask,
               op: EditOp) -> tuple[SplatCloud, UndoRecord]:
    """Apply delete/translate to the masked splats; returns the new cloud
    plus an undo record capturing the exact inverse."""
    _check_mask(cloud, mask)
    if not mask.bits.any():
        raise EmptySelectionError("edit requires a non-empty selection")

    if isinstance(op, DeleteOp):
        keep = ~mask.bits
        removed_idx = np.nonzero(mask.bits)[0]
        removed = {
            "positions": cloud.positions[removed_idx].copy(),
            "rotations": cloud.rotations[removed_idx].copy(),
            "scales": cloud.scales[removed_idx].copy(),
            "opacities": cloud.opacities[removed_idx].copy(),
            "colors": cloud.colors[removed_idx].copy(),
            "sh_rest": None if cloud.sh_rest is None else cloud.sh_rest[removed_idx].copy(),
        }
        new_cloud = cloud.replace(
            positions=cloud.positions[keep],
            rotations=cloud.rotations[keep],
            scales=cloud.scales[keep],
            opacities=cloud.opacities[keep],
            colors=cloud.colors[keep],
            sh_rest=None if cloud.sh_rest is None else cloud.sh_rest[keep],
        )
        record = UndoRecord(kind="delete", indices=removed_idx, removed=removed)
        return new_cloud, record

    if isinstance(op, TranslateOp):
        delta = np.asarray(op.delta, dtype=np.float64)
        positions = cloud.positions.copy()
        prior = positions[mask.bits].copy()
        positions[mask.bits] += delta
        new_cloud = cloud.replace(positions=positions)
        record = UndoRecord(kind="translate", mask=mask.bits.copy(), delta=delta,
                            prior=prior)
        return new_cloud, record

    raise TypeError(f"unknown edit op {type(op).__name__}")


def undo(history: EditHistory, cloud: SplatCloud) -> SplatCloud:
    """Reverse the most recent edit on `cloud` (which must be its result)."""
    record = history.pop()
    if record.kind == "translate":
        positions = cloud.positions.copy()
        positions[record.mask] = record.prior
        return cloud.replace(positions=positions)

    # delete-undo: reinsert removed splats at their original indices
    n_new = len(cloud) + len(record.indices)
    survivor_idx = np.setdiff1d(np.arange(n_new), record.indices, assume_unique=True)

    def rebuild(current: np.ndarray, removed_rows: np.ndarray) -> np.ndarray:
        out = np.empty((n_new,) + current.shape[1:], dtype=current.dtype)
        out[survivor_idx] = current
        out[record.indices] = removed_rows
        return out

    rem = record.removed
    return cloud.replace(
        positions=rebuild(cloud.positions, rem["positions"]),
        rotations=rebuild(cloud.rotations, rem["rotations"]),
        scales=rebuild(cloud.scales, rem["scales"]),
        opacities=rebuild(cloud.opacities, rem["opacities"]),
        colors=rebuild(cloud.colors, rem["colors"]),
        sh_rest=None if rem["sh_rest"] is None else rebuild(cloud.sh_rest, rem["sh_rest"]),
    )
