"""Filesystem scene loading: single PLY files, manifests, and directories."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .splats import (SequenceManifest, SplatCloud, load_manifest, parse_ply,
                     uniform_manifest)


@dataclass
class SceneData:
    manifest: SequenceManifest
    clouds: list[SplatCloud]


def load_scene_path(path: str | Path) -> SceneData:
    """Load a scene from a .ply file, a manifest .json, or a directory.

    Directories use their manifest.json when present, otherwise the sorted
    *.ply files with uniform timestamps.
    """
    path = Path(path)
    if path.is_file() and path.suffix.lower() == ".ply":
        cloud = parse_ply(path.read_bytes())
        return SceneData(manifest=uniform_manifest([path.name]), clouds=[cloud])

    if path.is_file() and path.suffix.lower() == ".json":
        manifest = load_manifest(path.read_text())
        base = path.parent
        clouds = [parse_ply((base / f.ref).read_bytes()) for f in manifest.frames]
        return SceneData(manifest=manifest, clouds=clouds)

    if path.is_dir():
        manifest_path = path / "manifest.json"
        if manifest_path.exists():
            return load_scene_path(manifest_path)
        plys = sorted(p for p in path.glob("*.ply"))
        if not plys:
            raise FileNotFoundError(f"no .ply files in {path}")
        clouds = [parse_ply(p.read_bytes()) for p in plys]
        return SceneData(manifest=uniform_manifest([p.name for p in plys]),
                         clouds=clouds)

    raise FileNotFoundError(f"cannot load scene from {path}")
