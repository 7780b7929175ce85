"""Scene storage: content-addressed uploads plus directory fixtures."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from ..sceneio import load_scene_path
from ..splats import (PlyError, SequenceManifest, SplatCloud, load_manifest,
                      parse_ply, uniform_manifest)


class SceneUploadError(ValueError):
    def __init__(self, filename: str, message: str) -> None:
        super().__init__(f"{filename}: {message}")
        self.filename = filename
        self.message = message


@dataclass
class SceneRecord:
    id: str
    manifest: SequenceManifest
    clouds: list[SplatCloud]


class SceneStore:
    """In-memory scene registry with optional on-disk persistence.

    Uploads are content-addressed (same bytes give the same id); scenes found
    under the root directory are registered by their directory or file name.
    """

    def __init__(self, root: str | Path | None = None) -> None:
        self.root = Path(root) if root else None
        self._scenes: dict[str, SceneRecord] = {}
        if self.root and self.root.is_dir():
            self._scan_root()

    def _scan_root(self) -> None:
        for entry in sorted(self.root.iterdir()):
            try:
                if entry.is_dir() or entry.suffix.lower() in (".ply", ".json"):
                    data = load_scene_path(entry)
                    name = entry.stem if entry.is_file() else entry.name
                    self._scenes[name] = SceneRecord(
                        id=name, manifest=data.manifest, clouds=data.clouds)
            except (OSError, ValueError):
                continue   # non-scene entries are fine in a shared directory

    def ids(self) -> list[str]:
        return sorted(self._scenes)

    def get(self, scene_id: str) -> SceneRecord | None:
        return self._scenes.get(scene_id)

    def add_upload(self, files: list[tuple[str, bytes]],
                   manifest_text: str | None = None) -> str:
        """Parse uploaded PLY files into a scene; returns its content id."""
        if not files:
            raise SceneUploadError("<upload>", "no PLY files supplied")

        digest = hashlib.sha256()
        for name, data in files:
            digest.update(name.encode())
            digest.update(len(data).to_bytes(8, "little"))
            digest.update(data)
        if manifest_text:
            digest.update(manifest_text.encode())
        scene_id = digest.hexdigest()[:16]
        if scene_id in self._scenes:
            return scene_id

        clouds_by_name: dict[str, SplatCloud] = {}
        for name, data in files:
            try:
                clouds_by_name[name] = parse_ply(data)
            except PlyError as exc:
                raise SceneUploadError(name, str(exc)) from exc

        if manifest_text is not None:
            manifest = load_manifest(manifest_text)
            try:
                clouds = [clouds_by_name[f.ref] for f in manifest.frames]
            except KeyError as exc:
                raise SceneUploadError(str(exc.args[0]), "manifest names a missing file")
        else:
            manifest = uniform_manifest([name for name, _ in files])
            clouds = [clouds_by_name[name] for name, _ in files]

        self._scenes[scene_id] = SceneRecord(id=scene_id, manifest=manifest,
                                             clouds=clouds)
        if self.root:
            scene_dir = self.root / scene_id
            scene_dir.mkdir(parents=True, exist_ok=True)
            for name, data in files:
                (scene_dir / Path(name).name).write_bytes(data)
            (scene_dir / "manifest.json").write_text(
                manifest_text if manifest_text is not None
                else json.dumps(manifest.to_json_dict()))
        return scene_id

    def add_record(self, record: SceneRecord) -> None:
        self._scenes[record.id] = record
