"""On-disk dataset format: one directory per scene holding ``manifest.json`` and PNG frames.

Manifest layout (schema version 1, angles in radians, distances in meters)::

    {
      "schema_version": 1,
      "scene_id": "scene_0000",
      "ego_pose": {"rotation": [[...]], "translation": [...]},
      "ground_z": 0.0,
      "cameras": [{"name": "front", "image": "front.png",
                   "model": {"kind": "ftheta", "width": ..., "extrinsics": {...}, ...}}],
      "labels": {"cuboids": [...], "bboxes2d": {...}, "freespace": {...}, "parking": [...]},
      "depth": {"front": "front_depth.png"}          # optional
    }

Ego frame is x forward, y left, z up; camera frame is z forward, x right, y down.
"""
from __future__ import annotations

import json
import os
import shutil
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from PIL import Image

from ..geometry import CameraModel, RigidTransform
from ..labels import LabelSet
from ..panorama import coverage_fraction

SCHEMA_VERSION = 1
MANIFEST = "manifest.json"
DEFAULT_MIN_COVERAGE = 0.6


class DatasetIOError(OSError):
    """A scene's files are missing, unreadable or malformed."""


@dataclass
class CameraEntry:
    name: str
    image: str
    model: Optional[CameraModel]
    raw: dict
    calibration_error: Optional[str] = None


@dataclass
class SceneManifest:
    scene_id: str
    root: Path
    cameras: List[CameraEntry]
    labels: LabelSet
    ego_pose: RigidTransform = field(default_factory=RigidTransform.identity)
    ground_z: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def camera_models(self) -> List[CameraModel]:
        return [c.model for c in self.cameras if c.model is not None]

    def image_path(self, cam: CameraEntry) -> Path:
        return self.root / cam.image

    def to_dict(self, labels: Optional[LabelSet] = None) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "scene_id": self.scene_id,
            "ego_pose": self.ego_pose.to_dict(),
            "ground_z": self.ground_z,
            "cameras": [{"name": c.name, "image": c.image, "model": c.raw} for c in self.cameras],
            "labels": (labels or self.labels).to_dict(),
        }
        d.update(self.extra)
        return d


def _parse_camera(entry: dict) -> CameraEntry:
    name = entry.get("name")
    image = entry.get("image")
    if not isinstance(name, str) or not isinstance(image, str):
        raise DatasetIOError("camera entry needs 'name' and 'image'")
    raw = dict(entry.get("model") or {})
    raw.setdefault("name", name)
    model, err = None, None
    if "extrinsics" not in raw:
        err = "missing extrinsics"
    else:
        try:
            model = CameraModel.from_dict(raw)
        except KeyError as exc:
            err = f"missing intrinsic parameter {exc.args[0]}"
        except (TypeError, ValueError) as exc:
            err = f"invalid calibration: {exc}"
    return CameraEntry(name, image, model, raw, err)


def load_manifest(scene_dir) -> SceneManifest:
    """Parse ``scene_dir/manifest.json``; raises :class:`DatasetIOError` on unreadable input."""
    root = Path(scene_dir)
    path = root / MANIFEST
    try:
        doc = json.loads(path.read_text())
    except (OSError, UnicodeDecodeError) as exc:
        raise DatasetIOError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetIOError(f"{path}: malformed JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise DatasetIOError(f"{path}: manifest must be a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DatasetIOError(f"{path}: unsupported schema_version {version!r}")
    cams = doc.get("cameras")
    if not isinstance(cams, list) or not cams:
        raise DatasetIOError(f"{path}: at least one camera required")
    cameras = [_parse_camera(c) for c in cams]
    names = [c.name for c in cameras]
    if len(set(names)) != len(names):
        raise DatasetIOError(f"{path}: duplicate camera names")
    for c in cameras:
        if not (root / c.image).is_file():
            raise DatasetIOError(f"{path}: image {c.image} not found")
    try:
        labels = LabelSet.from_dict(doc.get("labels", {}))
        ego = RigidTransform.from_dict(doc["ego_pose"]) if "ego_pose" in doc else RigidTransform.identity()
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetIOError(f"{path}: malformed labels or pose ({exc})") from exc
    known = {"schema_version", "scene_id", "ego_pose", "ground_z", "cameras", "labels"}
    extra = {k: v for k, v in doc.items() if k not in known}
    return SceneManifest(str(doc.get("scene_id", root.name)), root, cameras, labels, ego,
                         float(doc.get("ground_z", 0.0)), extra)


def read_image(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB") if im.mode not in ("RGB", "RGBA") else im)
    except (OSError, ValueError) as exc:
        raise DatasetIOError(f"{path}: {exc}") from exc
    return np.ascontiguousarray(arr)


def write_png(path, image: np.ndarray) -> None:
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(path, format="PNG", optimize=False)


def load_images(manifest: SceneManifest) -> Dict[str, np.ndarray]:
    out = {}
    for c in manifest.cameras:
        img = read_image(manifest.image_path(c))
        if c.model is not None and img.shape[:2] != (c.model.height, c.model.width):
            raise DatasetIOError(f"{c.image}: resolution {img.shape[1]}x{img.shape[0]} does not match "
                                 f"camera {c.name} ({c.model.width}x{c.model.height})")
        out[c.name] = img
    return out


def list_scenes(dataset) -> List[Path]:
    """Scene directories (those with a manifest), sorted by name."""
    root = Path(dataset)
    if not root.is_dir():
        raise DatasetIOError(f"{root}: dataset directory not found")
    return sorted(p for p in root.iterdir() if p.is_dir() and (p / MANIFEST).exists())


@dataclass
class ValidationResult:
    ok: bool
    reason: Optional[str] = None
    detail: str = ""
    coverage: float = float("nan")

    def to_dict(self) -> dict:
        return {"ok": self.ok, "reason": self.reason, "detail": self.detail,
                "coverage": None if np.isnan(self.coverage) else round(self.coverage, 6)}


def validate_input(manifest: SceneManifest, min_coverage: float = DEFAULT_MIN_COVERAGE,
                   size=(256, 128)) -> ValidationResult:
    """Accept scenes with full calibration whose cameras see ``min_coverage`` of the sphere."""
    bad = [f"{c.name}: {c.calibration_error}" for c in manifest.cameras if c.calibration_error]
    if bad:
        return ValidationResult(False, "calibration", "; ".join(bad))
    cov = coverage_fraction(manifest.camera_models, size)
    if cov < min_coverage:
        return ValidationResult(False, "coverage", f"coverage {cov:.3f} below {min_coverage:.3f}", cov)
    return ValidationResult(True, None, "", cov)


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{uuid.uuid4().hex}.tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


class SceneWriter:
    """Stage a scene directory under a hidden temporary name and move it into place at commit."""

    def __init__(self, out_root, scene_id: str):
        self.out_root = Path(out_root)
        self.final = self.out_root / scene_id
        self.tmp = self.out_root / f".{scene_id}.{uuid.uuid4().hex}.partial"
        self.tmp.mkdir(parents=True)

    def __enter__(self) -> "SceneWriter":
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            shutil.rmtree(self.tmp, ignore_errors=True)
        return False

    def path(self, name: str) -> Path:
        p = self.tmp / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def commit(self) -> Path:
        if self.final.exists():
            shutil.rmtree(self.final)
        os.replace(self.tmp, self.final)
        return self.final
