import json
from pathlib import Path

import numpy as np
import pytest

from scene_augment.geometry import CameraModel, RigidTransform, look_rotation


def pinhole(width=640, height=480, f=500.0, pp=None, position=(0.0, 0.0, 0.0), forward=(1.0, 0.0, 0.0),
            name="cam"):
    pp = (width / 2.0, height / 2.0) if pp is None else pp
    ext = RigidTransform(look_rotation(forward), np.asarray(position, dtype=float))
    return CameraModel("pinhole", width, height, pp, ext, focal=(f, f), name=name)


def ftheta(width=640, height=480, coeffs=(0.0, 150.0, 0.0, -3.0, 0.0), max_angle=np.deg2rad(100),
           position=(0.0, 0.0, 1.5), forward=(1.0, 0.0, 0.0), name="fish"):
    ext = RigidTransform(look_rotation(forward), np.asarray(position, dtype=float))
    return CameraModel("ftheta", width, height, (width / 2.0, height / 2.0), ext, coeffs=coeffs,
                       max_angle=max_angle, name=name)


def down_camera(height=10.0, width=256, f=200.0, name="top"):
    """Pinhole looking straight down from ``height`` with image x along ego -y."""
    rot = np.array([[0.0, -1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, -1.0]])
    ext = RigidTransform(rot, np.array([0.0, 0.0, height]))
    return CameraModel("pinhole", width, width, (width / 2.0, width / 2.0), ext, focal=(f, f), name=name)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def edit_config(path: Path, **changes) -> Path:
    doc = json.loads(Path(path).read_text())
    for k, v in changes.items():
        if isinstance(v, dict) and isinstance(doc.get(k), dict):
            doc[k].update(v)
        else:
            doc[k] = v
    Path(path).write_text(json.dumps(doc))
    return Path(path)


def tree_bytes(root: Path) -> dict:
    """Relative path -> bytes for every regular file, skipping timing output."""
    root = Path(root)
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file() and p.name != "timings.json"}


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
