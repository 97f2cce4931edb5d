"""Procedural toy datasets with exact ground truth, for tests and demos."""
from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..geometry import CameraModel, Cuboid3D, RigidTransform, look_rotation
from ..labels import LabelSet, RadialDistanceMap, cuboid_to_bbox2d, rdm_update
from ..mesh import MeshAsset, box_mesh, cone_mesh, intersect_cuboid, merge_meshes, save_obj
from ..panorama import delinearize
from ..placement import Footprint, ParkingSpot, footprints_overlap
from .dataset import SCHEMA_VERSION, dump_json, write_png

KINDS = ("surround-fisheye", "stereo-pinhole", "parking")
SURROUND_COEFFS = (0.0, 150.0, 0.0, -3.0, 0.0)
SURROUND_MAX_ANGLE = float(np.deg2rad(100.0))
SKY_ZENITH = np.array([0.20, 0.35, 0.70])
SKY_HORIZON = np.array([0.55, 0.60, 0.65])
GROUND_ALBEDO = (0.22, 0.30)
SUN_RADIUS = np.deg2rad(2.5)
CAR_DIMS = (4.5, 1.9, 1.5)


def surround_rig(width: int = 640, height: int = 480) -> List[CameraModel]:
    """Four f-theta cameras looking front, left, rear and right.

    The polynomial scales with ``width`` so coverage does not depend on resolution.
    """
    pp = ((width - 1) / 2, (height - 1) / 2)
    coeffs = tuple(k * width / 640.0 for k in SURROUND_COEFFS)
    mounts = [("front", (2.0, 0.0, 1.5), (1, 0, 0)), ("left", (0.9, 1.0, 1.5), (0, 1, 0)),
              ("rear", (-1.0, 0.0, 1.5), (-1, 0, 0)), ("right", (0.9, -1.0, 1.5), (0, -1, 0))]
    return [CameraModel("ftheta", width, height, pp, RigidTransform(look_rotation(f), pos),
                        coeffs=coeffs, max_angle=SURROUND_MAX_ANGLE, name=name)
            for name, pos, f in mounts]


def stereo_rig(width: int = 640, height: int = 480, baseline: float = 0.5) -> List[CameraModel]:
    """Two forward pinhole cameras with a 90 degree horizontal field of view."""
    pp = ((width - 1) / 2, (height - 1) / 2)
    f = width / 2
    R = look_rotation((1, 0, 0))
    return [CameraModel("pinhole", width, height, pp, RigidTransform(R, (2.0, s * baseline / 2, 1.4)),
                        focal=(f, f), name=name)
            for name, s in (("left", 1.0), ("right", -1.0))]


def render_frame(camera: CameraModel, cuboids: Sequence[Cuboid3D], colors: Sequence, sun_dir,
                 ground_z: float = 0.0) -> np.ndarray:
    """8-bit frame of sky, sun disc, checkered ground and flat-colored cuboids."""
    rays = camera.pixel_rays
    h, w = rays.shape[:2]
    d = rays.reshape(-1, 3)
    ok = np.isfinite(d[:, 0])
    d0 = np.where(ok[:, None], d, 0.0)
    o = camera.center
    out = np.zeros((h * w, 3))
    elev = np.clip(d0[:, 2], 0.0, 1.0)[:, None]
    sky = SKY_HORIZON + (SKY_ZENITH - SKY_HORIZON) * elev
    sun = (d0 @ np.asarray(sun_dir)) >= np.cos(SUN_RADIUS)
    sky[sun] = 1.0
    t_ground = np.where(d0[:, 2] < -1e-9, (ground_z - o[2]) / np.where(d0[:, 2] < -1e-9, d0[:, 2], -1.0), np.inf)
    gp = o + d0 * np.where(np.isfinite(t_ground), t_ground, 0.0)[:, None]
    checker = (np.floor(gp[:, 0] / 2.0) + np.floor(gp[:, 1] / 2.0)) % 2
    ground = np.where(checker[:, None] > 0, GROUND_ALBEDO[1], GROUND_ALBEDO[0]) * np.ones(3)
    best = t_ground.copy()
    out[:] = np.where(np.isfinite(t_ground)[:, None], ground, sky)
    for c, col in zip(cuboids, colors):
        t = np.full(len(d), np.inf)
        t[ok] = intersect_cuboid(o, d[ok], c)
        win = t < best
        best[win] = t[win]
        out[win] = col
    out[~ok] = 0.0
    return delinearize(out).reshape(h, w, 3)


def scene_labels(cameras: Sequence[CameraModel], cuboids: Sequence[Cuboid3D], parking=(),
                 bins: int = 360) -> LabelSet:
    boxes: Dict[str, list] = {}
    vis = np.zeros(len(cuboids))
    for cam in cameras:
        for i, c in enumerate(cuboids):
            others = [o for j, o in enumerate(cuboids) if j != i]
            b = cuboid_to_bbox2d(c, cam, others)
            if b is None or b.visibility <= 0:
                continue
            b.cuboid_index = i
            boxes.setdefault(cam.name, []).append(b)
            vis[i] = max(vis[i], b.visibility)
    fs = RadialDistanceMap.unbounded(bins)
    for c in cuboids:
        fs = rdm_update(fs, c, c.class_label)
    return LabelSet([c.replace(visibility=float(v)) for c, v in zip(cuboids, vis)], [False] * len(cuboids),
                    boxes, fs, list(parking))


def _sun(rng) -> np.ndarray:
    az = rng.uniform(-np.pi, np.pi)
    el = rng.uniform(np.deg2rad(25), np.deg2rad(60))
    return np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])


def _car(x, y, yaw) -> Cuboid3D:
    return Cuboid3D((x, y, CAR_DIMS[2] / 2), CAR_DIMS, yaw, "car")


def _random_cars(rng, count: int, r_range=(9.0, 20.0)) -> List[Cuboid3D]:
    cars: List[Cuboid3D] = []
    ego = Footprint((1.4, 0.0), (2.6, 1.1), 0.0)
    while len(cars) < count:
        r = rng.uniform(*r_range)
        a = rng.uniform(-np.pi, np.pi)
        c = _car(r * np.cos(a), r * np.sin(a), rng.uniform(-np.pi, np.pi))
        fp = Footprint.from_cuboid(c)
        if footprints_overlap(fp, ego) or any(footprints_overlap(fp, Footprint.from_cuboid(o)) for o in cars):
            continue
        cars.append(c)
    return cars


def _parking_layout(rng) -> Tuple[List[ParkingSpot], List[Cuboid3D]]:
    """A row of 2.5 x 5 m spots to the right of the ego; some occupied, one already locked."""
    spots, cars = [], []
    xs = np.arange(-4.0, 9.0, 2.5)
    occupied = set(rng.choice(len(xs), size=2, replace=False).tolist())
    locked = int(rng.choice([i for i in range(len(xs)) if i not in occupied]))
    for i, x in enumerate(xs):
        poly = [(x - 1.25, -3.5), (x + 1.25, -3.5), (x + 1.25, -8.5), (x - 1.25, -8.5)]
        if i in occupied:
            spots.append(ParkingSpot(poly, available=False))
            cars.append(Cuboid3D((x, -6.0, 0.75), (4.5, 1.9, 1.5), np.pi / 2, "car"))
        elif i == locked:
            spots.append(ParkingSpot(poly, available=True, has_lock=True, lock_state="unlocked"))
        else:
            spots.append(ParkingSpot(poly))
    return spots, cars


def _pedestrian(walking: bool) -> MeshAsset:
    skin = (0.55, 0.4, 0.3)
    if not walking:
        body = box_mesh((0.3, 0.5, 1.75), (0.2, 0.25, 0.6), base_at_zero=True)
        return merge_meshes([body], "pedestrian_standing")
    parts = []
    torso = box_mesh((0.3, 0.5, 0.8), (0.6, 0.15, 0.15), base_at_zero=True)
    parts.append(_shift(torso, (0.0, 0.0, 0.9)))
    for dx in (-0.2, 0.2):
        parts.append(_shift(box_mesh((0.15, 0.18, 0.9), (0.15, 0.15, 0.2), base_at_zero=True), (dx, 0.0, 0.0)))
    parts.append(_shift(box_mesh((0.22, 0.22, 0.22), skin, base_at_zero=True), (0.0, 0.0, 1.7)))
    return merge_meshes(parts, "pedestrian_walking")


def _shift(mesh: MeshAsset, offset) -> MeshAsset:
    return MeshAsset(mesh.vertices + np.asarray(offset, dtype=float), mesh.triangles, mesh.normals, mesh.colors,
                     mesh.name)


def write_assets(root: Path) -> dict:
    assets = root / "assets"
    assets.mkdir(parents=True, exist_ok=True)
    items = [
        ("cube", "cube", "cube", box_mesh((1.0, 1.0, 1.0), (0.8, 0.2, 0.2), base_at_zero=True, name="cube"), None),
        ("traffic_cone", "cone", "cone", cone_mesh(), None),
        ("pedestrian_standing", "pedestrian", "pedestrian", _pedestrian(False), None),
        ("pedestrian_walking", "pedestrian", "pedestrian", _pedestrian(True), None),
        ("ground_lock", "ground_lock", "ground_lock",
         box_mesh((0.6, 0.4, 0.15), (0.9, 0.75, 0.1), base_at_zero=True, name="ground_lock"), "locked"),
    ]
    catalog = []
    for aid, group, cls, mesh, lock in items:
        save_obj(mesh, assets / f"{aid}.obj")
        catalog.append({"id": aid, "group": group, "class": cls, "mesh": f"assets/{aid}.obj", "lock_state": lock})
    doc = {"assets": catalog}
    (root / "catalog.json").write_text(dump_json(doc))
    return doc


def _config(kind: str, seed: int) -> dict:
    base = {"dataset": "dataset", "output": "augmented", "catalog": "catalog.json", "seed": seed, "jobs": 1}
    if kind == "surround-fisheye":
        base["policy"] = {"count_distribution": {"3": 1.0},
                          "group_distribution": {"cube": 0.4, "cone": 0.3, "pedestrian": 0.3},
                          "region": {"kind": "rectangle", "half_length": 12.0, "half_width": 6.0}}
    elif kind == "stereo-pinhole":
        base["policy"] = {"count_distribution": {"1": 1.0}, "group_distribution": {"cube": 1.0},
                          "region": {"kind": "rectangle", "half_length": 12.0, "half_width": 6.0},
                          "max_attempts": 60}
        # two forward cameras see far less than the default 60% of the sphere
        base["min_coverage"] = 0.1
    else:
        base["policy"] = {"count_distribution": {"1": 1.0}, "group_distribution": {"ground_lock": 1.0},
                          "region": {"kind": "parking_spots"}, "parking_noise_sigma": 0.15}
    return base


def make_scene(kind: str, rng: np.random.Generator, width: int = 640, height: int = 480):
    """Cameras, cuboids, parking spots and sun direction for one fixture scene."""
    sun = _sun(rng)
    parking: List[ParkingSpot] = []
    if kind == "surround-fisheye":
        cams = surround_rig(width, height)
        cuboids = _random_cars(rng, 3)
    elif kind == "stereo-pinhole":
        cams = stereo_rig(width, height)
        cuboids = [_car(rng.uniform(14, 20), rng.uniform(3.5, 5.5), rng.uniform(-0.3, 0.3))]
    elif kind == "parking":
        cams = surround_rig(width, height)
        parking, cuboids = _parking_layout(rng)
    else:
        raise ValueError(f"unknown fixture kind {kind!r}; expected one of {KINDS}")
    return cams, cuboids, parking, sun


def gen_fixture(kind: str, out, seed: int = 0, scenes: int = 4, width: int = 640, height: int = 480) -> Path:
    """Write a toy dataset, its asset catalog and a run config under ``out``; returns the config path."""
    if kind not in KINDS:
        raise ValueError(f"unknown fixture kind {kind!r}; expected one of {KINDS}")
    if scenes < 0:
        raise ValueError("scene count must be non-negative")
    root = Path(out)
    (root / "dataset").mkdir(parents=True, exist_ok=True)
    write_assets(root)
    for k in range(scenes):
        rng = np.random.default_rng([int(seed), k])
        cams, cuboids, parking, sun = make_scene(kind, rng, width, height)
        colors = [rng.uniform(0.1, 0.7, 3) for _ in cuboids]
        sid = f"scene_{k:04d}"
        sdir = root / "dataset" / sid
        sdir.mkdir(parents=True, exist_ok=True)
        entries = []
        for cam in cams:
            write_png(sdir / f"{cam.name}.png", render_frame(cam, cuboids, colors, sun))
            entries.append({"name": cam.name, "image": f"{cam.name}.png", "model": cam.to_dict()})
        labels = scene_labels(cams, cuboids, parking)
        doc = {"schema_version": SCHEMA_VERSION, "scene_id": sid, "ego_pose": RigidTransform.identity().to_dict(),
               "ground_z": 0.0, "cameras": entries, "labels": labels.to_dict(),
               "fixture": {"kind": kind, "sun_direction": sun.tolist()}}
        (sdir / "manifest.json").write_text(dump_json(doc))
    cfg = root / "config.json"
    cfg.write_text(dump_json(_config(kind, int(seed))))
    return cfg
