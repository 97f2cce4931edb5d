"""Where synthetic assets go: count and group sampling, region sampling, collision and occlusion checks."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from ._validation import normalize_distribution
from .geometry import CameraModel, Cuboid3D, RigidTransform, wrap_angle
from .mesh import MeshAsset, PosedMesh, candidate_pairs, intersect_cuboid, intersect_pairs, ray_sphere_mask

RECTANGLE = "rectangle"
ANNULUS = "annulus"
PARKING = "parking_spots"

DEFAULT_OCCLUSION_THRESHOLD = 0.95


class NotVisibleError(ValueError):
    """The candidate does not project into the camera."""


# -- polygons / footprints ---------------------------------------------------------

def polygon_area(poly) -> float:
    p = np.asarray(poly, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def polygon_centroid(poly) -> np.ndarray:
    p = np.asarray(poly, dtype=float)
    x, y = p[:, 0], p[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = cross.sum() / 2
    if abs(a) < 1e-12:
        return p.mean(axis=0)
    return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6 * a)


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    return (orient(p1, p2, q1) * orient(p1, p2, q2) < 0) and (orient(q1, q2, p1) * orient(q1, q2, p2) < 0)


def is_simple_polygon(poly) -> bool:
    p = np.asarray(poly, dtype=float)
    n = len(p)
    if n < 3 or abs(polygon_area(p)) < 1e-12:
        return False
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_cross(p[i], p[(i + 1) % n], p[j], p[(j + 1) % n]):
                return False
    return True


def point_in_polygon(pt, poly) -> bool:
    x, y = pt
    p = np.asarray(poly, dtype=float)
    inside = False
    for (x1, y1), (x2, y2) in zip(p, np.roll(p, -1, axis=0)):
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if xc > x:
                inside = not inside
    return inside


@dataclass(frozen=True)
class Footprint:
    """Yaw-oriented ground rectangle."""

    center: tuple
    half_extents: tuple
    yaw: float = 0.0

    def corners(self) -> np.ndarray:
        hx, hy = self.half_extents
        local = np.array([[hx, hy], [-hx, hy], [-hx, -hy], [hx, -hy]])
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        return local @ np.array([[c, s], [-s, c]]) + np.asarray(self.center)

    def axes(self) -> np.ndarray:
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        return np.array([[c, s], [-s, c]])

    def contains(self, pts) -> np.ndarray:
        d = np.atleast_2d(pts) - np.asarray(self.center)
        local = d @ self.axes().T
        return np.all(np.abs(local) <= np.asarray(self.half_extents), axis=1)

    @classmethod
    def from_cuboid(cls, c: Cuboid3D) -> "Footprint":
        return cls((float(c.center[0]), float(c.center[1])),
                   (float(c.dimensions[0]) / 2, float(c.dimensions[1]) / 2), c.yaw)


def footprints_overlap(a: Footprint, b: Footprint) -> bool:
    """Separating-axis test on two oriented rectangles (touching counts as overlap)."""
    dx, dy = a.center[0] - b.center[0], a.center[1] - b.center[1]
    if dx * dx + dy * dy > (np.hypot(*a.half_extents) + np.hypot(*b.half_extents)) ** 2 * (1 + 1e-9):
        return False  # bounding circles apart
    ca, cb = a.corners(), b.corners()
    for axis in np.vstack([a.axes(), b.axes()]):
        pa, pb = ca @ axis, cb @ axis
        if pa.max() < pb.min() or pb.max() < pa.min():
            return False
    return True


def collides(candidate, others: Sequence) -> bool:
    """True if the candidate footprint overlaps any footprint or cuboid in ``others``."""
    fp = candidate.footprint if isinstance(candidate, AssetInstance) else candidate
    for o in others:
        if isinstance(o, Cuboid3D):
            o = Footprint.from_cuboid(o)
        elif isinstance(o, AssetInstance):
            o = o.footprint
        if footprints_overlap(fp, o):
            return True
    return False


# -- policy ----------------------------------------------------------------------

@dataclass
class ParkingSpot:
    polygon: np.ndarray
    available: bool = True
    has_lock: bool = False
    lock_state: Optional[str] = None

    def __post_init__(self):
        self.polygon = np.asarray(self.polygon, dtype=float)
        if not is_simple_polygon(self.polygon):
            raise ValueError("parking polygon must be simple")

    @property
    def eligible(self) -> bool:
        return self.available and not self.has_lock

    def axis_yaw(self) -> float:
        """Direction of the longest polygon edge."""
        p = self.polygon
        e = np.roll(p, -1, axis=0) - p
        k = int(np.argmax(np.linalg.norm(e, axis=1)))
        return float(np.arctan2(e[k, 1], e[k, 0]))

    def to_dict(self) -> dict:
        return {"polygon": self.polygon.tolist(), "available": self.available,
                "has_lock": self.has_lock, "lock_state": self.lock_state}

    @classmethod
    def from_dict(cls, d: dict) -> "ParkingSpot":
        return cls(d["polygon"], d.get("available", True), d.get("has_lock", False), d.get("lock_state"))


@dataclass
class RegionOfInterest:
    kind: str = RECTANGLE
    half_length: float = 12.0
    half_width: float = 6.0
    r_min: float = 0.0
    r_max: float = 10.0
    spots: List[ParkingSpot] = field(default_factory=list)

    def __post_init__(self):
        if self.kind == RECTANGLE:
            if self.half_length <= 0 or self.half_width <= 0:
                raise ValueError("rectangle extents must be positive")
        elif self.kind == ANNULUS:
            if not 0 <= self.r_min < self.r_max:
                raise ValueError("annulus needs 0 <= r_min < r_max")
        elif self.kind != PARKING:
            raise ValueError(f"unknown region kind {self.kind!r}")

    def contains(self, xy) -> bool:
        x, y = xy
        if self.kind == RECTANGLE:
            return abs(x) <= self.half_length and abs(y) <= self.half_width
        if self.kind == ANNULUS:
            return self.r_min <= np.hypot(x, y) <= self.r_max
        return any(point_in_polygon(xy, s.polygon) for s in self.spots)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == RECTANGLE:
            d.update(half_length=self.half_length, half_width=self.half_width)
        elif self.kind == ANNULUS:
            d.update(r_min=self.r_min, r_max=self.r_max)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RegionOfInterest":
        kw = {k: v for k, v in d.items() if k in ("kind", "half_length", "half_width", "r_min", "r_max")}
        return cls(**kw)


@dataclass
class PlacementPolicy:
    count_distribution: Dict[int, float]
    group_distribution: Dict[str, float]
    region: RegionOfInterest = field(default_factory=RegionOfInterest)
    max_attempts: int = 10
    parking_noise_sigma: float = 0.15
    occlusion_threshold: float = DEFAULT_OCCLUSION_THRESHOLD

    def __post_init__(self):
        counts = {int(k): v for k, v in self.count_distribution.items()}
        if min(counts) < 1:
            raise ValueError("asset counts must be >= 1")
        self.count_distribution = normalize_distribution(counts, "count distribution p(n)")
        self.group_distribution = normalize_distribution(dict(self.group_distribution), "group distribution p(g)")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be positive")
        if self.parking_noise_sigma < 0:
            raise ValueError("parking noise sigma must be non-negative")
        if not 0 < self.occlusion_threshold <= 1:
            raise ValueError("occlusion threshold must lie in (0, 1]")

    @property
    def mean_count(self) -> float:
        return mean_count(self.count_distribution)

    def to_dict(self) -> dict:
        return {
            "count_distribution": {str(k): v for k, v in self.count_distribution.items()},
            "group_distribution": dict(self.group_distribution),
            "region": self.region.to_dict(),
            "max_attempts": self.max_attempts,
            "parking_noise_sigma": self.parking_noise_sigma,
            "occlusion_threshold": self.occlusion_threshold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlacementPolicy":
        return cls(
            {int(k): float(v) for k, v in d["count_distribution"].items()},
            {str(k): float(v) for k, v in d["group_distribution"].items()},
            RegionOfInterest.from_dict(d.get("region", {})),
            int(d.get("max_attempts", 10)),
            float(d.get("parking_noise_sigma", 0.15)),
            float(d.get("occlusion_threshold", DEFAULT_OCCLUSION_THRESHOLD)),
        )


def mean_count(p: Mapping[int, float]) -> float:
    """Expected number of assets per scene, sum_n p(n) * n."""
    return float(sum(int(n) * float(q) for n, q in p.items()))


# -- sampling -------------------------------------------------------------------------

def sample_count(policy: PlacementPolicy, rng: np.random.Generator) -> int:
    ns = list(policy.count_distribution)
    ps = np.array([policy.count_distribution[n] for n in ns])
    return int(ns[rng.choice(len(ns), p=ps)])


def allocate_groups(n: int, p, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Split ``n`` assets across groups with probabilities ``p``; the total is always ``n``.

    Every group gets ``floor(n * p_g)``; the leftover units go to the largest
    remainders, lower index first on ties. With ``rng`` the leftover units are
    instead drawn by systematic sampling with inclusion probability equal to
    each remainder, so ``E[n_g] = n * p_g`` exactly.
    """
    probs = np.asarray(list(p.values()) if isinstance(p, Mapping) else p, dtype=float)
    if n < 0:
        raise ValueError("n must be non-negative")
    probs = probs / probs.sum()
    quota = n * probs
    base = np.floor(quota + 1e-12).astype(int)
    base = np.minimum(base, n)
    rem = np.clip(quota - base, 0.0, None)
    left = n - int(base.sum())
    if left <= 0:
        return base
    if rng is None:
        order = sorted(range(len(rem)), key=lambda g: (-rem[g], g))
        for g in order[:left]:
            base[g] += 1
        return base
    cum = np.cumsum(rem)
    cum *= left / cum[-1]
    picks = rng.uniform() + np.arange(left)
    chosen = np.searchsorted(cum, picks, side="right")
    base[np.minimum(chosen, len(base) - 1)] += 1
    return base


def sample_pose(region: RegionOfInterest, mesh: MeshAsset, rng: np.random.Generator,
                ground_z: float = 0.0, spot: Optional[ParkingSpot] = None,
                noise_sigma: float = 0.15) -> RigidTransform:
    """Random ground-resting pose (asset -> ego) inside ``region``."""
    if region.kind == RECTANGLE:
        x = rng.uniform(-region.half_length, region.half_length)
        y = rng.uniform(-region.half_width, region.half_width)
        yaw = wrap_angle(rng.uniform(-np.pi, np.pi))
    elif region.kind == ANNULUS:
        r = np.sqrt(rng.uniform(region.r_min**2, region.r_max**2))
        a = rng.uniform(-np.pi, np.pi)
        x, y = r * np.cos(a), r * np.sin(a)
        yaw = wrap_angle(rng.uniform(-np.pi, np.pi))
    else:
        if spot is None:
            eligible = [s for s in region.spots if s.eligible]
            if not eligible:
                raise ValueError("no eligible parking spot")
            spot = eligible[int(rng.integers(len(eligible)))]
        cx, cy = polygon_centroid(spot.polygon)
        if noise_sigma > 0:
            dx, dy = rng.normal(0.0, noise_sigma, size=2)
        else:
            dx = dy = 0.0
        x, y = cx + dx, cy + dy
        yaw = spot.axis_yaw()
    z = ground_z - float(mesh.bbox_min[2])
    return RigidTransform.from_yaw(yaw, (x, y, z))


# -- instances ----------------------------------------------------------------------

@dataclass(frozen=True)
class CatalogEntry:
    asset_id: str
    mesh: MeshAsset
    class_label: str = "object"
    lock_state: Optional[str] = None


@dataclass(eq=False)
class AssetInstance:
    asset_id: str
    group: str
    pose: RigidTransform
    mesh: MeshAsset
    class_label: str = "object"
    saturation: float = 1.0
    shadow_strength: float = 1.0
    visibility: Dict[str, float] = field(default_factory=dict)
    lock_state: Optional[str] = None
    spot_index: Optional[int] = None

    @property
    def footprint(self) -> Footprint:
        return footprint_of(self.mesh, self.pose)

    @property
    def yaw(self) -> float:
        return self.pose.yaw

    def posed(self) -> PosedMesh:
        return PosedMesh(self.mesh, self.pose)


def footprint_of(mesh: MeshAsset, pose: RigidTransform) -> Footprint:
    lo, hi = mesh.bbox_min, mesh.bbox_max
    center_local = np.array([(lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2, 0.0])
    c = pose.apply(center_local)
    return Footprint((float(c[0]), float(c[1])),
                     (float(hi[0] - lo[0]) / 2, float(hi[1] - lo[1]) / 2), pose.yaw)


def instance_cuboid(mesh: MeshAsset, pose: RigidTransform, class_label: str = "object") -> Cuboid3D:
    lo, hi = mesh.bbox_min, mesh.bbox_max
    return Cuboid3D(pose.apply((lo + hi) / 2), hi - lo, pose.yaw, class_label)


# -- occlusion ------------------------------------------------------------------------

def pixel_window(camera: CameraModel, points: np.ndarray, pad: int = 3):
    """Pixel index window covering the projection of ``points``; whole image if unsure."""
    pix, _, valid = camera.project_points(points)
    if not valid.all():
        return 0, camera.width, 0, camera.height
    u0 = int(np.floor(pix[:, 0].min())) - pad
    u1 = int(np.ceil(pix[:, 0].max())) + pad + 1
    v0 = int(np.floor(pix[:, 1].min())) - pad
    v1 = int(np.ceil(pix[:, 1].max())) + pad + 1
    u0, v0 = max(u0, 0), max(v0, 0)
    u1, v1 = min(u1, camera.width), min(v1, camera.height)
    return u0, u1, v0, v1


def _triangle_pixel_boxes(pm: PosedMesh, camera: CameraModel, k: int = 4):
    """Pixel bounding box of every triangle; non-finite when a sample does not project."""
    if camera.kind == "ftheta":
        s = np.linspace(0.0, 1.0, k + 1)[None, :, None]
        e3 = (pm.e2 - pm.e1)[:, None]
        pts = np.concatenate([pm.v0[:, None] + s * pm.e1[:, None], pm.v0[:, None] + s * pm.e2[:, None],
                              (pm.v0 + pm.e1)[:, None] + s * e3], axis=1)
        pad = 1.0
    else:
        pts = np.stack([pm.v0, pm.v0 + pm.e1, pm.v0 + pm.e2], axis=1)
        pad = 1e-3
    m, q = pts.shape[:2]
    pix, _, valid = camera.project_points(pts.reshape(-1, 3))
    pix = pix.reshape(m, q, 2)
    ok = valid.reshape(m, q).all(axis=1)
    lo = np.where(ok[:, None], pix.min(axis=1) - pad, -np.inf)
    hi = np.where(ok[:, None], pix.max(axis=1) + pad, np.inf)
    return lo, hi


def cast_mesh(pm: PosedMesh, camera: CameraModel):
    """Ray-cast a posed mesh through every pixel center of ``camera`` near its projection.

    Returns ``(window, t, tri, b1, b2)`` with ``window = (u0, u1, v0, v1)`` and
    per-pixel arrays over the window (``t = inf`` and ``tri = -1`` on a miss).
    """
    samples = pm.edge_points() if camera.kind == "ftheta" else pm.vertices
    u0, u1, v0, v1 = pixel_window(camera, samples)
    shape = (max(v1 - v0, 0), max(u1 - u0, 0))
    n = shape[0] * shape[1]
    t = np.full(n, np.inf)
    tri = np.full(n, -1, dtype=np.int64)
    b1 = np.zeros(n)
    b2 = np.zeros(n)
    if n:
        rays = camera.pixel_rays[v0:v1, u0:u1].reshape(-1, 3)
        ok = np.isfinite(rays[:, 0])
        near = ok & ray_sphere_mask(camera.center, np.where(ok[:, None], rays, 0.0), pm.center, pm.radius)
        idx = np.flatnonzero(near)
        if len(idx):
            lo, hi = _triangle_pixel_boxes(pm, camera)
            xy = np.column_stack([u0 + idx % shape[1], v0 + idx // shape[1]]).astype(float)
            r_i, t_i = candidate_pairs(xy, lo, hi)
            hits = intersect_pairs(camera.center, rays[idx], pm, r_i, t_i)
            t[idx], tri[idx], b1[idx], b2[idx] = hits
    return (u0, u1, v0, v1), t.reshape(shape), tri.reshape(shape), b1.reshape(shape), b2.reshape(shape)


def silhouette(pm: PosedMesh, camera: CameraModel):
    """Ray-cast a posed mesh into ``camera``.

    Returns ``(window, t)`` where ``window = (u0, u1, v0, v1)`` and ``t`` is the
    per-pixel hit distance inside the window (``inf`` on a miss).
    """
    window, t, _, _, _ = cast_mesh(pm, camera)
    return window, t


def cuboid_distance(camera: CameraModel, window, cuboids: Sequence[Cuboid3D]) -> np.ndarray:
    """Nearest ray entry distance into any cuboid over a pixel window."""
    u0, u1, v0, v1 = window
    rays = camera.pixel_rays[v0:v1, u0:u1].reshape(-1, 3)
    best = np.full(len(rays), np.inf)
    ok = np.isfinite(rays[:, 0])
    safe = np.where(ok[:, None], rays, 0.0)
    for c in cuboids:
        sel = np.flatnonzero(ok & ray_sphere_mask(camera.center, safe, c.center, float(np.linalg.norm(c.dimensions)) / 2))
        if len(sel):
            best[sel] = np.minimum(best[sel], intersect_cuboid(camera.center, rays[sel], c))
    return best.reshape(v1 - v0, u1 - u0)


def occlusion_fraction(candidate, camera: CameraModel, scene: Sequence[Cuboid3D]) -> float:
    """Fraction of the candidate's silhouette pixels hidden behind a nearer scene cuboid."""
    pm = candidate.posed() if isinstance(candidate, AssetInstance) else candidate
    window, t = silhouette(pm, camera)
    mask = np.isfinite(t)
    if not mask.any():
        raise NotVisibleError(f"candidate does not project into camera {camera.name}")
    if not scene:
        return 0.0
    occ = cuboid_distance(camera, window, scene)
    return float((occ[mask] < t[mask]).sum() / mask.sum())


# -- placement loop -----------------------------------------------------------------

@dataclass
class PlacementStats:
    attempts: int = 0
    placed: int = 0
    skipped: int = 0
    requested: int = 0
    rejections: Counter = field(default_factory=Counter)
    per_group: Counter = field(default_factory=Counter)

    def merge(self, other: "PlacementStats") -> "PlacementStats":
        return PlacementStats(
            self.attempts + other.attempts,
            self.placed + other.placed,
            self.skipped + other.skipped,
            self.requested + other.requested,
            self.rejections + other.rejections,
            self.per_group + other.per_group,
        )

    def to_dict(self) -> dict:
        return {
            "attempts": self.attempts,
            "placed": self.placed,
            "skipped": self.skipped,
            "requested": self.requested,
            "rejections": dict(sorted(self.rejections.items())),
            "per_group": dict(sorted(self.per_group.items())),
        }


def place_assets(policy: PlacementPolicy, catalog: Mapping[str, Sequence[CatalogEntry]],
                 scene: Sequence[Cuboid3D], rng: np.random.Generator,
                 cameras: Sequence[CameraModel] = (), ground_z: float = 0.0,
                 obstacles: Sequence[Footprint] = (), n: Optional[int] = None):
    """Sample, validate and accept asset instances for one scene.

    Candidates are rejected for leaving the region, overlapping scene cuboids,
    ``obstacles`` or already accepted instances, and, when ``cameras`` are
    given, for not being visible (occlusion below the policy threshold) in any
    camera. Returns ``(instances, PlacementStats)``.
    """
    groups = list(policy.group_distribution)
    for g in groups:
        if policy.group_distribution[g] > 0 and not catalog.get(g):
            raise ValueError(f"asset group {g!r} has no catalog entries")
    stats = PlacementStats()
    if n is None:
        n = sample_count(policy, rng)
    counts = allocate_groups(n, [policy.group_distribution[g] for g in groups], rng)
    stats.requested = int(n)
    accepted: List[AssetInstance] = []
    blockers = list(scene) + list(obstacles)
    spots = policy.region.spots if policy.region.kind == PARKING else []
    used_spots = set()

    for g, n_g in zip(groups, counts):
        for _ in range(int(n_g)):
            entries = catalog[g]
            entry = entries[int(rng.integers(len(entries)))]
            placed = None
            for _attempt in range(policy.max_attempts):
                stats.attempts += 1
                spot_idx = None
                if policy.region.kind == PARKING:
                    free = [i for i, s in enumerate(spots) if s.eligible and i not in used_spots]
                    if not free:
                        stats.rejections["no_spot"] += 1
                        break
                    spot_idx = free[int(rng.integers(len(free)))]
                    pose = sample_pose(policy.region, entry.mesh, rng, ground_z, spots[spot_idx],
                                       policy.parking_noise_sigma)
                else:
                    pose = sample_pose(policy.region, entry.mesh, rng, ground_z)
                fp = footprint_of(entry.mesh, pose)
                if policy.region.kind != PARKING and not policy.region.contains(fp.center):
                    stats.rejections["region"] += 1
                    continue
                if collides(fp, blockers) or collides(fp, accepted):
                    stats.rejections["collision"] += 1
                    continue
                inst = AssetInstance(entry.asset_id, g, pose, entry.mesh, entry.class_label,
                                     lock_state=entry.lock_state, spot_index=spot_idx)
                if cameras:
                    occluders = list(scene) + [instance_cuboid(a.mesh, a.pose) for a in accepted]
                    vis = {}
                    for cam in cameras:
                        try:
                            frac = occlusion_fraction(inst, cam, occluders)
                        except NotVisibleError:
                            continue
                        if frac < policy.occlusion_threshold:
                            vis[cam.name] = 1.0 - frac
                    if not vis:
                        stats.rejections["occluded"] += 1
                        continue
                    inst.visibility = vis
                placed = inst
                break
            if placed is None:
                stats.skipped += 1
                continue
            if placed.spot_index is not None:
                used_spots.add(placed.spot_index)
            accepted.append(placed)
            stats.placed += 1
            stats.per_group[g] += 1
    return accepted, stats
