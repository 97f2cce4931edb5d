"""Ground truth for inserted assets, updates to existing labels, and evaluation metrics."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import CUBOID_EDGES, CameraModel, Cuboid3D, cuboid_corners, rotation_z, wrap_angle
from .placement import AssetInstance, ParkingSpot, cuboid_distance, point_in_polygon

HAZARD = "hazard"
NONE_LABEL = "none"
REL_GAP_SUCCESS = 0.10


class MetricsUndefinedError(ValueError):
    """Metric has no defined value for the given input (e.g. no ground truth)."""


# -- label containers ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RadialDistanceMap:
    """Equiangular bins around the ego; bin ``b`` spans azimuths [2 pi b/B, 2 pi (b+1)/B).

    ``inf`` distance means unbounded.
    """

    distances: np.ndarray
    labels: tuple

    def __post_init__(self):
        d = np.asarray(self.distances, dtype=float).copy()
        if d.ndim != 1 or len(d) < 1:
            raise ValueError("need at least one bin")
        if np.any(d <= 0) or np.any(np.isnan(d)):
            raise ValueError("distances must be positive (inf = unbounded)")
        if len(self.labels) != len(d):
            raise ValueError("one label per bin")
        d.setflags(write=False)
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "labels", tuple(self.labels))

    @classmethod
    def unbounded(cls, bins: int = 360) -> "RadialDistanceMap":
        return cls(np.full(bins, np.inf), (NONE_LABEL,) * bins)

    @property
    def bins(self) -> int:
        return len(self.distances)

    def bin_edges(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.bins + 1) / self.bins

    def to_dict(self) -> dict:
        return {"bins": self.bins,
                "distances": [None if not np.isfinite(x) else float(x) for x in self.distances],
                "labels": list(self.labels)}

    @classmethod
    def from_dict(cls, d: dict) -> "RadialDistanceMap":
        return cls(np.array([np.inf if x is None else x for x in d["distances"]], dtype=float), d["labels"])


@dataclass
class BBox2D:
    x0: float
    y0: float
    x1: float
    y1: float
    class_label: str = "object"
    truncation: float = 0.0
    visibility: float = 1.0
    cuboid_index: Optional[int] = None

    @property
    def occlusion(self) -> float:
        return 1.0 - self.visibility

    @property
    def area(self) -> float:
        return max(self.x1 - self.x0, 0.0) * max(self.y1 - self.y0, 0.0)

    def to_dict(self) -> dict:
        return {"box": [self.x0, self.y0, self.x1, self.y1], "class": self.class_label,
                "truncation": self.truncation, "occlusion": self.occlusion,
                "visibility": self.visibility, "cuboid": self.cuboid_index}

    @classmethod
    def from_dict(cls, d: dict) -> "BBox2D":
        x0, y0, x1, y1 = d["box"]
        return cls(x0, y0, x1, y1, d.get("class", "object"), d.get("truncation", 0.0),
                   d.get("visibility", 1.0 - d.get("occlusion", 0.0)), d.get("cuboid"))


@dataclass
class LabelSet:
    cuboids: List[Cuboid3D] = field(default_factory=list)
    synthetic: List[bool] = field(default_factory=list)
    bboxes2d: Dict[str, List[BBox2D]] = field(default_factory=dict)
    freespace: RadialDistanceMap = field(default_factory=RadialDistanceMap.unbounded)
    parking: List[ParkingSpot] = field(default_factory=list)

    def __post_init__(self):
        if len(self.synthetic) < len(self.cuboids):
            self.synthetic = list(self.synthetic) + [False] * (len(self.cuboids) - len(self.synthetic))

    def copy(self) -> "LabelSet":
        return LabelSet(
            list(self.cuboids), list(self.synthetic),
            {k: [BBox2D(**vars(b)) for b in v] for k, v in self.bboxes2d.items()},
            self.freespace,
            [ParkingSpot(s.polygon.copy(), s.available, s.has_lock, s.lock_state) for s in self.parking],
        )

    def to_dict(self) -> dict:
        return {
            "cuboids": [dict(c.to_dict(), synthetic=s) for c, s in zip(self.cuboids, self.synthetic)],
            "bboxes2d": {k: [b.to_dict() for b in v] for k, v in sorted(self.bboxes2d.items())},
            "freespace": self.freespace.to_dict(),
            "parking": [s.to_dict() for s in self.parking],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LabelSet":
        cuboids = [Cuboid3D.from_dict(c) for c in d.get("cuboids", [])]
        synthetic = [bool(c.get("synthetic", False)) for c in d.get("cuboids", [])]
        boxes = {k: [BBox2D.from_dict(b) for b in v] for k, v in d.get("bboxes2d", {}).items()}
        fs = RadialDistanceMap.from_dict(d["freespace"]) if "freespace" in d else RadialDistanceMap.unbounded()
        parking = [ParkingSpot.from_dict(p) for p in d.get("parking", [])]
        return cls(cuboids, synthetic, boxes, fs, parking)


@dataclass(frozen=True)
class MatchCriteria:
    max_relative_radial: float = 0.10
    max_yaw: float = float(np.deg2rad(2.0))

    def __post_init__(self):
        if self.max_relative_radial <= 0 or self.max_yaw <= 0:
            raise ValueError("match criteria must be positive")


# -- ground-truth generation -------------------------------------------------------

def synth_cuboid(instance: AssetInstance) -> Cuboid3D:
    """Tight yaw-aligned box around the posed mesh."""
    verts = instance.pose.apply(instance.mesh.vertices)
    yaw = instance.pose.yaw
    R = rotation_z(yaw)
    local = verts @ R  # ego -> yaw-aligned frame
    lo, hi = local.min(axis=0), local.max(axis=0)
    center = R @ ((lo + hi) / 2)
    return Cuboid3D(center, hi - lo, yaw, instance.class_label)


def _edge_samples(c: Cuboid3D, k: int = 16) -> np.ndarray:
    corners = cuboid_corners(c)
    s = np.linspace(0.0, 1.0, k + 1)[:, None]
    return np.concatenate([corners[a] + s * (corners[b] - corners[a]) for a, b in CUBOID_EDGES])


def _box_silhouette(c: Cuboid3D, camera: CameraModel, window):
    return cuboid_distance(camera, window, [c])


def cuboid_to_bbox2d(c: Cuboid3D, camera: CameraModel, occluders: Sequence[Cuboid3D] = (),
                     samples: int = 16) -> Optional[BBox2D]:
    """2D box of a cuboid in one camera, with truncation and visibility attributes.

    The box is the hull of the projected corners and edge samples, clipped to
    the image. When the cuboid straddles the edge of the camera's valid
    projection (behind a pinhole, beyond a fisheye's max angle) the hull of
    the ray-cast silhouette is used instead.
    """
    pts = _edge_samples(c, samples)
    pix, _, valid = camera.project_points(pts)
    if not valid.any():
        return None
    w, h = camera.width, camera.height
    full = (0, w, 0, h)
    if valid.all():
        x0, y0 = pix.min(axis=0)
        x1, y1 = pix.max(axis=0)
        sil_window = (max(int(np.floor(x0)) - 1, 0), min(int(np.ceil(x1)) + 2, w),
                      max(int(np.floor(y0)) - 1, 0), min(int(np.ceil(y1)) + 2, h))
    else:
        sil_window = full
        x0 = y0 = x1 = y1 = None
    if sil_window[1] <= sil_window[0] or sil_window[3] <= sil_window[2]:
        return None
    t = _box_silhouette(c, camera, sil_window)
    mask = np.isfinite(t)
    if x0 is None:
        if not mask.any():
            return None
        vs, us = np.nonzero(mask)
        x0, x1 = us.min() + sil_window[0] - 0.5, us.max() + sil_window[0] + 0.5
        y0, y1 = vs.min() + sil_window[2] - 0.5, vs.max() + sil_window[2] + 0.5
        unclipped_area = max((x1 - x0) * (y1 - y0), 1e-12)
    else:
        unclipped_area = max((x1 - x0) * (y1 - y0), 1e-12)
    cx0, cy0 = max(x0, -0.5), max(y0, -0.5)
    cx1, cy1 = min(x1, w - 0.5), min(y1, h - 0.5)
    if cx1 <= cx0 or cy1 <= cy0:
        return None
    truncation = float(np.clip(1.0 - (cx1 - cx0) * (cy1 - cy0) / unclipped_area, 0.0, 1.0))
    visibility = 1.0
    if mask.any() and occluders:
        occ = cuboid_distance(camera, sil_window, occluders)
        visibility = float(1.0 - (occ[mask] < t[mask]).sum() / mask.sum())
    return BBox2D(float(cx0), float(cy0), float(cx1), float(cy1), c.class_label, truncation, visibility)


# -- label modification ------------------------------------------------------------

def _polygon_wedge_clip(poly: np.ndarray, a0: float, a1: float) -> np.ndarray:
    """Clip a convex polygon to the wedge of azimuths [a0, a1] (a1 - a0 < pi)."""
    out = poly
    # half-planes: left of ray a0, right of ray a1
    for nvec in (np.array([-np.sin(a0), np.cos(a0)]), np.array([np.sin(a1), -np.cos(a1)])):
        if len(out) == 0:
            break
        res = []
        n = len(out)
        for i in range(n):
            p, q = out[i], out[(i + 1) % n]
            dp, dq = p @ nvec, q @ nvec
            if dp >= 0:
                res.append(p)
            if (dp >= 0) != (dq >= 0):
                res.append(p + (q - p) * (dp / (dp - dq)))
        out = np.array(res) if res else np.zeros((0, 2))
    return out


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    denom = ab @ ab
    s = 0.0 if denom == 0 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(a + s * ab - p))


def _area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def rdm_update(rdm: RadialDistanceMap, c: Cuboid3D, label: str = HAZARD) -> RadialDistanceMap:
    """Lower each bin touched by the cuboid footprint to the footprint's nearest distance in that bin."""
    poly = c.footprint_corners()
    if np.all(np.abs(poly).max(axis=0) == 0):
        return rdm
    angles = np.mod(np.arctan2(poly[:, 1], poly[:, 0]), 2 * np.pi)
    # smallest arc containing all corner azimuths (origin outside the convex footprint)
    order = np.sort(angles)
    gaps = np.diff(np.concatenate([order, order[:1] + 2 * np.pi]))
    k = int(np.argmax(gaps))
    start = order[(k + 1) % len(order)]
    span = 2 * np.pi - gaps[k]
    origin_inside = _area(_polygon_wedge_clip(poly, 0.0, np.pi - 1e-9)) + \
        _area(_polygon_wedge_clip(poly, np.pi, 2 * np.pi - 1e-9)) > 0 and \
        np.all(_inside_convex(poly, np.zeros(2)))
    B = rdm.bins
    width = 2 * np.pi / B
    dist = np.array(rdm.distances)
    labels = list(rdm.labels)
    if origin_inside:
        return rdm
    first = int(np.floor(start / width))
    last = int(np.floor((start + span) / width))
    for b in range(first, last + 1):
        bb = b % B
        a0, a1 = bb * width, (bb + 1) * width
        pieces = []
        # bins wider than pi are split so each wedge stays convex
        splits = max(1, int(np.ceil((a1 - a0) / (np.pi / 2))))
        for j in range(splits):
            lo = a0 + (a1 - a0) * j / splits
            hi = a0 + (a1 - a0) * (j + 1) / splits
            piece = _polygon_wedge_clip(poly, lo, hi)
            if _area(piece) > 1e-12:
                pieces.append(piece)
        if not pieces:
            continue
        d = min(
            _point_segment_distance(np.zeros(2), p[i], p[(i + 1) % len(p)])
            for p in pieces for i in range(len(p))
        )
        if d < dist[bb]:
            dist[bb] = d
            labels[bb] = label
    return RadialDistanceMap(dist, tuple(labels))


def _inside_convex(poly: np.ndarray, pt: np.ndarray) -> bool:
    n = len(poly)
    signs = []
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        signs.append((b[0] - a[0]) * (pt[1] - a[1]) - (b[1] - a[1]) * (pt[0] - a[0]))
    signs = np.array(signs)
    return bool(np.all(signs >= 0) or np.all(signs <= 0))


def _real_depth(c: Cuboid3D, camera: CameraModel, window) -> np.ndarray:
    """Camera-convention depth of the cuboid over a window; misses get its nearest corner depth."""
    t = _box_silhouette(c, camera, window)
    u0, u1, v0, v1 = window
    scale = camera.pixel_depth_scale[v0:v1, u0:u1]
    depth = t * scale
    _, corner_depth, _ = camera.project_points(cuboid_corners(c))
    return np.where(np.isfinite(depth), depth, corner_depth.min())


def update_existing_labels(labels: LabelSet, instances: Sequence[AssetInstance], layers: Dict[str, object],
                           cameras: Dict[str, CameraModel]) -> LabelSet:
    """Fold inserted assets into the pre-existing labels.

    Real cuboids lose visibility where a nearer synthetic pixel covers their
    2D box, freespace bins shrink to inserted assets, and parking spots that
    received a locked ground lock become unavailable.
    """
    out = labels.copy()
    if not instances:
        return out
    for cam_name, boxes in out.bboxes2d.items():
        lay = layers.get(cam_name)
        cam = cameras.get(cam_name)
        if lay is None or cam is None:
            continue
        for box in boxes:
            if box.cuboid_index is None or out.synthetic[box.cuboid_index]:
                continue
            c = out.cuboids[box.cuboid_index]
            u0 = max(int(np.ceil(box.x0 - 0.5)), 0)
            v0 = max(int(np.ceil(box.y0 - 0.5)), 0)
            u1 = min(int(np.floor(box.x1 + 0.5)), cam.width)
            v1 = min(int(np.floor(box.y1 + 0.5)), cam.height)
            if u1 <= u0 or v1 <= v0:
                continue
            window = (u0, u1, v0, v1)
            alpha = lay.alpha[v0:v1, u0:u1]
            sdepth = lay.depth_layer[v0:v1, u0:u1]
            rdepth = _real_depth(c, cam, window)
            covered = (alpha > 0.5) & (sdepth < rdepth)
            frac = float(covered.mean())
            box.visibility = float(box.visibility * (1.0 - frac))
    for i, c in enumerate(out.cuboids):
        if out.synthetic[i]:
            continue
        vis = [b.visibility for boxes in out.bboxes2d.values() for b in boxes if b.cuboid_index == i]
        if vis:
            out.cuboids[i] = c.replace(visibility=float(max(vis)))
    fs = out.freespace
    for inst in instances:
        fs = rdm_update(fs, synth_cuboid(inst), HAZARD)
    out.freespace = fs
    for inst in instances:
        if inst.lock_state is None:
            continue
        xy = inst.pose.translation[:2]
        for spot in out.parking:
            if point_in_polygon(xy, spot.polygon):
                spot.has_lock = True
                spot.lock_state = inst.lock_state
                if inst.lock_state == "locked":
                    spot.available = False
    return out


def add_synthetic_labels(labels: LabelSet, instances: Sequence[AssetInstance],
                         cameras: Dict[str, CameraModel]) -> LabelSet:
    """Append a cuboid per instance plus a 2D box in every camera where it is visible."""
    out = labels.copy()
    real = [c for c, s in zip(labels.cuboids, labels.synthetic) if not s]
    synth = [synth_cuboid(i) for i in instances]
    for k, (inst, c) in enumerate(zip(instances, synth)):
        idx = len(out.cuboids)
        occluders = real + [s for j, s in enumerate(synth) if j != k]
        best = 0.0
        for name, cam in cameras.items():
            box = cuboid_to_bbox2d(c, cam, occluders)
            if box is None or box.visibility <= 0:
                continue
            box.cuboid_index = idx
            out.bboxes2d.setdefault(name, []).append(box)
            best = max(best, box.visibility)
        out.cuboids.append(c.replace(visibility=best))
        out.synthetic.append(True)
    return out


# -- metrics -----------------------------------------------------------------------

@dataclass
class Assignment:
    matches: List[Tuple[int, int]]
    false_positives: List[int]
    false_negatives: List[int]
    n_pred: int
    n_gt: int
    position_errors: Dict[int, float] = field(default_factory=dict)
    yaw_errors: Dict[int, float] = field(default_factory=dict)

    @property
    def tp(self) -> int:
        return len(self.matches)


def _radial(c: Cuboid3D) -> float:
    return c.range_xy


def match_cuboids(predictions: Sequence[Cuboid3D], ground_truth: Sequence[Cuboid3D],
                  criteria: MatchCriteria = MatchCriteria(), scores: Optional[Sequence[float]] = None,
                  eps: float = 1e-6) -> Assignment:
    """Greedy one-to-one matching by smallest relative radial error.

    A pair qualifies when classes agree, ``|r_p - r_g| / r_g < max_relative_radial``
    (radial distance in the ground plane) and ``|yaw_p - yaw_g| <= max_yaw``.
    Ties go to the higher-scoring prediction.
    """
    scores = np.zeros(len(predictions)) if scores is None else np.asarray(scores, dtype=float)
    cands = []
    for i, p in enumerate(predictions):
        rp = _radial(p)
        for j, g in enumerate(ground_truth):
            if p.class_label != g.class_label:
                continue
            rg = _radial(g)
            if rg == 0:
                ok = rp < eps
                err = rp
            else:
                err = abs(rp - rg) / rg
                ok = err < criteria.max_relative_radial
            dyaw = abs(wrap_angle(p.yaw - g.yaw))
            if ok and dyaw <= criteria.max_yaw:
                cands.append((err, -scores[i], i, j))
    cands.sort()
    used_p, used_g = set(), set()
    matches = []
    pos_err, yaw_err = {}, {}
    for err, _, i, j in cands:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        matches.append((i, j))
        pos_err[i] = float(np.linalg.norm(predictions[i].center - ground_truth[j].center))
        yaw_err[i] = float(abs(wrap_angle(predictions[i].yaw - ground_truth[j].yaw)))
    fp = [i for i in range(len(predictions)) if i not in used_p]
    fn = [j for j in range(len(ground_truth)) if j not in used_g]
    return Assignment(sorted(matches), fp, fn, len(predictions), len(ground_truth), pos_err, yaw_err)


def average_precision(scores, is_tp, n_gt: int) -> float:
    """All-points interpolated area under the precision-recall curve."""
    if n_gt <= 0:
        raise MetricsUndefinedError("average precision needs at least one ground-truth object")
    scores = np.asarray(scores, dtype=float)
    is_tp = np.asarray(is_tp, dtype=bool)
    if len(scores) == 0:
        return 0.0
    order = np.argsort(-scores, kind="stable")
    tp = np.cumsum(is_tp[order])
    fp = np.cumsum(~is_tp[order])
    recall = tp / n_gt
    precision = tp / (tp + fp)
    mrec = np.concatenate([[0.0], recall])
    mpre = np.concatenate([precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    return float(np.sum((mrec[1:] - mrec[:-1]) * mpre[:-1]))


@dataclass
class DetectionAccumulator:
    """Mergeable per-prediction record; merging is associative and commutative."""

    scores: list = field(default_factory=list)
    is_tp: list = field(default_factory=list)
    n_gt: int = 0
    position_errors: list = field(default_factory=list)
    yaw_errors: list = field(default_factory=list)

    def add(self, assignment: Assignment, scores: Sequence[float]) -> "DetectionAccumulator":
        matched = {i for i, _ in assignment.matches}
        for i in range(assignment.n_pred):
            tp = i in matched
            self.scores.append(float(scores[i]))
            self.is_tp.append(tp)
            self.position_errors.append(assignment.position_errors.get(i, np.nan))
            self.yaw_errors.append(assignment.yaw_errors.get(i, np.nan))
        self.n_gt += assignment.n_gt
        return self

    def merge(self, other: "DetectionAccumulator") -> "DetectionAccumulator":
        return DetectionAccumulator(self.scores + other.scores, self.is_tp + other.is_tp,
                                    self.n_gt + other.n_gt, self.position_errors + other.position_errors,
                                    self.yaw_errors + other.yaw_errors)

    def compute(self, threshold: float = 0.5) -> dict:
        if self.n_gt <= 0:
            raise MetricsUndefinedError("detection metrics need at least one ground-truth object")
        s = np.asarray(self.scores, dtype=float)
        tp = np.asarray(self.is_tp, dtype=bool)
        ap = average_precision(s, tp, self.n_gt)
        keep = s >= threshold
        n_tp = int((tp & keep).sum())
        n_fp = int((~tp & keep).sum())
        precision = n_tp / (n_tp + n_fp) if n_tp + n_fp else 0.0
        recall = n_tp / self.n_gt
        f = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        sel = tp & keep
        pe = np.asarray(self.position_errors)[sel]
        ye = np.asarray(self.yaw_errors)[sel]
        return {
            "ap": ap,
            "f_score": f,
            "precision": precision,
            "recall": recall,
            "position_error_m": float(pe.mean()) if len(pe) else float("nan"),
            "yaw_error_deg": float(np.rad2deg(ye).mean()) if len(ye) else float("nan"),
        }


def detection_metrics(assignment: Assignment, scores: Sequence[float], threshold: float = 0.5) -> dict:
    return DetectionAccumulator().add(assignment, scores).compute(threshold)


@dataclass
class FreespaceAccumulator:
    """Pools per-bin freespace errors across scenes; merging is associative and commutative."""

    abs_gap: list = field(default_factory=list)
    rel_gap: list = field(default_factory=list)
    pred_hazard: list = field(default_factory=list)
    gt_hazard: list = field(default_factory=list)

    def add(self, pred: RadialDistanceMap, gt: RadialDistanceMap, radius_limit: float = 10.0,
            max_range: float = 100.0, hazard_label: str = HAZARD) -> "FreespaceAccumulator":
        """Record bins whose ground truth lies within ``radius_limit``; unbounded predictions count as ``max_range``."""
        if pred.bins != gt.bins:
            raise ValueError("radial distance maps have different bin counts")
        g = gt.distances
        sel = np.isfinite(g) & (g <= radius_limit)
        p = np.minimum(pred.distances, max_range)[sel]
        gap = np.abs(p - g[sel])
        self.abs_gap.extend(gap.tolist())
        self.rel_gap.extend((gap / g[sel]).tolist())
        self.pred_hazard.extend((np.array(pred.labels, dtype=object)[sel] == hazard_label).tolist())
        self.gt_hazard.extend((np.array(gt.labels, dtype=object)[sel] == hazard_label).tolist())
        return self

    def merge(self, other: "FreespaceAccumulator") -> "FreespaceAccumulator":
        return FreespaceAccumulator(self.abs_gap + other.abs_gap, self.rel_gap + other.rel_gap,
                                    self.pred_hazard + other.pred_hazard, self.gt_hazard + other.gt_hazard)

    def compute(self) -> dict:
        if not self.abs_gap:
            raise MetricsUndefinedError("no ground-truth bin inside the radius limit")
        rel = np.asarray(self.rel_gap)
        pl = np.asarray(self.pred_hazard, dtype=bool)
        gl = np.asarray(self.gt_hazard, dtype=bool)
        tp = int((pl & gl).sum())
        return {
            "abs_gap": float(np.mean(self.abs_gap)),
            "rel_gap": float(rel.mean()),
            "success_rate": float((rel < REL_GAP_SUCCESS).mean()),
            "hazard_precision": tp / int(pl.sum()) if pl.any() else float("nan"),
            "hazard_recall": tp / int(gl.sum()) if gl.any() else float("nan"),
            "bins_evaluated": len(rel),
        }


def rdm_metrics(pred: RadialDistanceMap, gt: RadialDistanceMap, radius_limit: float = 10.0,
                max_range: float = 100.0, hazard_label: str = HAZARD) -> dict:
    """Freespace gaps and hazard classification over bins whose ground truth lies within ``radius_limit``.

    Unbounded predictions are scored as ``max_range``.
    """
    return FreespaceAccumulator().add(pred, gt, radius_limit, max_range, hazard_label).compute()
