"""Triangle meshes, Wavefront OBJ loading and ray casting against meshes and boxes."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import Cuboid3D, RigidTransform, rotation_z


@dataclass(frozen=True, eq=False)
class MeshAsset:
    """Triangle mesh in its local frame (z up, meters).

    ``colors`` holds one linear RGB albedo per triangle.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    normals: np.ndarray
    colors: np.ndarray
    name: str = "mesh"

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        n = np.asarray(self.normals, dtype=float).reshape(-1, 3)
        c = np.asarray(self.colors, dtype=float)
        if c.ndim == 1:
            c = np.broadcast_to(c, (len(t), 3)).copy()
        if len(t) and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle index out of range")
        if n.shape != v.shape:
            raise ValueError("one normal per vertex required")
        norms = np.linalg.norm(n, axis=1)
        if np.any(np.abs(norms - 1) > 1e-6):
            raise ValueError("vertex normals must be unit length")
        if c.shape != (len(t), 3):
            raise ValueError("one color per triangle required")
        for name, a in (("vertices", v), ("triangles", t), ("normals", n), ("colors", c)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def bbox_min(self) -> np.ndarray:
        return self.vertices.min(axis=0)

    @property
    def bbox_max(self) -> np.ndarray:
        return self.vertices.max(axis=0)

    def posed(self, pose: RigidTransform) -> "PosedMesh":
        return PosedMesh(self, pose)


class PosedMesh:
    """A mesh placed in the ego frame, with precomputed triangle data for ray casting."""

    def __init__(self, mesh: MeshAsset, pose: RigidTransform):
        self.mesh = mesh
        self.pose = pose
        self.vertices = pose.apply(mesh.vertices)
        self.normals = pose.apply_direction(mesh.normals)
        tri = mesh.triangles
        self.v0 = self.vertices[tri[:, 0]]
        self.e1 = self.vertices[tri[:, 1]] - self.v0
        self.e2 = self.vertices[tri[:, 2]] - self.v0
        area2 = np.linalg.norm(np.cross(self.e1, self.e2), axis=1)
        self.degenerate = area2 < 1e-12
        self.center = 0.5 * (self.vertices.min(axis=0) + self.vertices.max(axis=0))
        self.radius = float(np.linalg.norm(self.vertices - self.center, axis=1).max()) if len(self.vertices) else 0.0

    def edge_points(self, k: int = 8) -> np.ndarray:
        """Points along every triangle edge; bounds curved fisheye silhouettes."""
        s = np.linspace(0.0, 1.0, k + 1)[:, None, None]
        e3 = self.e2 - self.e1
        pts = [self.v0 + s * self.e1, self.v0 + s * self.e2, (self.v0 + self.e1) + s * e3]
        return np.concatenate([p.reshape(-1, 3) for p in pts])

    def shading_normals(self, tri_idx: np.ndarray, b1: np.ndarray, b2: np.ndarray) -> np.ndarray:
        tri = self.mesh.triangles[tri_idx]
        n = (
            self.normals[tri[:, 0]] * (1 - b1 - b2)[:, None]
            + self.normals[tri[:, 1]] * b1[:, None]
            + self.normals[tri[:, 2]] * b2[:, None]
        )
        return n / np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-12)


def ray_sphere_mask(origins: np.ndarray, dirs: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """Rays (unit dirs) that pass within ``radius`` of ``center`` in front of the origin."""
    oc = center - origins
    tc = np.einsum("...i,...i->...", oc, dirs)
    d2 = np.einsum("...i,...i->...", oc, oc) - tc * tc
    inside = np.einsum("...i,...i->...", oc, oc) <= radius * radius
    return (d2 <= radius * radius) & ((tc >= 0) | inside)


def intersect_mesh(origins, dirs, pm: PosedMesh, t_min: float = 1e-6, chunk: int = 1 << 21):
    """Nearest hit of each ray with the mesh.

    Returns ``(t, tri, b1, b2)``; ``t`` is ``inf`` and ``tri`` is ``-1`` on a miss.
    ``origins`` broadcasts against ``dirs`` of shape (N, 3).
    """
    dirs = np.asarray(dirs, dtype=float)
    n = len(dirs)
    origins = np.broadcast_to(np.asarray(origins, dtype=float), (n, 3))
    best_t = np.full(n, np.inf)
    best_tri = np.full(n, -1, dtype=np.int64)
    best_b1 = np.zeros(n)
    best_b2 = np.zeros(n)
    keep = ~pm.degenerate
    v0, e1, e2 = pm.v0[keep], pm.e1[keep], pm.e2[keep]
    tri_ids = np.flatnonzero(keep)
    m = len(tri_ids)
    if n == 0 or m == 0:
        return best_t, best_tri, best_b1, best_b2
    step = max(1, chunk // m)
    for s in range(0, n, step):
        o = origins[s : s + step, None, :]
        d = dirs[s : s + step, None, :]
        p = np.cross(d, e2[None])
        det = np.einsum("rti,ti->rt", p, e1)
        ok = np.abs(det) > 1e-14
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        tv = o - v0[None]
        b1 = np.einsum("rti,rti->rt", tv, p) * inv
        q = np.cross(tv, e1[None])
        b2 = np.einsum("rti,rti->rt", d, q) * inv
        t = np.einsum("ti,rti->rt", e2, q) * inv
        hit = ok & (b1 >= 0) & (b2 >= 0) & (b1 + b2 <= 1) & (t > t_min)
        t = np.where(hit, t, np.inf)
        j = np.argmin(t, axis=1)
        rows = np.arange(len(j))
        tj = t[rows, j]
        better = tj < best_t[s : s + step]
        sl = slice(s, s + len(j))
        best_t[sl] = np.where(better, tj, best_t[sl])
        best_tri[sl] = np.where(better, tri_ids[j], best_tri[sl])
        best_b1[sl] = np.where(better, b1[rows, j], best_b1[sl])
        best_b2[sl] = np.where(better, b2[rows, j], best_b2[sl])
    return best_t, best_tri, best_b1, best_b2


def _grid_cell(extent: np.ndarray, span: np.ndarray, n: int) -> float:
    """Cell size minimizing visited cells plus raw pairs, assuming uniformly spread rays."""
    density = n / float(span[0] * span[1])
    cands = np.geomspace(float(span.max()) / 1024, float(span.max()), 24)[:, None]
    w, h = extent[:, 0][None], extent[:, 1][None]
    cost = ((w / cands + 1) * (h / cands + 1) * (1 + density * cands ** 2)).sum(axis=1)
    return float(cands[np.argmin(cost), 0])


def candidate_pairs(ray_xy: np.ndarray, tri_lo: np.ndarray, tri_hi: np.ndarray, cell: Optional[float] = None):
    """(ray, triangle) index pairs whose 2D ray coordinate falls in the triangle's 2D bounding box.

    Rays are hashed into a uniform grid; each triangle visits only the cells its
    box overlaps. Triangles with a non-finite box pair with every ray.
    """
    ray_xy = np.asarray(ray_xy, dtype=float)
    n, m = len(ray_xy), len(tri_lo)
    empty = np.zeros(0, dtype=np.int64)
    if n == 0 or m == 0:
        return empty, empty
    finite = np.all(np.isfinite(tri_lo), axis=1) & np.all(np.isfinite(tri_hi), axis=1)
    out_r, out_t = [], []
    wild = np.flatnonzero(~finite)
    if len(wild):
        out_r.append(np.tile(np.arange(n), len(wild)))
        out_t.append(np.repeat(wild, n))
    fin = np.flatnonzero(finite)
    if len(fin):
        lo_r, hi_r = ray_xy.min(axis=0), ray_xy.max(axis=0)
        lo = np.maximum(tri_lo[fin], lo_r)
        hi = np.minimum(tri_hi[fin], hi_r)
        keep = np.all(lo <= hi, axis=1)
        fin, lo, hi = fin[keep], lo[keep], hi[keep]
    if len(fin):
        span = np.maximum(hi_r - lo_r, 1e-12)
        if cell is None:
            cell = _grid_cell(hi - lo, span, n)
        cell = max(cell, float(span.max()) / 4096, 1e-9)
        dims = np.floor(span / cell).astype(np.int64) + 1
        ix = np.minimum(np.floor((ray_xy - lo_r) / cell).astype(np.int64), dims - 1)
        key = ix[:, 0] * dims[1] + ix[:, 1]
        order = np.argsort(key, kind="stable")
        skey = key[order]
        c0 = np.minimum(np.floor((lo - lo_r) / cell).astype(np.int64), dims - 1)
        c1 = np.minimum(np.floor((hi - lo_r) / cell).astype(np.int64), dims - 1)
        ext = c1 - c0 + 1
        ncell = ext[:, 0] * ext[:, 1]
        tri_of_cell = np.repeat(np.arange(len(fin)), ncell)
        local = np.arange(int(ncell.sum())) - np.repeat(np.cumsum(ncell) - ncell, ncell)
        cx = c0[tri_of_cell, 0] + local // ext[tri_of_cell, 1]
        cy = c0[tri_of_cell, 1] + local % ext[tri_of_cell, 1]
        ckey = cx * dims[1] + cy
        start = np.searchsorted(skey, ckey, "left")
        stop = np.searchsorted(skey, ckey, "right")
        cnt = stop - start
        pair_tri = np.repeat(tri_of_cell, cnt)
        offs = np.arange(int(cnt.sum())) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        pair_ray = order[np.repeat(start, cnt) + offs]
        xy = ray_xy[pair_ray]
        inside = np.all((xy >= lo[pair_tri]) & (xy <= hi[pair_tri]), axis=1)
        out_r.append(pair_ray[inside])
        out_t.append(fin[pair_tri[inside]])
    if not out_r:
        return empty, empty
    return np.concatenate(out_r).astype(np.int64), np.concatenate(out_t).astype(np.int64)


def intersect_pairs(origins, dirs, pm: PosedMesh, ray_idx, tri_idx, t_min: float = 1e-6):
    """Nearest hit per ray, testing only the given (ray, triangle) pairs.

    Same return convention as :func:`intersect_mesh`.
    """
    dirs = np.asarray(dirs, dtype=float)
    n = len(dirs)
    origins = np.broadcast_to(np.asarray(origins, dtype=float), (n, 3))
    best_t = np.full(n, np.inf)
    best_tri = np.full(n, -1, dtype=np.int64)
    best_b1 = np.zeros(n)
    best_b2 = np.zeros(n)
    ok_tri = ~pm.degenerate[tri_idx]
    ray_idx, tri_idx = ray_idx[ok_tri], tri_idx[ok_tri]
    if len(ray_idx) == 0:
        return best_t, best_tri, best_b1, best_b2
    o, d = origins[ray_idx], dirs[ray_idx]
    v0, e1, e2 = pm.v0[tri_idx], pm.e1[tri_idx], pm.e2[tri_idx]
    p = np.cross(d, e2)
    det = np.einsum("ij,ij->i", p, e1)
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tv = o - v0
    b1 = np.einsum("ij,ij->i", tv, p) * inv
    q = np.cross(tv, e1)
    b2 = np.einsum("ij,ij->i", d, q) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    hit = ok & (b1 >= 0) & (b2 >= 0) & (b1 + b2 <= 1) & (t > t_min)
    if not hit.any():
        return best_t, best_tri, best_b1, best_b2
    r, tr, t, b1, b2 = ray_idx[hit], tri_idx[hit], t[hit], b1[hit], b2[hit]
    # nearest per ray; ties go to the lower triangle index
    order = np.lexsort((tr, t, r))
    r, tr, t, b1, b2 = r[order], tr[order], t[order], b1[order], b2[order]
    first = np.concatenate([[True], r[1:] != r[:-1]])
    best_t[r[first]] = t[first]
    best_tri[r[first]] = tr[first]
    best_b1[r[first]] = b1[first]
    best_b2[r[first]] = b2[first]
    return best_t, best_tri, best_b1, best_b2


def intersect_cuboid(origins, dirs, c: Cuboid3D) -> np.ndarray:
    """Entry distance of each ray into the cuboid (slab method); ``inf`` on a miss.

    Rays starting inside the box get distance 0.
    """
    dirs = np.asarray(dirs, dtype=float)
    R = rotation_z(c.yaw)
    o = (np.asarray(origins, dtype=float) - c.center) @ R
    d = dirs @ R
    half = c.dimensions / 2
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (-half - o) * inv
        t2 = (half - o) * inv
    lo = np.where(np.isnan(t1), -np.inf, np.minimum(t1, t2))
    hi = np.where(np.isnan(t2), np.inf, np.maximum(t1, t2))
    # a ray parallel to a slab misses unless it starts between the planes
    par = d == 0
    outside = par & (np.abs(np.broadcast_to(o, d.shape)) > half)
    lo = np.where(par, -np.inf, lo)
    hi = np.where(par, np.inf, hi)
    tn = lo.max(axis=-1)
    tf = hi.min(axis=-1)
    hit = (tn <= tf) & (tf >= 0) & ~outside.any(axis=-1)
    return np.where(hit, np.maximum(tn, 0.0), np.inf)


# -- primitives -----------------------------------------------------------------

def box_mesh(dims=(1.0, 1.0, 1.0), color=(0.8, 0.8, 0.8), base_at_zero: bool = False, name: str = "box") -> MeshAsset:
    """Axis-aligned box with flat-shaded faces, centered at the origin (or resting on z=0)."""
    l, w, h = (float(v) / 2 for v in dims)
    faces = []
    for axis in range(3):
        for sign in (1.0, -1.0):
            n = np.zeros(3)
            n[axis] = sign
            u = np.zeros(3)
            v = np.zeros(3)
            u[(axis + 1) % 3] = 1.0
            v[(axis + 2) % 3] = 1.0
            if sign < 0:
                u, v = v, u
            faces.append((n, u, v))
    half = np.array([l, w, h])
    verts, norms, tris = [], [], []
    for n, u, v in faces:
        c = n * half
        base = len(verts)
        for a, b in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
            verts.append(c + a * u * half + b * v * half)
            norms.append(n)
        tris += [(base, base + 1, base + 2), (base, base + 2, base + 3)]
    verts = np.array(verts)
    if base_at_zero:
        verts[:, 2] += h
    return MeshAsset(verts, np.array(tris), np.array(norms), np.asarray(color, dtype=float), name)


def uv_sphere(radius: float = 0.5, rings: int = 16, segments: int = 32, color=(1.0, 1.0, 1.0),
              name: str = "sphere") -> MeshAsset:
    lat = np.linspace(0, np.pi, rings + 1)
    lon = np.linspace(0, 2 * np.pi, segments, endpoint=False)
    n = np.stack([
        np.outer(np.sin(lat), np.cos(lon)),
        np.outer(np.sin(lat), np.sin(lon)),
        np.outer(np.cos(lat), np.ones_like(lon)),
    ], axis=-1).reshape(-1, 3)
    tris = []
    for i in range(rings):
        for j in range(segments):
            a = i * segments + j
            b = i * segments + (j + 1) % segments
            c = (i + 1) * segments + j
            d = (i + 1) * segments + (j + 1) % segments
            if i > 0:
                tris.append((a, c, b))
            if i < rings - 1:
                tris.append((b, c, d))
    n = n / np.linalg.norm(n, axis=1, keepdims=True)
    return MeshAsset(n * radius, np.array(tris), n, np.asarray(color, dtype=float), name)


# -- OBJ I/O ----------------------------------------------------------------------

def cone_mesh(radius: float = 0.2, height: float = 0.7, segments: int = 24, color=(1.0, 0.35, 0.05),
              name: str = "cone") -> MeshAsset:
    """Closed cone standing on z = 0 with smooth side normals and a flat base."""
    a = 2 * np.pi * np.arange(segments) / segments
    ring = np.column_stack([radius * np.cos(a), radius * np.sin(a), np.zeros(segments)])
    slope = radius / height
    side_n = np.column_stack([np.cos(a), np.sin(a), np.full(segments, slope)])
    side_n /= np.linalg.norm(side_n, axis=1, keepdims=True)
    mid = a + np.pi / segments
    tip_n = np.column_stack([np.cos(mid), np.sin(mid), np.full(segments, slope)])
    tip_n /= np.linalg.norm(tip_n, axis=1, keepdims=True)
    verts = np.concatenate([ring, np.tile([0.0, 0.0, height], (segments, 1)), ring, [[0.0, 0.0, 0.0]]])
    normals = np.concatenate([side_n, tip_n, np.tile([0.0, 0.0, -1.0], (segments + 1, 1))])
    k = np.arange(segments)
    k1 = (k + 1) % segments
    side = np.column_stack([k, k1, segments + k])
    base = np.column_stack([np.full(segments, 3 * segments), 2 * segments + k1, 2 * segments + k])
    return MeshAsset(verts, np.concatenate([side, base]), normals, np.asarray(color, dtype=float), name)


def merge_meshes(meshes, name: str = "merged") -> MeshAsset:
    """Concatenate meshes that share a local frame into one asset."""
    verts, tris, norms, cols = [], [], [], []
    offset = 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        norms.append(m.normals)
        cols.append(m.colors)
        offset += len(m.vertices)
    return MeshAsset(np.concatenate(verts), np.concatenate(tris), np.concatenate(norms), np.concatenate(cols), name)


def _read_mtl(path: Path) -> dict:
    colors, current = {}, None
    for line in path.read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "newmtl":
            current = parts[1]
            colors[current] = (0.8, 0.8, 0.8)
        elif parts[0] == "Kd" and current is not None:
            colors[current] = tuple(float(x) for x in parts[1:4])
    return colors


def load_obj(path, default_color=(0.8, 0.8, 0.8)) -> MeshAsset:
    """Read positions, normals and per-material diffuse color from a Wavefront OBJ.

    Polygons are fan-triangulated. Vertices are split per (position, normal)
    pair; faces without normals get their flat face normal.
    """
    path = Path(path)
    pos, nrm, materials = [], [], {}
    out_v, out_n, out_t, out_c = [], [], [], []
    color = tuple(default_color)
    for line in path.read_text().splitlines():
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        tag = parts[0]
        if tag == "v":
            pos.append([float(x) for x in parts[1:4]])
        elif tag == "vn":
            nrm.append([float(x) for x in parts[1:4]])
        elif tag == "mtllib":
            mtl = path.parent / parts[1]
            if mtl.exists():
                materials.update(_read_mtl(mtl))
        elif tag == "usemtl":
            color = materials.get(parts[1], tuple(default_color))
        elif tag == "f":
            corners = []
            for tok in parts[1:]:
                fields = tok.split("/")
                vi = int(fields[0])
                vi = vi - 1 if vi > 0 else len(pos) + vi
                ni = None
                if len(fields) >= 3 and fields[2]:
                    ni = int(fields[2])
                    ni = ni - 1 if ni > 0 else len(nrm) + ni
                corners.append((vi, ni))
            p = np.array([pos[c[0]] for c in corners])
            face_n = np.cross(p[1] - p[0], p[2] - p[0])
            fn = np.linalg.norm(face_n)
            face_n = face_n / fn if fn > 0 else np.array([0.0, 0.0, 1.0])
            for k in range(1, len(corners) - 1):
                tri = []
                for vi, ni in (corners[0], corners[k], corners[k + 1]):
                    n = np.asarray(nrm[ni], dtype=float) if ni is not None else face_n
                    nn = np.linalg.norm(n)
                    out_v.append(pos[vi])
                    out_n.append(n / nn if nn > 0 else face_n)
                    tri.append(len(out_v) - 1)
                out_t.append(tri)
                out_c.append(color)
    return MeshAsset(np.array(out_v, dtype=float), np.array(out_t, dtype=np.int64),
                     np.array(out_n, dtype=float), np.array(out_c, dtype=float), path.stem)


def save_obj(mesh: MeshAsset, path) -> None:
    """Write a mesh as OBJ + MTL (one material per distinct triangle color)."""
    path = Path(path)
    mtl_path = path.with_suffix(".mtl")
    palette = {}
    for c in map(tuple, mesh.colors):
        palette.setdefault(c, f"m{len(palette)}")
    with mtl_path.open("w") as f:
        for c, name in palette.items():
            f.write(f"newmtl {name}\nKd {c[0]:.6f} {c[1]:.6f} {c[2]:.6f}\n")
    with path.open("w") as f:
        f.write(f"mtllib {mtl_path.name}\n")
        for v in mesh.vertices:
            f.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for n in mesh.normals:
            f.write(f"vn {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}\n")
        current = None
        for tri, c in zip(mesh.triangles, map(tuple, mesh.colors)):
            if palette[c] != current:
                current = palette[c]
                f.write(f"usemtl {current}\n")
            a, b, d = (int(i) + 1 for i in tri)
            f.write(f"f {a}//{a} {b}//{b} {d}//{d}\n")
