"""Per-camera object and shadow layers, post-processing and compositing onto real frames.

Objects are drawn by casting one ray per pixel center through the camera
model, so fisheye distortion of straight edges comes out exactly and every
surface point lands on the pixel the camera projection predicts.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from .geometry import CameraModel, Cuboid3D
from .lighting import EgoLight, SkyFeatures, luminance, sh_irradiance, sh_project
from .mesh import PosedMesh, candidate_pairs
from .panorama import GAMMA, linearize
from .placement import AssetInstance, cast_mesh, cuboid_distance


@dataclass(eq=False)
class RenderLayers:
    object_layer: np.ndarray
    shadow_layer: np.ndarray
    depth_layer: np.ndarray
    degenerate_triangles: int = 0
    # ray distance to the nearest asset surface before scene occluders are applied
    hit_distance: Optional[np.ndarray] = None

    @classmethod
    def empty(cls, height: int, width: int) -> "RenderLayers":
        return cls(np.zeros((height, width, 4)), np.zeros((height, width)), np.full((height, width), np.inf))

    @property
    def alpha(self) -> np.ndarray:
        return self.object_layer[..., 3]

    def copy(self) -> "RenderLayers":
        return RenderLayers(self.object_layer.copy(), self.shadow_layer.copy(), self.depth_layer.copy(),
                            self.degenerate_triangles, self.hit_distance)


def _as_posed(inst) -> PosedMesh:
    return inst.posed() if isinstance(inst, AssetInstance) else inst


def _sh_coeffs(env):
    if env is None:
        return None
    if isinstance(env, np.ndarray):
        return env
    return sh_project(env)


def render_objects(instances: Sequence, camera: CameraModel, env=None,
                   ego_lights: Sequence[EgoLight] = (), occluders: Sequence[Cuboid3D] = ()) -> RenderLayers:
    """Rasterize instances with depth buffering and Lambertian image-based lighting.

    ``env`` is an :class:`EnvironmentMap` or precomputed SH coefficients (9, 3).
    Pixels where a scene cuboid in ``occluders`` is nearer than the asset stay
    transparent.
    """
    h, w = camera.height, camera.width
    layers = RenderLayers.empty(h, w)
    if not instances:
        return layers
    coeffs = _sh_coeffs(env)
    dist = np.full((h, w), np.inf)
    owner = np.full((h, w), -1, dtype=np.int64)
    tri = np.full((h, w), -1, dtype=np.int64)
    b1 = np.zeros((h, w))
    b2 = np.zeros((h, w))
    posed = [_as_posed(i) for i in instances]
    for k, pm in enumerate(posed):
        layers.degenerate_triangles += int(pm.degenerate.sum())
        (u0, u1, v0, v1), t, tr, c1, c2 = cast_mesh(pm, camera)
        if t.size == 0:
            continue
        sub = dist[v0:v1, u0:u1]
        win = t < sub
        sub[win] = t[win]
        owner[v0:v1, u0:u1][win] = k
        tri[v0:v1, u0:u1][win] = tr[win]
        b1[v0:v1, u0:u1][win] = c1[win]
        b2[v0:v1, u0:u1][win] = c2[win]

    layers.hit_distance = dist.copy()
    covered = owner >= 0
    if occluders and covered.any():
        vs, us = np.nonzero(covered)
        window = (us.min(), us.max() + 1, vs.min(), vs.max() + 1)
        occ = cuboid_distance(camera, window, occluders)
        sub = covered[window[2]:window[3], window[0]:window[1]]
        hidden = sub & (occ < dist[window[2]:window[3], window[0]:window[1]])
        sub[hidden] = False
        owner[~covered] = -1

    rays = camera.pixel_rays
    for k, pm in enumerate(posed):
        sel = owner == k
        if not sel.any():
            continue
        d = rays[sel]
        t = dist[sel]
        pts = camera.center + d * t[:, None]
        n = pm.shading_normals(tri[sel], b1[sel], b2[sel])
        facing = np.einsum("ij,ij->i", n, d) > 0
        n[facing] *= -1
        irr = np.zeros((len(n), 3))
        if coeffs is not None:
            irr += np.clip(sh_irradiance(coeffs, n), 0.0, None)
        for light in ego_lights:
            irr += light.irradiance(pts, n)
        albedo = pm.mesh.colors[tri[sel]]
        rgb = albedo * irr / np.pi
        layers.object_layer[sel, :3] = rgb
        layers.object_layer[sel, 3] = 1.0
        layers.depth_layer[sel] = t * camera.pixel_depth_scale[sel]
    return layers


def _plane_basis(axis: np.ndarray):
    """Two unit vectors spanning the plane orthogonal to unit ``axis``."""
    ref = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(axis, ref)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(axis, e1)


def cone_directions(axis, half_angle: float, taps: int) -> np.ndarray:
    """Deterministic spiral of ``taps`` unit directions within ``half_angle`` of ``axis``."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    if taps <= 1 or half_angle <= 0:
        return axis[None]
    e1, e2 = _plane_basis(axis)
    k = np.arange(taps)
    golden = np.pi * (3 - np.sqrt(5))
    r = half_angle * np.sqrt((k + 0.5) / taps)
    a = k * golden
    dirs = (np.cos(r)[:, None] * axis
            + np.sin(r)[:, None] * (np.cos(a)[:, None] * e1 + np.sin(a)[:, None] * e2))
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def _blocked_taps(points_xy: np.ndarray, posed: Sequence[PosedMesh], dirs: np.ndarray, ground_z: float) -> np.ndarray:
    """Number of light directions in ``dirs`` blocked by any mesh, per ground point.

    All rays of one tap are parallel, so a ray from a ground point hits a
    triangle above the ground iff the point falls inside the triangle once both
    are projected along the tap onto the plane orthogonal to it. Working in that
    plane keeps triangles compact even when a low sun stretches their ground
    shadows over tens of meters.
    """
    dirs = dirs[dirs[:, 2] > 0]
    tris = np.concatenate([np.stack([pm.v0, pm.v0 + pm.e1, pm.v0 + pm.e2], axis=1)[~pm.degenerate]
                           for pm in posed])
    tris[..., 2] = np.maximum(tris[..., 2], ground_z)
    pts = np.column_stack([points_xy, np.full(len(points_xy), ground_z)])
    blocked = np.zeros(len(points_xy))
    for d in dirs:
        basis = np.stack(_plane_basis(d), axis=1)
        p2 = pts @ basis
        proj = tris @ basis
        a, b, c = proj[:, 0], proj[:, 1], proj[:, 2]
        area = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        live = np.flatnonzero(np.abs(area) > 1e-12)
        pt, tri = candidate_pairs(p2, proj.min(axis=1)[live], proj.max(axis=1)[live])
        tri = live[tri]
        p = p2[pt]
        ta, tb, tc, s = a[tri], b[tri], c[tri], np.sign(area[tri])

        def edge(u, v):
            return (v[:, 0] - u[:, 0]) * (p[:, 1] - u[:, 1]) - (v[:, 1] - u[:, 1]) * (p[:, 0] - u[:, 0])

        inside = (edge(ta, tb) * s >= 0) & (edge(tb, tc) * s >= 0) & (edge(tc, ta) * s >= 0)
        hit = np.zeros(len(points_xy), dtype=bool)
        hit[pt[inside]] = True
        blocked += hit
    return blocked


def render_shadows(instances: Sequence, camera: CameraModel, sky: SkyFeatures, ground_z: float = 0.0,
                   taps: int = 16, cone_half_angle: float = np.deg2rad(2.0),
                   occluders: Sequence[Cuboid3D] = (), hit_distance: Optional[np.ndarray] = None) -> np.ndarray:
    """Shadow-catcher layer: blocked fraction of light taps toward the sky peak at each ground pixel.

    Ground pixels hidden by an asset or by one of the ``occluders`` cuboids
    get no shadow. ``hit_distance`` (from :func:`render_objects`) saves
    re-casting the assets from the camera. Returns an all-zero layer when the peak light is at or
    below the horizon.
    """
    h, w = camera.height, camera.width
    shadow = np.zeros((h, w))
    light = np.asarray(sky.peak_direction, dtype=float)
    if not instances or light[2] <= 0:
        return shadow
    o = camera.center
    if o[2] <= ground_z:
        return shadow
    rays = camera.pixel_rays
    dz = rays[..., 2]
    ground = np.isfinite(dz) & (dz < -1e-9)
    s = np.where(ground, (ground_z - o[2]) / np.where(ground, dz, -1.0), np.inf)
    with np.errstate(invalid="ignore"):
        gx = np.where(ground, o[0] + rays[..., 0] * s, np.nan)
        gy = np.where(ground, o[1] + rays[..., 1] * s, np.nan)
    dirs = cone_directions(light, cone_half_angle, taps)
    posed = [_as_posed(i) for i in instances]

    candidates = np.zeros((h, w), dtype=bool)
    for pm in posed:
        v = pm.vertices
        height = np.clip(v[:, 2] - ground_z, 0.0, None)
        xs, ys = [v[:, 0]], [v[:, 1]]
        for d in dirs:
            if d[2] <= 0:
                continue
            xs.append(v[:, 0] - d[0] * height / d[2])
            ys.append(v[:, 1] - d[1] * height / d[2])
        xs, ys = np.concatenate(xs), np.concatenate(ys)
        pad = 0.02
        candidates |= ground & (gx >= xs.min() - pad) & (gx <= xs.max() + pad) \
            & (gy >= ys.min() - pad) & (gy <= ys.max() + pad)
    if not candidates.any():
        return shadow
    idx = np.nonzero(candidates)
    g = np.column_stack([gx[idx], gy[idx], np.full(len(idx[0]), ground_z)])
    if hit_distance is None:
        hit_distance = np.full((h, w), np.inf)
        for pm in posed:
            (u0, u1, v0, v1), t_cam, _, _, _ = cast_mesh(pm, camera)
            sub = hit_distance[v0:v1, u0:u1]
            np.minimum(sub, t_cam, out=sub)
    on_asset = hit_distance[idx] < s[idx]
    blocked = _blocked_taps(g[:, :2], posed, dirs, ground_z)
    vals = blocked / len(dirs)
    vals[on_asset] = 0.0
    if occluders:
        vs, us = idx
        window = (us.min(), us.max() + 1, vs.min(), vs.max() + 1)
        occ = cuboid_distance(camera, window, occluders)
        vals[occ[vs - window[2], us - window[0]] < s[idx]] = 0.0
    shadow[idx] = vals
    return shadow


@dataclass
class PostProcessParams:
    shadow_strength: float = 1.0
    saturation: float = 1.0
    blur_sigma: float = 0.0
    noise_sigma: float = 0.0

    def validate(self) -> "PostProcessParams":
        for name, lo, hi in (("shadow_strength", 0.0, 1.0), ("saturation", 0.0, 2.0),
                             ("blur_sigma", 0.0, 1.5), ("noise_sigma", 0.0, 0.1)):
            val = getattr(self, name)
            if not lo <= val <= hi:
                raise ValueError(f"{name}={val} outside [{lo}, {hi}]")
        return self


def _bbox(mask: np.ndarray, pad: int = 0):
    """Row/column slices covering the true pixels of ``mask`` (grown by ``pad``), or None."""
    rows = np.flatnonzero(mask.any(axis=1))
    if len(rows) == 0:
        return None
    cols = np.flatnonzero(mask.any(axis=0))
    h, w = mask.shape
    return (slice(max(rows[0] - pad, 0), min(rows[-1] + pad + 1, h)),
            slice(max(cols[0] - pad, 0), min(cols[-1] + pad + 1, w)))


def postprocess(layers: RenderLayers, params: PostProcessParams,
                rng: Optional[np.random.Generator] = None) -> RenderLayers:
    """Scale shadows; jitter saturation, blur and add sensor noise to the object colors.

    Blur is normalized by the blurred alpha so silhouette edges keep their
    color; alpha itself is left untouched.
    """
    params.validate()
    if params.noise_sigma > 0 and rng is None:
        raise ValueError("noise needs an rng")
    out = layers.copy()
    out.shadow_layer = np.clip(layers.shadow_layer * params.shadow_strength, 0.0, 1.0)
    pad = int(np.ceil(4 * params.blur_sigma)) + 1 if params.blur_sigma > 0 else 0
    box = _bbox(layers.alpha > 0, pad)
    if box is None:
        return out
    rgb = layers.object_layer[box + (slice(0, 3),)]
    alpha = layers.object_layer[box + (3,)]
    if params.saturation != 1.0:
        gray = luminance(rgb)[..., None]
        rgb = np.clip(gray + params.saturation * (rgb - gray), 0.0, None)
    if params.blur_sigma > 0:
        sig = params.blur_sigma
        num = gaussian_filter(rgb, sigma=(sig, sig, 0), mode="constant")
        den = gaussian_filter(alpha, sigma=sig, mode="constant")
        rgb = np.where(alpha[..., None] > 0, num / np.maximum(den, 1e-12)[..., None] * alpha[..., None], 0.0)
    if params.noise_sigma > 0:
        rgb = np.clip(rgb + rng.normal(0.0, params.noise_sigma, rgb.shape) * alpha[..., None], 0.0, None)
    out.object_layer[box + (slice(0, 3),)] = rgb
    return out


def composite(real, layers: RenderLayers) -> np.ndarray:
    """Premultiplied over-operator of the object layer onto the shadow-darkened real frame.

    8-bit frames are linearized with gamma 2.2 and converted back; float
    frames are treated as linear. Pixels with no object and no shadow are
    copied through unchanged.
    """
    real = np.asarray(real)
    if real.shape[:2] != layers.object_layer.shape[:2]:
        raise ValueError("frame and layers differ in resolution")
    touched = (layers.alpha != 0) | (layers.shadow_layer != 0)
    result = real.copy() if real.dtype == np.uint8 else real.astype(float)
    box = _bbox(touched)
    if box is None:
        return result
    sub = real[box]
    lin = linearize(sub)
    alpha = layers.alpha[box][..., None]
    darkened = lin * (1.0 - layers.shadow_layer[box][..., None])
    out = np.clip(layers.object_layer[box][..., :3] + (1.0 - alpha) * darkened, 0.0, 1.0)
    mask = touched[box]
    if real.dtype == np.uint8:
        enc = np.round(out ** (1.0 / GAMMA) * 255.0).astype(np.uint8)
        result[box][..., :3][mask] = enc[mask]
    else:
        result[box][..., :3][mask] = out[mask]
    return result
