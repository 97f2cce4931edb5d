"""Rigid transforms, camera models and cuboids.

Frames:
    ego     x forward, y left, z up (meters)
    camera  z along the optical axis, x right, y down

Pixel coordinates put integer values at pixel centers, so pixel ``(u, v)``
is stored at ``image[v, u]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Optional, Sequence

import numpy as np

from ._validation import as_vector, check_finite


class UnprojectionError(ValueError):
    """Raised when a pixel has no valid ray under the camera model."""


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def rotation_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def wrap_angle(angle):
    """Wrap angles to (-pi, pi]."""
    x = np.asarray(angle, dtype=float)
    a = np.mod(x + np.pi, 2 * np.pi) - np.pi
    a = np.where(a <= -np.pi, a + 2 * np.pi, a)
    # in-range angles pass through untouched so thresholds stay exact
    a = np.where((x > -np.pi) & (x <= np.pi), x, a)
    return float(a) if np.ndim(a) == 0 else a


_EYE3 = np.eye(3)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Maps points from a source frame into a target frame: ``y = R x + t``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float)
        if R.shape != (3, 3) or t.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation a 3-vector")
        check_finite(R, "rotation")
        check_finite(t, "translation")
        (a, b, c), (d, e, f), (g, h, i) = R.tolist()
        det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)
        if np.abs(R.T @ R - _EYE3).max() > 1e-9 or abs(det - 1.0) > 1e-9:
            raise ValueError("rotation must be orthonormal with determinant +1")
        object.__setattr__(self, "rotation", _readonly(R))
        object.__setattr__(self, "translation", _readonly(t))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_yaw(cls, yaw: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        return cls(rotation_z(yaw), np.asarray(translation, dtype=float))

    @classmethod
    def from_matrix(cls, m) -> "RigidTransform":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points) -> np.ndarray:
        """Transform points of shape (..., 3)."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def apply_direction(self, dirs) -> np.ndarray:
        return np.asarray(dirs, dtype=float) @ self.rotation.T

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return ``self ∘ other`` (apply ``other`` first)."""
        R = self.rotation @ other.rotation
        # re-orthonormalize so long chains stay inside the validation tolerance
        u, _, vt = np.linalg.svd(R)
        R = u @ vt
        return RigidTransform(R, self.rotation @ other.translation + self.translation)

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    @property
    def yaw(self) -> float:
        return float(np.arctan2(self.rotation[1, 0], self.rotation[0, 0]))

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "RigidTransform":
        return cls(np.asarray(d["rotation"], dtype=float), np.asarray(d["translation"], dtype=float))


def look_rotation(forward, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera->ego rotation for a camera whose optical axis points along ``forward`` (ego frame)."""
    z = as_vector(forward, 3, "forward")
    z = z / np.linalg.norm(z)
    up = np.asarray(up, dtype=float)
    x = np.cross(z, up)
    if np.linalg.norm(x) < 1e-9:
        x = np.cross(z, np.array([1.0, 0.0, 0.0]))
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


PINHOLE = "pinhole"
FTHETA = "ftheta"


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Pinhole or f-theta camera with camera->ego extrinsics.

    For ``ftheta`` the image radius is ``r(theta) = sum_i k_i theta**i`` where
    ``coeffs = (k0, k1, ...)``; ``k0`` must be zero.
    """

    kind: str
    width: int
    height: int
    principal_point: tuple
    extrinsics: RigidTransform = field(default_factory=RigidTransform)
    focal: tuple = (1.0, 1.0)
    coeffs: tuple = (0.0, 1.0)
    max_angle: float = np.pi / 2
    name: str = "camera"

    def __post_init__(self):
        if self.kind not in (PINHOLE, FTHETA):
            raise ValueError(f"unknown camera kind {self.kind!r}")
        if int(self.width) <= 0 or int(self.height) <= 0:
            raise ValueError("resolution must be positive")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "principal_point", tuple(float(v) for v in self.principal_point))
        object.__setattr__(self, "focal", tuple(float(v) for v in self.focal))
        object.__setattr__(self, "coeffs", tuple(float(v) for v in self.coeffs))
        if len(self.principal_point) != 2:
            raise ValueError("principal_point must have 2 entries")
        if self.kind == PINHOLE:
            if len(self.focal) != 2 or min(self.focal) <= 0:
                raise ValueError("pinhole focal lengths must be two positive numbers")
        else:
            _validate_ftheta(self.coeffs, float(self.max_angle))

    # -- f-theta polynomial -------------------------------------------------
    def radius(self, theta):
        return np.polynomial.polynomial.polyval(theta, self.coeffs)

    def radius_derivative(self, theta):
        d = np.polynomial.polynomial.polyder(self.coeffs)
        return np.polynomial.polynomial.polyval(theta, d)

    @cached_property
    def max_radius(self) -> float:
        return float(self.radius(self.max_angle))

    def theta_from_radius(self, r, tol: float = 1e-8, max_iter: int = 60):
        """Invert r(theta) with Newton steps kept inside a shrinking bracket."""
        r = np.asarray(r, dtype=float)
        if np.any(r < 0) or np.any(r > self.max_radius * (1 + 1e-12)):
            raise UnprojectionError("radius outside the invertible range of the f-theta model")
        lo = np.zeros_like(r)
        hi = np.full_like(r, float(self.max_angle))
        k1 = self.coeffs[1] if len(self.coeffs) > 1 and self.coeffs[1] > 0 else self.max_radius / self.max_angle
        theta = np.clip(r / k1, lo, hi)
        for _ in range(max_iter):
            f = self.radius(theta) - r
            lo = np.where(f < 0, theta, lo)
            hi = np.where(f > 0, theta, hi)
            step = f / self.radius_derivative(theta)
            nxt = np.where(f == 0, theta, theta - step)
            outside = (nxt < lo) | (nxt > hi) | ~np.isfinite(nxt)
            nxt = np.where(outside, 0.5 * (lo + hi), nxt)
            done = np.abs(nxt - theta) < tol * 1e-3
            theta = nxt
            if np.all(done):
                break
        return theta

    # -- projection ---------------------------------------------------------
    def project_camera_points(self, pc):
        """Project camera-frame points (N, 3).

        Returns ``(pixels (N, 2), depth (N,), valid (N,))``.
        """
        pc = np.atleast_2d(np.asarray(pc, dtype=float))
        x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
        cx, cy = self.principal_point
        if self.kind == PINHOLE:
            valid = z > 1e-9
            zs = np.where(valid, z, 1.0)
            u = self.focal[0] * x / zs + cx
            v = self.focal[1] * y / zs + cy
            depth = z
        else:
            rho = np.hypot(x, y)
            theta = np.arctan2(rho, z)
            dist = np.sqrt(rho**2 + z**2)
            valid = (theta <= self.max_angle) & (dist > 0)
            r = self.radius(np.minimum(theta, self.max_angle))
            safe = np.where(rho > 0, rho, 1.0)
            u = np.where(rho > 0, r * x / safe, 0.0) + cx
            v = np.where(rho > 0, r * y / safe, 0.0) + cy
            depth = dist
        pix = np.column_stack([u, v])
        return pix, depth, valid

    def project_points(self, points):
        """Project ego-frame points (N, 3); see :meth:`project_camera_points`."""
        pc = self.extrinsics.inverse().apply(np.atleast_2d(points))
        return self.project_camera_points(pc)

    def unproject_camera(self, pixels, strict: bool = True):
        """Unit ray directions in the camera frame for pixels (N, 2).

        With ``strict=False`` invalid pixels get NaN rays instead of raising.
        """
        pix = np.atleast_2d(np.asarray(pixels, dtype=float))
        cx, cy = self.principal_point
        du, dv = pix[:, 0] - cx, pix[:, 1] - cy
        if self.kind == PINHOLE:
            d = np.column_stack([du / self.focal[0], dv / self.focal[1], np.ones(len(pix))])
            return d / np.linalg.norm(d, axis=1, keepdims=True)
        r = np.hypot(du, dv)
        ok = r <= self.max_radius * (1 + 1e-12)
        if strict and not np.all(ok):
            raise UnprojectionError("pixel radius beyond the f-theta field of view")
        theta = np.full_like(r, np.nan)
        theta[ok] = self.theta_from_radius(np.minimum(r[ok], self.max_radius))
        safe = np.where(r > 0, r, 1.0)
        s = np.sin(theta)
        d = np.column_stack([
            np.where(r > 0, s * du / safe, 0.0),
            np.where(r > 0, s * dv / safe, 0.0),
            np.cos(theta),
        ])
        return d

    def unproject_pixels(self, pixels, strict: bool = True):
        return self.extrinsics.apply_direction(self.unproject_camera(pixels, strict=strict))

    def intrinsics_key(self) -> tuple:
        return (self.kind, self.width, self.height, self.principal_point, self.focal,
                self.coeffs if self.kind == FTHETA else (), float(self.max_angle))

    @property
    def camera_rays(self) -> np.ndarray:
        """Camera-frame rays through every pixel center, (H, W, 3); NaN outside the lens."""
        return _camera_rays(self.intrinsics_key())

    @cached_property
    def pixel_rays(self) -> np.ndarray:
        """Ego-frame rays through every pixel center, (H, W, 3); NaN outside the lens."""
        d = self.camera_rays @ self.extrinsics.rotation.T
        d.setflags(write=False)
        return d

    @property
    def pixel_depth_scale(self) -> np.ndarray:
        """Factor turning ray distance into this camera's depth convention, (H, W)."""
        if self.kind == FTHETA:
            return np.ones((self.height, self.width))
        return self.camera_rays[..., 2]

    @property
    def center(self) -> np.ndarray:
        return self.extrinsics.translation

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "kind": self.kind,
            "width": self.width,
            "height": self.height,
            "principal_point": list(self.principal_point),
            "extrinsics": self.extrinsics.to_dict(),
        }
        if self.kind == PINHOLE:
            d["focal"] = list(self.focal)
        else:
            d["coeffs"] = list(self.coeffs)
            d["max_angle"] = float(self.max_angle)
        return d

    @classmethod
    def from_dict(cls, d: dict, extrinsics: Optional[RigidTransform] = None) -> "CameraModel":
        ext = extrinsics if extrinsics is not None else RigidTransform.from_dict(d["extrinsics"])
        kw = dict(
            kind=d["kind"],
            width=d["width"],
            height=d["height"],
            principal_point=tuple(d["principal_point"]),
            extrinsics=ext,
            name=d.get("name", "camera"),
        )
        if d["kind"] == PINHOLE:
            kw["focal"] = tuple(d["focal"])
        else:
            kw["coeffs"] = tuple(d["coeffs"])
            kw["max_angle"] = float(d["max_angle"])
        return cls(**kw)


@lru_cache(maxsize=32)
def _camera_rays(key: tuple) -> np.ndarray:
    kind, w, h, pp, focal, coeffs, max_angle = key
    cam = CameraModel(kind, w, h, pp, focal=focal, coeffs=coeffs or (0.0, 1.0), max_angle=max_angle)
    vv, uu = np.mgrid[0:h, 0:w]
    pix = np.column_stack([uu.ravel(), vv.ravel()]).astype(float)
    d = cam.unproject_camera(pix, strict=False).reshape(h, w, 3)
    d.setflags(write=False)
    return d


def _validate_ftheta(coeffs: Sequence[float], max_angle: float):
    if len(coeffs) < 2:
        raise ValueError("f-theta needs at least k0 and k1")
    if coeffs[0] != 0.0:
        raise ValueError("f-theta k0 must be 0 so the optical axis maps to the principal point")
    if not 0 < max_angle <= np.pi:
        raise ValueError("max_angle must lie in (0, pi]")
    theta = np.linspace(0.0, max_angle, 2049)
    r = np.polynomial.polynomial.polyval(theta, coeffs)
    dr = np.polynomial.polynomial.polyval(theta, np.polynomial.polynomial.polyder(coeffs))
    if np.any(np.diff(r) <= 0) or np.any(dr <= 0):
        raise ValueError("f-theta radius must be strictly increasing on [0, max_angle]")


def project(point, camera: CameraModel):
    """Project one ego-frame point; returns ``(pixel, depth)`` or ``None``."""
    p = as_vector(point, 3, "point")
    check_finite(p, "point")
    pix, depth, valid = camera.project_points(p[None])
    if not valid[0]:
        return None
    return pix[0], float(depth[0])


def unproject(pixel, camera: CameraModel) -> np.ndarray:
    """Unit ego-frame ray direction through ``pixel``."""
    d = camera.unproject_pixels(as_vector(pixel, 2, "pixel")[None])[0]
    return d / np.linalg.norm(d)


@dataclass(frozen=True, eq=False)
class Cuboid3D:
    center: np.ndarray
    dimensions: np.ndarray
    yaw: float = 0.0
    class_label: str = "object"
    visibility: float = 1.0

    def __post_init__(self):
        c = as_vector(self.center, 3, "center")
        d = as_vector(self.dimensions, 3, "dimensions")
        if np.any(d <= 0):
            raise ValueError("cuboid dimensions must be positive")
        if not 0.0 <= self.visibility <= 1.0:
            raise ValueError("visibility must be in [0, 1]")
        object.__setattr__(self, "center", _readonly(c))
        object.__setattr__(self, "dimensions", _readonly(d))
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    def replace(self, **kw) -> "Cuboid3D":
        d = dict(center=self.center, dimensions=self.dimensions, yaw=self.yaw,
                 class_label=self.class_label, visibility=self.visibility)
        d.update(kw)
        return Cuboid3D(**d)

    @property
    def range_xy(self) -> float:
        return float(np.hypot(self.center[0], self.center[1]))

    def footprint_corners(self) -> np.ndarray:
        return cuboid_corners(self)[:4, :2]

    def to_dict(self) -> dict:
        return {
            "center": self.center.tolist(),
            "dimensions": self.dimensions.tolist(),
            "yaw": self.yaw,
            "class": self.class_label,
            "visibility": self.visibility,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Cuboid3D":
        return cls(d["center"], d["dimensions"], d.get("yaw", 0.0), d.get("class", "object"),
                   d.get("visibility", 1.0))


# corner sign pattern: bottom face (z-) counter-clockwise, then top face
_CORNER_SIGNS = np.array([
    [1, 1, -1], [-1, 1, -1], [-1, -1, -1], [1, -1, -1],
    [1, 1, 1], [-1, 1, 1], [-1, -1, 1], [1, -1, 1],
], dtype=float)

CUBOID_EDGES = (
    (0, 1), (1, 2), (2, 3), (3, 0),
    (4, 5), (5, 6), (6, 7), (7, 4),
    (0, 4), (1, 5), (2, 6), (3, 7),
)


def cuboid_corners(c: Cuboid3D) -> np.ndarray:
    """8 corners (8, 3) in the ego frame: bottom face first, counter-clockwise from +x+y."""
    local = _CORNER_SIGNS * (c.dimensions / 2.0)
    return local @ rotation_z(c.yaw).T + c.center
