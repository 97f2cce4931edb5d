"""HDR environment maps from LDR panoramas, sky features, ego lights and SH irradiance."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import as_vector, check_unit_vector
from .panorama import Panorama, direction_encoding, solid_angle_weights

PEAK_SHARPNESS = 100.0
PEAK_INTENSITY_THRESHOLD = 0.98
SATURATION_THRESHOLD = 0.9
LUMINANCE_WEIGHTS = np.array([0.2126, 0.7152, 0.0722])
EGO_LIGHT_THRESHOLD = 0.5
LATENT_SIZE = 64


@dataclass(frozen=True, eq=False)
class SkyFeatures:
    peak_direction: np.ndarray
    peak_intensity: np.ndarray
    latent: np.ndarray = field(default_factory=lambda: np.zeros(LATENT_SIZE))

    def __post_init__(self):
        d = check_unit_vector(self.peak_direction, "peak_direction")
        i = as_vector(self.peak_intensity, 3, "peak_intensity")
        if np.any(i < 0):
            raise ValueError("peak_intensity must be non-negative")
        object.__setattr__(self, "peak_direction", d)
        object.__setattr__(self, "peak_intensity", i)
        object.__setattr__(self, "latent", as_vector(self.latent, LATENT_SIZE, "latent"))

    @property
    def elevation(self) -> float:
        return float(np.arcsin(np.clip(self.peak_direction[2], -1, 1)))


@dataclass(frozen=True, eq=False)
class EnvironmentMap:
    panorama: Panorama
    sky: Optional[SkyFeatures] = None

    def __post_init__(self):
        px = self.panorama.pixels
        if not np.all(np.isfinite(px)) or np.any(px < 0):
            raise ValueError("environment map radiance must be finite and non-negative")

    @property
    def pixels(self) -> np.ndarray:
        return self.panorama.pixels


@dataclass(frozen=True, eq=False)
class EgoLight:
    position: np.ndarray
    axis: np.ndarray
    half_angle: float
    color: np.ndarray
    name: str = "light"

    def __post_init__(self):
        object.__setattr__(self, "position", as_vector(self.position, 3, "position"))
        object.__setattr__(self, "axis", check_unit_vector(self.axis, "axis"))
        col = as_vector(self.color, 3, "color")
        if np.any(col < 0):
            raise ValueError("light color must be non-negative")
        object.__setattr__(self, "color", col)
        if not 0 < self.half_angle <= np.pi / 2:
            raise ValueError("cone half-angle must lie in (0, pi/2]")

    def irradiance(self, points: np.ndarray, normals: np.ndarray) -> np.ndarray:
        """RGB irradiance (N, 3) delivered to surface points with unit normals."""
        to_light = self.position - points
        dist2 = np.maximum(np.einsum("ij,ij->i", to_light, to_light), 1e-6)
        l = to_light / np.sqrt(dist2)[:, None]
        in_cone = -(l @ self.axis) >= np.cos(self.half_angle)
        cos_i = np.clip(np.einsum("ij,ij->i", l, normals), 0.0, None)
        return np.where(in_cone, cos_i / dist2, 0.0)[:, None] * self.color


def _norm(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


@dataclass
class EgoLightConfig:
    """Headlight / rear-light cone geometry in the ego frame."""

    headlight_positions: tuple = ((3.7, 0.7, 0.7), (3.7, -0.7, 0.7))
    headlight_axis: tuple = tuple(_norm((1.0, 0.0, -0.08)))
    headlight_color: tuple = (1.0, 0.95, 0.85)
    headlight_intensity: float = 40.0
    rear_positions: tuple = ((-1.0, 0.7, 0.8), (-1.0, -0.7, 0.8))
    rear_axis: tuple = tuple(_norm((-1.0, 0.0, -0.08)))
    rear_color: tuple = (1.0, 0.1, 0.1)
    rear_intensity: float = 4.0
    half_angle: float = np.deg2rad(30.0)


def luminance(rgb):
    """Relative luminance of linear RGB, works on (..., 3) arrays."""
    return np.asarray(rgb, dtype=float) @ LUMINANCE_WEIGHTS


def mean_luminance(env) -> float:
    """Solid-angle weighted mean luminance of an environment map or panorama."""
    pano = env.panorama if isinstance(env, EnvironmentMap) else env
    w = solid_angle_weights(pano.size)
    return float((luminance(pano.pixels) * w).sum() / w.sum())


def peak_direction_map(pe: np.ndarray, f_d) -> np.ndarray:
    f_d = check_unit_vector(f_d, "peak direction")
    return np.exp(PEAK_SHARPNESS * (np.asarray(pe) @ f_d - 1.0))


def peak_intensity_map(peak_map: np.ndarray, f_i) -> np.ndarray:
    f_i = as_vector(f_i, 3, "peak intensity")
    mask = np.asarray(peak_map) >= PEAK_INTENSITY_THRESHOLD
    return mask[..., None] * f_i


class HdrEstimator(BaseEstimator):
    """Interface for LDR -> HDR panorama expansion.

    Subclasses implement :meth:`predict` returning ``(hdr_pixels, SkyFeatures)``.
    A learned model would load its weights in :meth:`fit`.
    """

    def fit(self, X=None, y=None):
        return self

    def predict(self, ldr: np.ndarray, pe: np.ndarray) -> Tuple[np.ndarray, SkyFeatures]:
        raise NotImplementedError


class AnalyticHdrEstimator(HdrEstimator):
    """Deterministic stand-in for a learned HDR decoder.

    The peak direction is the radiance-weighted mean direction of the brightest
    ``top_fraction`` of pixels. When some pixel is saturated the peak
    intensity is ``sun_scale`` times the brightest pixel and gets added on the
    saturated pixels, modulated by the peak-direction lobe; otherwise the
    panorama passes through unchanged and the peak intensity is the brightest
    pixel itself.
    """

    def __init__(self, sun_scale: float = 50.0, top_fraction: float = 0.01,
                 saturation_threshold: float = SATURATION_THRESHOLD):
        self.sun_scale = sun_scale
        self.top_fraction = top_fraction
        self.saturation_threshold = saturation_threshold

    def predict(self, ldr, pe):
        ldr = np.asarray(ldr, dtype=float)
        h, w = ldr.shape[:2]
        lum = luminance(ldr)
        area = solid_angle_weights((w, h))
        flat = lum.ravel()
        k = max(1, int(np.ceil(self.top_fraction * flat.size)))
        cut = np.partition(flat, flat.size - k)[flat.size - k]
        top = lum >= cut
        weights = (lum * area) * top
        mean_dir = (pe * weights[..., None]).sum(axis=(0, 1))
        norm = np.linalg.norm(mean_dir)
        f_d = mean_dir / norm if norm > 1e-12 else np.array([0.0, 0.0, 1.0])

        brightest = ldr.reshape(-1, 3)[np.argmax(flat)]
        saturated = ldr >= self.saturation_threshold
        if saturated.any():
            f_i = self.sun_scale * brightest
            peak = peak_direction_map(pe, f_d)
            boost = peak_intensity_map(peak, f_i) * peak[..., None]
            hdr = ldr + np.where(saturated, boost, 0.0)
        else:
            f_i = brightest.copy()
            hdr = ldr.copy()
        return hdr, SkyFeatures(f_d, f_i, _coarse_latent(lum))


def _coarse_latent(lum: np.ndarray) -> np.ndarray:
    # 4 elevation bands x 16 azimuth sectors of mean luminance
    h, w = lum.shape
    rows = np.array_split(np.arange(h), 4)
    cols = np.array_split(np.arange(w), 16)
    return np.array([lum[np.ix_(r, c)].mean() for r in rows for c in cols])


def expand_hdr(ldr: Panorama, pe: np.ndarray, estimator: Optional[HdrEstimator] = None):
    """Run ``estimator`` (analytic default) on a fully covered LDR panorama."""
    if not ldr.coverage.all():
        raise ValueError("expand_hdr needs a fully covered (inpainted) panorama")
    if pe.shape != ldr.pixels.shape:
        raise ValueError("direction encoding does not match the panorama size")
    estimator = estimator if estimator is not None else AnalyticHdrEstimator()
    hdr, sky = estimator.predict(ldr.pixels, pe)
    return Panorama.full(hdr), sky


def fuse_envmap(ldr: Panorama, hdr: Panorama, sky: Optional[SkyFeatures] = None) -> EnvironmentMap:
    """Take HDR values on saturated LDR channels, LDR values elsewhere."""
    if ldr.pixels.shape != hdr.pixels.shape:
        raise ValueError("LDR and HDR panoramas differ in size")
    fused = np.where(ldr.pixels >= SATURATION_THRESHOLD, hdr.pixels, ldr.pixels)
    return EnvironmentMap(Panorama.full(fused), sky)


def lights_active(env) -> bool:
    return mean_luminance(env) < EGO_LIGHT_THRESHOLD


def ego_lights(env, config: Optional[EgoLightConfig] = None) -> List[EgoLight]:
    """Headlight and rear-light cones for dark scenes, nothing otherwise."""
    if not lights_active(env):
        return []
    cfg = config or EgoLightConfig()
    lights = []
    for i, pos in enumerate(cfg.headlight_positions):
        lights.append(EgoLight(pos, cfg.headlight_axis, cfg.half_angle,
                               np.asarray(cfg.headlight_color) * cfg.headlight_intensity, f"head{i}"))
    for i, pos in enumerate(cfg.rear_positions):
        lights.append(EgoLight(pos, cfg.rear_axis, cfg.half_angle,
                               np.asarray(cfg.rear_color) * cfg.rear_intensity, f"rear{i}"))
    return lights


# -- spherical harmonics irradiance -------------------------------------------

_SH_BAND = np.array([np.pi] + [2 * np.pi / 3] * 3 + [np.pi / 4] * 5)


def sh_basis(dirs: np.ndarray) -> np.ndarray:
    """Real SH basis up to order 2 for unit directions (..., 3) -> (..., 9)."""
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    return np.stack([
        0.282095 * np.ones_like(x),
        0.488603 * y,
        0.488603 * z,
        0.488603 * x,
        1.092548 * x * y,
        1.092548 * y * z,
        0.315392 * (3 * z * z - 1),
        1.092548 * x * z,
        0.546274 * (x * x - y * y),
    ], axis=-1)


def sh_project(env) -> np.ndarray:
    """Order-2 SH coefficients (9, 3) of an environment's radiance."""
    pano = env.panorama if isinstance(env, EnvironmentMap) else env
    pe = direction_encoding(pano.size)
    w = solid_angle_weights(pano.size)
    basis = sh_basis(pe) * w[..., None]
    return np.einsum("hwk,hwc->kc", basis, pano.pixels)


def sh_irradiance(coeffs: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """Irradiance (N, 3) at surface normals from SH radiance coefficients."""
    return sh_basis(normals) @ (coeffs * _SH_BAND[:, None])
