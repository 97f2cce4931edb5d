import numpy as np
import pytest
from sklearn.base import clone

from scene_augment.lighting import (AnalyticHdrEstimator, EgoLight, EgoLightConfig, EnvironmentMap, SkyFeatures,
                                    ego_lights, expand_hdr, fuse_envmap, lights_active, luminance, mean_luminance,
                                    peak_direction_map, peak_intensity_map, sh_irradiance, sh_project)
from scene_augment.panorama import Panorama, direction_encoding, solid_angle_weights

SIZE = (128, 64)


def const_pano(value, size=SIZE):
    w, h = size
    return Panorama.full(np.broadcast_to(np.asarray(value, dtype=float), (h, w, 3)).copy())


# -- peak direction map -------------------------------------------------------

def test_peak_map_on_axis_is_one():
    f = np.array([0.0, 0.6, 0.8])
    assert peak_direction_map(f[None], f)[0] == 1.0


def test_peak_map_orthogonal_and_opposite():
    f = np.array([0.0, 0.0, 1.0])
    v = peak_direction_map(np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0]]), f)
    assert v[0] == pytest.approx(np.exp(-100.0), rel=1e-12)
    assert v[0] == pytest.approx(3.72e-44, rel=1e-2)
    assert v[1] == pytest.approx(np.exp(-200.0), rel=1e-12)


def test_peak_map_matches_formula_on_panorama(rng):
    f = rng.normal(size=3)
    f /= np.linalg.norm(f)
    pe = direction_encoding(SIZE)
    np.testing.assert_array_equal(peak_direction_map(pe, f), np.exp(100.0 * (pe @ f - 1.0)))


def test_peak_map_rejects_non_unit():
    with pytest.raises(ValueError):
        peak_direction_map(np.zeros((1, 3)), (0.0, 0.0, 2.0))


# -- peak intensity threshold ---------------------------------------------------

@pytest.mark.parametrize("value,expect", [(0.99, (2, 3, 4)), (0.98, (2, 3, 4)), (0.97, (0, 0, 0)),
                                          (np.nextafter(0.98, 0), (0, 0, 0))])
def test_peak_intensity_threshold(value, expect):
    out = peak_intensity_map(np.array([value]), (2.0, 3.0, 4.0))
    np.testing.assert_array_equal(out[0], expect)


# -- fusion threshold ---------------------------------------------------------

@pytest.mark.parametrize("ldr,expect", [(0.95, 5.0), (0.5, 0.5), (0.9, 5.0), (np.nextafter(0.9, 0), np.nextafter(0.9, 0))])
def test_fusion_rule(ldr, expect):
    lo = const_pano(ldr, (8, 4))
    hi = const_pano(5.0, (8, 4))
    env = fuse_envmap(lo, hi)
    assert np.all(env.panorama.pixels == expect)


def test_fusion_is_per_channel():
    lo = const_pano((0.95, 0.2, 0.9), (8, 4))
    hi = const_pano((5.0, 6.0, 7.0), (8, 4))
    np.testing.assert_array_equal(fuse_envmap(lo, hi).panorama.pixels[0, 0], (5.0, 0.2, 7.0))


# -- luminance ----------------------------------------------------------------

@pytest.mark.parametrize("rgb,expect", [((1, 1, 1), 1.0), ((1, 0, 0), 0.2126), ((0, 1, 0), 0.7152),
                                        ((0, 0, 1), 0.0722), ((0, 0, 0), 0.0)])
def test_luminance_coefficients(rgb, expect):
    assert luminance(rgb) == pytest.approx(expect, abs=1e-15)


def test_mean_luminance_uses_solid_angle():
    w, h = SIZE
    px = np.zeros((h, w, 3))
    px[: h // 2] = 1.0  # upper hemisphere white
    assert mean_luminance(Panorama.full(px)) == pytest.approx(0.5, abs=1e-12)
    px = np.zeros((h, w, 3))
    px[:4] = 1.0  # polar cap: many pixels, little solid angle
    frac = solid_angle_weights(SIZE)[:4].sum() / (4 * np.pi)
    assert mean_luminance(Panorama.full(px)) == pytest.approx(frac)
    assert frac < 4 / h


# -- ego lights -----------------------------------------------------------------

@pytest.mark.parametrize("value,active", [(0.4, True), (0.6, False), (0.5, False)])
def test_ego_light_threshold(value, active):
    env = EnvironmentMap(const_pano(value))
    assert mean_luminance(env) == pytest.approx(value, abs=1e-15)
    assert lights_active(env) is active
    assert bool(ego_lights(env)) is active


def test_ego_light_layout():
    lights = ego_lights(EnvironmentMap(const_pano(0.1)))
    heads = [l for l in lights if l.name.startswith("head")]
    rears = [l for l in lights if l.name.startswith("rear")]
    assert len(heads) == 2 and len(rears) == 2
    assert all(l.axis[0] > 0 for l in heads) and all(l.axis[0] < 0 for l in rears)
    assert all(l.color[0] > l.color[1] for l in rears)


def test_ego_light_cone_and_falloff():
    light = EgoLight((0, 0, 0), (1, 0, 0), np.deg2rad(30), (1, 1, 1))
    pts = np.array([[2.0, 0, 0], [4.0, 0, 0], [1.0, 1.0, 0]])
    normals = np.array([[-1.0, 0, 0], [-1.0, 0, 0], [-1.0, 0, 0]])
    e = light.irradiance(pts, normals)
    assert e[0, 0] == pytest.approx(0.25)
    assert e[1, 0] == pytest.approx(1 / 16)
    assert e[2, 0] == 0.0  # 45 deg off-axis is outside a 30 deg cone


def test_ego_light_config_override():
    cfg = EgoLightConfig(headlight_positions=((2.0, 0.0, 0.5),), rear_positions=())
    lights = ego_lights(EnvironmentMap(const_pano(0.1)), cfg)
    assert len(lights) == 1 and np.allclose(lights[0].position, (2.0, 0.0, 0.5))


# -- HDR expansion ----------------------------------------------------------------

def sun_pano(center_dir, radius_deg=3.0, size=SIZE, sky=0.3):
    pe = direction_encoding(size)
    px = np.full(pe.shape, sky)
    disc = pe @ center_dir >= np.cos(np.deg2rad(radius_deg))
    px[disc] = 1.0
    return Panorama.full(px), pe, disc


def test_dark_panorama_passes_through():
    w, h = SIZE
    px = np.random.default_rng(0).uniform(0.0, 0.3, (h, w, 3))
    pe = direction_encoding(SIZE)
    hdr, sky = expand_hdr(Panorama.full(px), pe)
    np.testing.assert_array_equal(hdr.pixels, px)
    flat = px.reshape(-1, 3)
    np.testing.assert_array_equal(sky.peak_intensity, flat[np.argmax(luminance(flat))])


def test_saturated_disc_direction():
    c = np.array([0.5, -0.3, 0.6])
    c /= np.linalg.norm(c)
    pano, pe, disc = sun_pano(c, size=(256, 128))
    hdr, sky = expand_hdr(pano, pe)
    # oracle: solid-angle weighted centroid of the disc pixels
    w = solid_angle_weights((256, 128))[disc]
    oracle = (pe[disc] * w[:, None]).sum(axis=0)
    oracle /= np.linalg.norm(oracle)
    assert np.degrees(np.arccos(np.clip(sky.peak_direction @ c, -1, 1))) < 2.0
    assert np.degrees(np.arccos(np.clip(sky.peak_direction @ oracle, -1, 1))) < 2.0
    assert hdr.pixels[disc].max() > 1.0
    np.testing.assert_array_equal(hdr.pixels[~disc], pano.pixels[~disc])


def test_estimator_deterministic_and_sklearn_params():
    c = np.array([0.0, 0.6, 0.8])
    pano, pe, _ = sun_pano(c)
    est = AnalyticHdrEstimator(sun_scale=20.0)
    a = expand_hdr(pano, pe, est)
    b = expand_hdr(pano, pe, clone(est))
    assert a[0].pixels.tobytes() == b[0].pixels.tobytes()
    assert a[1].latent.tobytes() == b[1].latent.tobytes()
    assert est.get_params()["sun_scale"] == 20.0
    assert est.fit() is est


def test_expand_requires_full_coverage():
    pano = Panorama(np.zeros((4, 8, 3)), np.zeros((4, 8), dtype=bool))
    with pytest.raises(ValueError):
        expand_hdr(pano, direction_encoding((8, 4)))


def test_sky_features_reject_bad_direction():
    with pytest.raises(ValueError):
        SkyFeatures(np.array([0.0, 0.0, 0.5]), np.ones(3))


# -- spherical harmonics ----------------------------------------------------------

def test_constant_environment_irradiance_is_pi():
    coeffs = sh_project(const_pano(1.0, (256, 128)))
    normals = np.random.default_rng(1).normal(size=(50, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    e = sh_irradiance(coeffs, normals)
    np.testing.assert_allclose(e, np.pi, rtol=1e-3)


def test_directional_light_irradiance_shape():
    # radiance = max(z, 0): irradiance on the up-facing normal is 2*pi/3
    pe = direction_encoding((256, 128))
    px = np.repeat(np.clip(pe[..., 2:3], 0, None), 3, axis=2)
    coeffs = sh_project(Panorama.full(px))
    e = sh_irradiance(coeffs, np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]))
    assert e[0, 0] == pytest.approx(2 * np.pi / 3, rel=0.03)
    assert abs(e[1, 0]) < 0.1
