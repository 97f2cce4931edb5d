import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scene_augment.panorama import (Panorama, bilinear_sample, camera_lookup, coverage_fraction, delinearize,
                                    direction_encoding, inpaint, linearize, pixel_angles, solid_angle_weights,
                                    stitch)
from scene_augment.pipeline.fixtures import surround_rig

from conftest import ftheta, pinhole

SIZE = (128, 64)


def flat(cam, value):
    return np.full((cam.height, cam.width, 3), value, dtype=float)


def test_pixel_zero_of_8x4():
    phi, lam = pixel_angles((8, 4))
    assert phi[0] == pytest.approx(-np.pi + np.pi / 8)
    assert lam[0] == pytest.approx(np.pi / 2 - np.pi / 8)
    d = direction_encoding((8, 4))[0, 0]
    expect = (np.cos(lam[0]) * np.cos(phi[0]), np.cos(lam[0]) * np.sin(phi[0]), np.sin(lam[0]))
    np.testing.assert_allclose(d, expect)


def test_rows_near_horizon_and_top():
    w, h = 64, 32
    _, lam = pixel_angles((w, h))
    # the two rows straddling v = H/2 sit half a pixel either side of the horizon
    assert lam[h // 2 - 1] == pytest.approx(np.pi / (2 * h))
    assert lam[h // 2] == pytest.approx(-np.pi / (2 * h))
    assert lam[0] == pytest.approx(np.pi / 2 - np.pi / (2 * h))
    assert np.all(direction_encoding((w, h))[0, :, 2] > 0.99)


def test_encoding_is_unit_and_size_checked():
    d = direction_encoding(SIZE)
    np.testing.assert_allclose(np.linalg.norm(d, axis=-1), 1.0)
    with pytest.raises(ValueError):
        direction_encoding((100, 60))


def test_solid_angle_weights_sum_to_sphere():
    assert solid_angle_weights(SIZE).sum() == pytest.approx(4 * np.pi)


def test_single_camera_value_passes_through():
    cam = pinhole(64, 48, f=40.0)
    p = stitch([(flat(cam, 0.3), cam)], SIZE)
    assert p.coverage.any()
    np.testing.assert_allclose(p.pixels[p.coverage], 0.3, atol=1e-12)


def test_uint8_input_is_linearized():
    cam = pinhole(64, 48, f=40.0)
    img = np.full((48, 64, 3), 200, dtype=np.uint8)
    p = stitch([(img, cam)], SIZE)
    np.testing.assert_allclose(p.pixels[p.coverage], (200 / 255) ** 2.2)
    np.testing.assert_array_equal(delinearize(linearize(img)), img)


def test_overlap_takes_the_max():
    a, b = pinhole(64, 48, f=40.0, name="a"), pinhole(64, 48, f=40.0, name="b")
    p = stitch([(flat(a, 0.3), a), (flat(b, 0.7), b)], SIZE)
    np.testing.assert_allclose(p.pixels[p.coverage], 0.7, atol=1e-12)


def test_maxpool_per_channel_on_partial_overlap(rng):
    a = pinhole(64, 48, f=40.0, forward=(1, 0.3, 0), name="a")
    b = pinhole(64, 48, f=40.0, forward=(1, -0.3, 0), name="b")
    ia, ib = rng.random((48, 64, 3)), rng.random((48, 64, 3))
    p = stitch([(ia, a), (ib, b)], SIZE)
    dirs = direction_encoding(SIZE).reshape(-1, 3)
    pa, ina = camera_lookup(a, dirs)
    pb, inb = camera_lookup(b, dirs)
    expect = np.zeros((len(dirs), 3))
    expect[ina] = bilinear_sample(ia, pa[ina, 0], pa[ina, 1])
    expect[inb] = np.maximum(expect[inb], bilinear_sample(ib, pb[inb, 0], pb[inb, 1]))
    assert (ina & inb).any()
    np.testing.assert_allclose(p.pixels.reshape(-1, 3), expect, atol=1e-12)
    np.testing.assert_array_equal(p.coverage.reshape(-1), ina | inb)


def test_unseen_direction_is_zero_and_uncovered():
    cam = pinhole(64, 48, f=40.0)
    p = stitch([(flat(cam, 0.5), cam)], SIZE)
    back = direction_encoding(SIZE)[..., 0] < -0.5
    assert not p.coverage[back].any()
    assert (p.pixels[back] == 0).all()


def test_stitch_order_invariance_bit_identical(rng):
    rig = surround_rig(96, 72)
    imgs = [(rng.integers(0, 256, (72, 96, 3), dtype=np.uint8), c) for c in rig]
    ref = stitch(imgs, SIZE)
    for perm in itertools.permutations(range(4)):
        p = stitch([imgs[i] for i in perm], SIZE)
        assert p.pixels.tobytes() == ref.pixels.tobytes()
        assert p.coverage.tobytes() == ref.coverage.tobytes()


def test_stitch_rejects_bad_shapes():
    cam = pinhole(64, 48)
    with pytest.raises(ValueError):
        stitch([(np.zeros((10, 10, 3)), cam)], SIZE)
    with pytest.raises(ValueError):
        stitch([], SIZE)


def test_narrow_pinhole_coverage_matches_solid_angle():
    # horizontal FOV ~64 deg, vertical ~50 deg
    cam = pinhole(640, 480, f=500.0)
    a, b = np.arctan(320 / 500), np.arctan(240 / 500)
    # solid angle of a rectangular pyramid
    omega = 4 * np.arcsin(np.sin(a) * np.sin(b))
    got = coverage_fraction([cam], (1024, 512))
    assert got == pytest.approx(omega / (4 * np.pi), abs=0.005)
    assert got < 0.1


def test_surround_rig_covers_most_of_the_sphere():
    assert coverage_fraction(surround_rig()) > 0.9


def test_inpaint_fully_covered_is_identity(rng):
    p = Panorama.full(rng.random((16, 32, 3)))
    q = inpaint(p)
    assert q.pixels.tobytes() == p.pixels.tobytes()


def test_inpaint_constant_field():
    px = np.full((32, 64, 3), 0.4)
    cov = np.ones((32, 64), dtype=bool)
    cov[10:20, 5:30] = False
    px[~cov] = 0.0
    q = inpaint(Panorama(px, cov))
    np.testing.assert_allclose(q.pixels, 0.4, atol=1e-6)
    assert q.coverage.all()


def test_inpaint_bounds_and_keeps_covered_pixels():
    px = np.zeros((32, 64, 3))
    px[:, :32] = 0.2
    px[:, 32:] = 0.8
    cov = np.ones((32, 64), dtype=bool)
    cov[:, 24:40] = False
    q = inpaint(Panorama(px, cov))
    hole = q.pixels[~cov]
    assert hole.min() >= 0.2 and hole.max() <= 0.8
    assert q.pixels[cov].tobytes() == px[cov].tobytes()
    # azimuth wraps: columns 0 and 63 are neighbors, so the hole sees both sides
    assert 0.2 < hole.mean() < 0.8


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_inpaint_idempotent_and_harmonic(seed):
    r = np.random.default_rng(seed)
    px = r.random((16, 32, 3))
    cov = r.random((16, 32)) > 0.4
    cov[0, 0] = True
    q = inpaint(Panorama(px * cov[..., None], cov))
    again = inpaint(q)
    assert again.pixels.tobytes() == q.pixels.tobytes()
    lo, hi = px[cov].min(axis=0), px[cov].max(axis=0)
    assert np.all(q.pixels >= lo - 1e-12) and np.all(q.pixels <= hi + 1e-12)
    # each hole pixel equals the mean of its 4 neighbors (azimuth wraps, poles clamp)
    P = q.pixels
    ys, xs = np.nonzero(~cov)
    for y, x in zip(ys[:20], xs[:20]):
        nb = [P[y, (x + 1) % 32], P[y, (x - 1) % 32]]
        nb += [P[y + dy, x] for dy in (-1, 1) if 0 <= y + dy < 16]
        np.testing.assert_allclose(P[y, x], np.mean(nb, axis=0), atol=1e-9)


def test_inpaint_empty_raises():
    with pytest.raises(ValueError):
        inpaint(Panorama(np.zeros((4, 8, 3)), np.zeros((4, 8), dtype=bool)))


def test_large_inpaint_runtime():
    # a surround rig leaves the zenith and nadir caps uncovered at full size
    rig = surround_rig()
    imgs = [(np.full((480, 640, 3), 120, dtype=np.uint8), c) for c in rig]
    p = stitch(imgs, (1024, 512))
    q = inpaint(p)
    assert q.coverage.all()
    np.testing.assert_allclose(q.pixels, (120 / 255) ** 2.2, atol=1e-6)


def test_fisheye_camera_lookup_inside_lens():
    cam = ftheta(forward=(0, 1, 0))
    dirs = direction_encoding(SIZE).reshape(-1, 3)
    pix, inside = camera_lookup(cam, dirs)
    assert inside.any()
    r = np.hypot(pix[inside, 0] - 320, pix[inside, 1] - 240)
    assert r.max() <= cam.max_radius + 1e-9


def test_multigrid_fill_matches_direct_solve(monkeypatch):
    import scene_augment.panorama as pano
    r = np.random.default_rng(4)
    px = r.random((96, 192, 3))
    cov = np.zeros((96, 192), dtype=bool)
    cov[30:60, 20:70] = True
    cov[::7, ::11] = True
    p = Panorama(px * cov[..., None], cov)
    direct = inpaint(p)
    monkeypatch.setattr(pano, "DIRECT_LIMIT", 0)
    amg = inpaint(p)
    assert amg.pixels[cov].tobytes() == direct.pixels[cov].tobytes()
    # well inside the 1e-4 convergence tolerance of iterated neighbor averaging
    assert np.abs(amg.pixels - direct.pixels).max() < 1e-6
