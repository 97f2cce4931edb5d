import json
import shutil

import numpy as np
import pytest
from sklearn.base import clone

from scene_augment.geometry import project
from scene_augment.labels import LabelSet
from scene_augment.panorama import coverage_fraction
from scene_augment.pipeline import (ConfigError, DatasetIOError, OutputExistsError, RunConfig, SceneAugmenter,
                                    SceneRejectedError, augment_scene, gen_fixture, list_scenes, load_catalog,
                                    load_config, load_images, load_manifest, run_batch, scene_rng, validate_input)
from scene_augment.pipeline.config import RenderConfig
from scene_augment.pipeline.dataset import CameraEntry, SceneManifest
from scene_augment.pipeline.fixtures import surround_rig

from conftest import edit_config, pinhole, tree_bytes

SMALL = dict(width=160, height=120)
SMALL_RENDER = {"panorama_size": [128, 64]}
BLOCKED = {"kind": "rectangle", "half_length": 0.5, "half_width": 0.5}  # inside the ego footprint


@pytest.fixture
def stereo(tmp_path):
    cfg = gen_fixture("stereo-pinhole", tmp_path / "stereo", seed=7, scenes=3, **SMALL)
    return edit_config(cfg, render=SMALL_RENDER)


@pytest.fixture
def surround(tmp_path):
    cfg = gen_fixture("surround-fisheye", tmp_path / "surround", seed=3, scenes=3, **SMALL)
    return edit_config(cfg, render=SMALL_RENDER)


def scene_inputs(cfg_path, k=0):
    cfg = load_config(cfg_path)
    m = load_manifest(list_scenes(cfg.dataset)[k])
    return cfg, m, load_images(m)


def run(cfg, m, images, policy=None, seed=0):
    return augment_scene(m, images, policy or cfg.policy, load_catalog(cfg.catalog), scene_rng(seed, m.scene_id),
                         cfg.render, cfg.make_estimator(), [cfg.ego_obstacle()])


# -- validate_input -----------------------------------------------------------------

def test_surround_fisheyes_accepted(surround):
    _, m, _ = scene_inputs(surround)
    res = validate_input(m)
    assert res.ok and res.coverage > 0.9


def test_narrow_front_camera_rejected_for_coverage(tmp_path):
    cam = pinhole(640, 480, f=500.0)
    m = SceneManifest("s", tmp_path, [CameraEntry("cam", "cam.png", cam, cam.to_dict())], LabelSet())
    res = validate_input(m)
    assert not res.ok and res.reason == "coverage"
    a, b = np.arctan(320 / 500), np.arctan(240 / 500)
    assert res.coverage == pytest.approx(4 * np.arcsin(np.sin(a) * np.sin(b)) / (4 * np.pi), abs=0.01)
    assert res.coverage < 0.1


def test_missing_extrinsics_rejected_for_calibration(surround):
    scene = list_scenes(load_config(surround).dataset)[0]
    doc = json.loads((scene / "manifest.json").read_text())
    del doc["cameras"][1]["model"]["extrinsics"]
    (scene / "manifest.json").write_text(json.dumps(doc))
    res = validate_input(load_manifest(scene))
    assert not res.ok and res.reason == "calibration" and "left" in res.detail


def test_unreadable_files_raise_io_error(surround):
    scene = list_scenes(load_config(surround).dataset)[0]
    (scene / "front.png").write_bytes(b"not a png")
    with pytest.raises(DatasetIOError):
        load_images(load_manifest(scene))
    (scene / "manifest.json").write_text("{broken")
    with pytest.raises(DatasetIOError):
        load_manifest(scene)


def test_resolution_mismatch_is_io_error(surround):
    from scene_augment.pipeline.dataset import write_png
    scene = list_scenes(load_config(surround).dataset)[0]
    write_png(scene / "rear.png", np.zeros((10, 10, 3), dtype=np.uint8))
    with pytest.raises(DatasetIOError):
        load_images(load_manifest(scene))


# -- run_scene ------------------------------------------------------------------------

def test_blocked_region_is_identity(stereo, tmp_path):
    cfg_path = edit_config(stereo, policy={"region": BLOCKED})
    cfg, m, images = scene_inputs(cfg_path)
    res = run(cfg, m, images)
    assert res.is_identity and all(v is None for v in res.images.values())
    assert res.labels.to_dict() == m.labels.to_dict()
    run_batch(cfg)
    for scene in list_scenes(cfg.dataset):
        out = cfg.output / scene.name
        for png in scene.glob("*.png"):
            assert (out / png.name).read_bytes() == png.read_bytes()
        src = json.loads((scene / "manifest.json").read_text())
        dst = json.loads((out / "manifest.json").read_text())
        assert dst["labels"] == src["labels"]
        assert dst["augmentation"]["instances"] == []


def test_same_seed_is_bit_identical(surround):
    cfg, m, images = scene_inputs(surround)
    a = run(cfg, m, images, seed=11)
    b = run(cfg, m, images, seed=11)
    assert a.instances and len(a.instances) == len(b.instances)
    for n in a.images:
        assert (a.images[n] is None) == (b.images[n] is None)
        if a.images[n] is not None:
            assert a.images[n].tobytes() == b.images[n].tobytes()
    assert a.labels.to_dict() == b.labels.to_dict()
    c = run(cfg, m, images, seed=12)
    assert c.labels.to_dict() != a.labels.to_dict()


def test_stereo_cube_at_projected_pixels(stereo):
    cfg, m, images = scene_inputs(stereo)
    res = run(cfg, m, images)
    assert len(res.instances) == 1
    inst = res.instances[0]
    verts = inst.pose.apply(inst.mesh.vertices)
    center = verts.mean(axis=0)
    for cam in m.camera_models:
        pix = np.array([project(v, cam)[0] for v in verts])
        mask = res.layers[cam.name].alpha > 0
        vs, us = np.nonzero(mask)
        # silhouette extent equals the hull of the projected vertices
        assert abs(us.min() - pix[:, 0].min()) <= 1.0 and abs(us.max() - pix[:, 0].max()) <= 1.0
        assert abs(vs.min() - pix[:, 1].min()) <= 1.0 and abs(vs.max() - pix[:, 1].max()) <= 1.0
        u, v = np.round(project(center, cam)[0]).astype(int)
        assert mask[v, u]
        assert not np.array_equal(res.images[cam.name][v, u], images[cam.name][v, u])
        boxes = [b for b in res.labels.bboxes2d[cam.name] if res.labels.synthetic[b.cuboid_index]]
        assert len(boxes) == 1


def test_every_placed_asset_labelled_where_visible(surround):
    cfg, m, images = scene_inputs(surround)
    res = run(cfg, m, images)
    n_real = len(m.labels.cuboids)
    assert res.labels.synthetic == [False] * n_real + [True] * len(res.instances)
    for k, inst in enumerate(res.instances):
        idx = n_real + k
        for cam in m.camera_models:
            seen = any(b.cuboid_index == idx for b in res.labels.bboxes2d.get(cam.name, []))
            if inst.visibility.get(cam.name, 0) > 0:
                assert seen, (cam.name, inst.visibility)


def test_parking_lock_flips_availability(tmp_path):
    cfg_path = edit_config(gen_fixture("parking", tmp_path / "p", seed=2, scenes=1, **SMALL), render=SMALL_RENDER)
    cfg, m, images = scene_inputs(cfg_path)
    res = run(cfg, m, images)
    assert len(res.instances) == 1 and res.instances[0].lock_state == "locked"
    k = res.instances[0].spot_index
    assert m.labels.parking[k].eligible
    spot = res.labels.parking[k]
    assert spot.has_lock and not spot.available and spot.lock_state == "locked"


def test_augmenter_estimator_api(surround):
    cfg, m, images = scene_inputs(surround)
    aug = SceneAugmenter(cfg.policy, load_catalog(cfg.catalog), cfg.render, seed=5)
    assert clone(aug).get_params()["seed"] == 5
    a = aug.fit().transform([(m, images)])[0]
    b = clone(aug).transform([(m, images)])[0]
    assert a.labels.to_dict() == b.labels.to_dict()
    with pytest.raises(ValueError):
        SceneAugmenter(cfg.policy, {}).fit()
    with pytest.raises(SceneRejectedError):
        SceneAugmenter(cfg.policy, load_catalog(cfg.catalog), cfg.render, min_coverage=1.01).transform_one(m, images)


def test_scene_rng_depends_only_on_seed_and_id():
    a = scene_rng(1, "scene_0001").random(4)
    assert np.array_equal(a, scene_rng(1, "scene_0001").random(4))
    assert not np.array_equal(a, scene_rng(1, "scene_0002").random(4))
    assert not np.array_equal(a, scene_rng(2, "scene_0001").random(4))


# -- run_batch ----------------------------------------------------------------------------

def test_empty_dataset_gives_empty_report(stereo):
    cfg = load_config(stereo)
    shutil.rmtree(cfg.dataset)
    cfg.dataset.mkdir()
    report = run_batch(cfg)
    assert report.processed == 0 and report.skipped == [] and report.stats.placed == 0
    assert json.loads((cfg.output / "report.json").read_text())["scenes_processed"] == 0


def test_one_unreadable_scene_among_ten(tmp_path):
    cfg_path = edit_config(gen_fixture("stereo-pinhole", tmp_path / "ten", seed=1, scenes=10, width=96, height=72),
                           render={"panorama_size": [64, 32]})
    cfg = load_config(cfg_path)
    bad = list_scenes(cfg.dataset)[4]
    (bad / "left.png").write_bytes(b"\x89PNG broken")
    report = run_batch(cfg)
    assert report.processed == 9
    assert [s["scene"] for s in report.skipped] == [bad.name]
    assert report.skipped[0]["reason"].startswith("io:")
    assert not (cfg.output / bad.name).exists()
    assert not list(cfg.output.glob(".*.partial"))


def test_output_collision_needs_overwrite(stereo):
    cfg = load_config(stereo)
    run_batch(cfg)
    with pytest.raises(OutputExistsError):
        run_batch(cfg)
    run_batch(cfg, overwrite=True)


def test_batch_reproducible_and_order_free(stereo):
    cfg = load_config(stereo)
    run_batch(cfg)
    first = tree_bytes(cfg.output)
    run_batch(cfg, overwrite=True, scene_order=[2, 0, 1])
    assert tree_bytes(cfg.output) == first
    run_batch(cfg, overwrite=True, jobs=2)
    assert tree_bytes(cfg.output) == first


def test_output_is_valid_input(surround):
    cfg = load_config(surround)
    report = run_batch(cfg)
    assert report.processed == 3 and report.stats.placed > 0
    assert sum(report.placed_per_group.values()) == report.stats.placed
    for scene in list_scenes(cfg.output):
        m = load_manifest(scene)
        assert validate_input(m).ok
        load_images(m)
    # feed the output back in
    again = RunConfig(cfg.output, cfg.output.parent / "again", cfg.policy, cfg.catalog, render=cfg.render)
    assert run_batch(again).processed == 3


def test_mean_placed_over_hundred_scenes(tmp_path):
    cfg_path = gen_fixture("surround-fisheye", tmp_path / "hundred", seed=0, scenes=100, width=96, height=72)
    cfg_path = edit_config(cfg_path, render={"panorama_size": [64, 32]},
                           policy={"count_distribution": {"1": 0.5, "3": 0.5},
                                   "region": {"kind": "rectangle", "half_length": 7.0, "half_width": 5.0}})
    report = run_batch(load_config(cfg_path))
    assert report.processed == 100
    assert report.stats.skipped == 0  # generous region: every requested asset fits
    assert 1.9 <= report.mean_placed <= 2.1


# -- fixtures ----------------------------------------------------------------------------

def test_surround_fixture_coverage(surround):
    cfg, m, _ = scene_inputs(surround)
    assert len(m.cameras) == 4
    assert coverage_fraction(m.camera_models, (512, 256)) > 0.9
    assert coverage_fraction(surround_rig(), (512, 256)) == pytest.approx(
        coverage_fraction(surround_rig(160, 120), (512, 256)), abs=0.01)


def test_parking_fixture_attributes(tmp_path):
    cfg = load_config(gen_fixture("parking", tmp_path / "p", seed=4, scenes=1, **SMALL))
    spots = load_manifest(list_scenes(cfg.dataset)[0]).labels.parking
    assert len(spots) >= 4
    assert any(not s.available for s in spots) and any(s.eligible for s in spots)
    assert any(s.has_lock and s.lock_state == "unlocked" for s in spots)


def test_fixture_seed_stable(tmp_path):
    a = gen_fixture("stereo-pinhole", tmp_path / "a", seed=9, scenes=2, **SMALL).parent
    b = gen_fixture("stereo-pinhole", tmp_path / "b", seed=9, scenes=2, **SMALL).parent
    c = gen_fixture("stereo-pinhole", tmp_path / "c", seed=10, scenes=2, **SMALL).parent
    assert tree_bytes(a) == tree_bytes(b)
    assert tree_bytes(a) != tree_bytes(c)


def test_unknown_fixture_kind(tmp_path):
    with pytest.raises(ValueError):
        gen_fixture("mono", tmp_path)


# -- config ----------------------------------------------------------------------------------

@pytest.mark.parametrize("change", [
    {"render": {"saturation": [0.5, 3.0]}},
    {"render": {"panorama_size": [100, 60]}},
    {"render": {"bogus": 1}},
    {"estimator": {"kind": "neural"}},
    {"seed": -1},
    {"jobs": 0},
    {"policy": {"count_distribution": {"0": 1.0}}},
])
def test_invalid_config_rejected(stereo, change):
    edit_config(stereo, **change)
    with pytest.raises((ConfigError, ValueError)):
        load_config(stereo)


def test_missing_field_and_unreadable_config(stereo, tmp_path):
    doc = json.loads(stereo.read_text())
    del doc["catalog"]
    stereo.write_text(json.dumps(doc))
    with pytest.raises(ConfigError):
        load_config(stereo)
    with pytest.raises(DatasetIOError):
        load_config(tmp_path / "nope.json")
    (tmp_path / "bad.toml").write_text("dataset = [")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.toml")


def test_toml_config_matches_json(stereo):
    doc = json.loads(stereo.read_text())
    lines = [f'dataset = "{doc["dataset"]}"', f'output = "{doc["output"]}"', f'catalog = "{doc["catalog"]}"',
             f'seed = {doc["seed"]}', f'min_coverage = {doc["min_coverage"]}', "",
             "[render]", "panorama_size = [128, 64]", "",
             "[policy]", "max_attempts = 60", "[policy.count_distribution]", '"1" = 1.0',
             "[policy.group_distribution]", "cube = 1.0",
             "[policy.region]", 'kind = "rectangle"', "half_length = 12.0", "half_width = 6.0"]
    toml = stereo.with_suffix(".toml")
    toml.write_text("\n".join(lines) + "\n")
    assert load_config(toml).to_dict() == load_config(stereo).to_dict()


def test_render_config_bounds():
    with pytest.raises(ConfigError):
        RenderConfig(noise_sigma=(0.0, 0.2))
    with pytest.raises(ConfigError):
        RenderConfig(shadow_taps=0)
    assert RenderConfig(blur_sigma=(1.5, 1.5)).blur_sigma == (1.5, 1.5)
