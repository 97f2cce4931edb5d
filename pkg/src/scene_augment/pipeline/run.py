"""Per-scene augmentation and batch execution."""
from __future__ import annotations

import hashlib
import shutil
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from ..geometry import CameraModel
from ..labels import LabelSet, add_synthetic_labels, update_existing_labels
from ..lighting import (AnalyticHdrEstimator, EgoLightConfig, EnvironmentMap, HdrEstimator, ego_lights,
                        expand_hdr, fuse_envmap, sh_project)
from ..panorama import direction_encoding, inpaint, stitch
from ..placement import (PARKING, AssetInstance, CatalogEntry, PlacementPolicy, PlacementStats,
                         RegionOfInterest, place_assets)
from ..render import PostProcessParams, RenderLayers, composite, postprocess, render_objects, render_shadows
from .config import RenderConfig, RunConfig, load_catalog
from .dataset import (DatasetIOError, SceneManifest, SceneWriter, ValidationResult, atomic_write_text, dump_json,
                      list_scenes, load_images, load_manifest, validate_input, write_png)


class SceneRejectedError(ValueError):
    def __init__(self, result: ValidationResult):
        super().__init__(f"{result.reason}: {result.detail}")
        self.result = result


class OutputExistsError(FileExistsError):
    """Output directory already holds data and overwriting was not requested."""


def scene_rng(seed: int, scene_id: str) -> np.random.Generator:
    """Stream for one scene, derived from (global seed, scene id) so batching cannot change it."""
    digest = hashlib.sha256(scene_id.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2 ** 64 - 1)] + words))


@dataclass(eq=False)
class AugmentedScene:
    scene_id: str
    images: Dict[str, Optional[np.ndarray]]  # None: camera untouched, keep the input frame
    labels: LabelSet
    instances: List[AssetInstance]
    stats: PlacementStats
    postprocess: Optional[PostProcessParams] = None
    env: Optional[EnvironmentMap] = None
    layers: Dict[str, RenderLayers] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    @property
    def is_identity(self) -> bool:
        return not self.instances

    def instances_dict(self) -> List[dict]:
        return [{"asset_id": i.asset_id, "group": i.group, "class": i.class_label,
                 "pose": i.pose.to_dict(), "visibility": dict(sorted(i.visibility.items())),
                 "lock_state": i.lock_state, "spot_index": i.spot_index} for i in self.instances]


def _draw(rng: np.random.Generator, lohi) -> float:
    lo, hi = lohi
    return float(lo) if lo == hi else float(rng.uniform(lo, hi))


def sample_postprocess(render: RenderConfig, rng: np.random.Generator) -> PostProcessParams:
    return PostProcessParams(
        shadow_strength=_draw(rng, render.shadow_strength),
        saturation=_draw(rng, render.saturation),
        blur_sigma=_draw(rng, render.blur_sigma),
        noise_sigma=_draw(rng, render.noise_sigma),
    ).validate()


class _Timer:
    def __init__(self, sink: Dict[str, float]):
        self.sink = sink
        self.t = time.perf_counter()

    def lap(self, name: str):
        now = time.perf_counter()
        self.sink[name] = self.sink.get(name, 0.0) + now - self.t
        self.t = now


def augment_scene(manifest: SceneManifest, images: Mapping[str, np.ndarray], policy: PlacementPolicy,
                  catalog: Mapping[str, Sequence[CatalogEntry]], rng: np.random.Generator,
                  render: Optional[RenderConfig] = None, estimator: Optional[HdrEstimator] = None,
                  obstacles=(), ego_light_config: Optional[EgoLightConfig] = None) -> AugmentedScene:
    """Run every stage on one validated scene, in memory.

    Stage order: stitch, inpaint, expand_hdr, fuse_envmap, ego_lights,
    place_assets, render objects and shadows, postprocess, composite,
    synthetic labels, update of existing labels. When nothing gets placed the
    input frames and labels are returned untouched.
    """
    render = render or RenderConfig()
    estimator = estimator if estimator is not None else AnalyticHdrEstimator()
    timings: Dict[str, float] = {}
    clock = _Timer(timings)
    cams: Dict[str, CameraModel] = {c.name: c.model for c in manifest.cameras}
    names = [c.name for c in manifest.cameras]
    size = render.panorama_size

    ldr = stitch([(images[n], cams[n]) for n in names], size)
    clock.lap("stitch")
    ldr = inpaint(ldr)
    clock.lap("inpaint")
    hdr, sky = expand_hdr(ldr, direction_encoding(size), estimator)
    clock.lap("expand_hdr")
    env = fuse_envmap(ldr, hdr, sky)
    clock.lap("fuse_envmap")
    lights = ego_lights(env, ego_light_config)
    clock.lap("ego_lights")

    labels = manifest.labels
    real = [c for c, s in zip(labels.cuboids, labels.synthetic) if not s]
    if policy.region.kind == PARKING:
        region = RegionOfInterest(PARKING, spots=labels.parking)
        policy = PlacementPolicy(policy.count_distribution, policy.group_distribution, region,
                                 policy.max_attempts, policy.parking_noise_sigma, policy.occlusion_threshold)
    instances, stats = place_assets(policy, catalog, real, rng, [cams[n] for n in names],
                                    manifest.ground_z, obstacles)
    clock.lap("place_assets")
    if not instances:
        return AugmentedScene(manifest.scene_id, {n: None for n in names}, labels, [], stats,
                              env=env, timings=timings)

    params = sample_postprocess(render, rng)
    for inst in instances:
        inst.saturation = params.saturation
        inst.shadow_strength = params.shadow_strength
    coeffs = sh_project(env)
    cone = np.deg2rad(render.shadow_cone_deg)
    raw_layers: Dict[str, RenderLayers] = {}
    warnings: List[str] = []
    for n in names:
        lay = render_objects(instances, cams[n], coeffs, lights, occluders=real)
        lay.shadow_layer = render_shadows(instances, cams[n], sky, manifest.ground_z, render.shadow_taps,
                                          cone, occluders=real, hit_distance=lay.hit_distance)
        if lay.degenerate_triangles:
            warnings.append(f"{n}: skipped {lay.degenerate_triangles} degenerate triangles")
        raw_layers[n] = lay
    clock.lap("render")
    layers = {n: postprocess(raw_layers[n], params, rng) for n in names}
    clock.lap("postprocess")
    out_images: Dict[str, Optional[np.ndarray]] = {}
    for n in names:
        lay = layers[n]
        if not (lay.alpha > 0).any() and not (lay.shadow_layer > 0).any():
            out_images[n] = None
        else:
            out_images[n] = composite(images[n], lay)
    clock.lap("composite")
    new_labels = add_synthetic_labels(labels, instances, cams)
    clock.lap("synth_labels")
    new_labels = update_existing_labels(new_labels, instances, raw_layers, cams)
    clock.lap("update_labels")
    return AugmentedScene(manifest.scene_id, out_images, new_labels, instances, stats, params, env,
                          layers, timings, warnings)


class SceneAugmenter(BaseEstimator):
    """Estimator-style front end: ``fit`` checks the setup, ``transform`` augments scenes.

    ``transform`` takes ``(SceneManifest, images)`` pairs and returns
    :class:`AugmentedScene` objects. Randomness per scene comes from
    ``(seed, scene_id)`` only, so results do not depend on batch order.
    """

    def __init__(self, policy: Optional[PlacementPolicy] = None, catalog=None, render: Optional[RenderConfig] = None,
                 estimator: Optional[HdrEstimator] = None, seed: int = 0, min_coverage: float = 0.6,
                 obstacles=(), ego_light_config: Optional[EgoLightConfig] = None):
        self.policy = policy
        self.catalog = catalog
        self.render = render
        self.estimator = estimator
        self.seed = seed
        self.min_coverage = min_coverage
        self.obstacles = obstacles
        self.ego_light_config = ego_light_config

    def fit(self, X=None, y=None):
        if self.policy is None:
            raise ValueError("SceneAugmenter needs a placement policy")
        if self.catalog is None:
            raise ValueError("SceneAugmenter needs an asset catalog")
        for g, p in self.policy.group_distribution.items():
            if p > 0 and not self.catalog.get(g):
                raise ValueError(f"asset group {g!r} has no catalog entries")
        self.render_ = self.render or RenderConfig()
        self.estimator_ = (self.estimator if self.estimator is not None else AnalyticHdrEstimator()).fit()
        return self

    def validate(self, manifest: SceneManifest) -> ValidationResult:
        return validate_input(manifest, self.min_coverage)

    def transform_one(self, manifest: SceneManifest, images: Mapping[str, np.ndarray]) -> AugmentedScene:
        if not hasattr(self, "estimator_"):
            self.fit()
        res = self.validate(manifest)
        if not res.ok:
            raise SceneRejectedError(res)
        return augment_scene(manifest, images, self.policy, self.catalog, scene_rng(self.seed, manifest.scene_id),
                             self.render_, self.estimator_, self.obstacles, self.ego_light_config)

    def transform(self, X) -> List[AugmentedScene]:
        return [self.transform_one(m, imgs) for m, imgs in X]


# -- writing ------------------------------------------------------------------------

def write_scene(out_root, manifest: SceneManifest, result: AugmentedScene, debug_hdr: bool = False) -> Path:
    """Write one augmented scene in the input format, atomically."""
    with SceneWriter(out_root, manifest.scene_id) as w:
        for cam in manifest.cameras:
            img = result.images.get(cam.name)
            dst = w.path(cam.image)
            if img is None:
                shutil.copyfile(manifest.image_path(cam), dst)
            else:
                write_png(dst, img)
        doc = manifest.to_dict(result.labels)
        doc["augmentation"] = {
            "instances": result.instances_dict(),
            "postprocess": None if result.postprocess is None else vars(result.postprocess),
        }
        w.path("manifest.json").write_text(dump_json(doc))
        if debug_hdr and result.env is not None:
            import cv2
            rgb = result.env.pixels.astype(np.float32)
            cv2.imwrite(str(w.path("debug/envmap.hdr")), np.ascontiguousarray(rgb[..., ::-1]))
        return w.commit()


# -- batch --------------------------------------------------------------------------

@dataclass
class SceneOutcome:
    scene: str
    status: str  # "processed" | "skipped"
    reason: Optional[str] = None
    placed: int = 0
    stats: PlacementStats = field(default_factory=PlacementStats)
    warnings: List[str] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)


@dataclass
class RunReport:
    processed: int = 0
    skipped: List[dict] = field(default_factory=list)
    stats: PlacementStats = field(default_factory=PlacementStats)
    placed_per_scene: Dict[str, int] = field(default_factory=dict)
    warnings: Dict[str, List[str]] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)

    def add(self, o: SceneOutcome) -> "RunReport":
        if o.status == "processed":
            self.processed += 1
            self.placed_per_scene[o.scene] = o.placed
            self.stats = self.stats.merge(o.stats)
        else:
            self.skipped.append({"scene": o.scene, "reason": o.reason})
        if o.warnings:
            self.warnings[o.scene] = list(o.warnings)
        for k, v in o.timings.items():
            self.timings[k] = self.timings.get(k, 0.0) + v
        return self

    @property
    def placed_per_group(self) -> Dict[str, int]:
        return dict(sorted(self.stats.per_group.items()))

    @property
    def mean_placed(self) -> float:
        return float(np.mean(list(self.placed_per_scene.values()))) if self.placed_per_scene else 0.0

    def to_dict(self) -> dict:
        return {
            "scenes_processed": self.processed,
            "scenes_skipped": len(self.skipped),
            "skipped": sorted(self.skipped, key=lambda s: s["scene"]),
            "assets_placed": self.stats.placed,
            "assets_placed_per_group": self.placed_per_group,
            "mean_placed_per_scene": self.mean_placed,
            "placement": self.stats.to_dict(),
            "placed_per_scene": dict(sorted(self.placed_per_scene.items())),
            "warnings": dict(sorted(self.warnings.items())),
        }

    def format_table(self) -> str:
        d = self.to_dict()
        rows = [
            ("scenes processed", d["scenes_processed"]),
            ("scenes skipped", d["scenes_skipped"]),
            ("assets placed", d["assets_placed"]),
            ("mean placed / scene", f"{d['mean_placed_per_scene']:.3f}"),
            ("placement attempts", d["placement"]["attempts"]),
            ("instances skipped", d["placement"]["skipped"]),
        ]
        rows += [(f"  group {g}", n) for g, n in d["assets_placed_per_group"].items()]
        rows += [(f"  rejected: {k}", n) for k, n in d["placement"]["rejections"].items()]
        width = max(len(r[0]) for r in rows)
        lines = [f"{k.ljust(width)}  {v}" for k, v in rows]
        for s in d["skipped"]:
            lines.append(f"skip {s['scene']}: {s['reason']}")
        return "\n".join(lines) + "\n"


def process_scene(scene_dir, config: RunConfig) -> SceneOutcome:
    """Load, validate, augment and write one scene; failures become a skip with a reason."""
    scene_dir = Path(scene_dir)
    name = scene_dir.name
    t0 = time.perf_counter()
    try:
        manifest = load_manifest(scene_dir)
    except DatasetIOError as exc:
        return SceneOutcome(name, "skipped", f"io: {exc}")
    name = manifest.scene_id
    res = validate_input(manifest, config.min_coverage)
    if not res.ok:
        return SceneOutcome(name, "skipped", f"validation: {res.reason}: {res.detail}")
    try:
        images = load_images(manifest)
        catalog = load_catalog(config.catalog)
    except DatasetIOError as exc:
        return SceneOutcome(name, "skipped", f"io: {exc}")
    obstacles = [o for o in (config.ego_obstacle(),) if o is not None]
    t1 = time.perf_counter()
    try:
        result = augment_scene(manifest, images, config.policy, catalog, scene_rng(config.seed, name),
                               config.render, config.make_estimator(), obstacles)
        t2 = time.perf_counter()
        write_scene(config.output, manifest, result, config.debug_hdr)
    except Exception as exc:  # a failing scene never aborts the batch
        return SceneOutcome(name, "skipped", f"error: {type(exc).__name__}: {exc}")
    timings = dict(result.timings, load=t1 - t0, write=time.perf_counter() - t2)
    return SceneOutcome(name, "processed", None, len(result.instances), result.stats, result.warnings, timings)


def _task(args):
    scene_dir, config = args
    return process_scene(scene_dir, config)


def prepare_output(output: Path, overwrite: bool) -> None:
    output = Path(output)
    if output.exists():
        if not output.is_dir():
            raise OutputExistsError(f"{output} exists and is not a directory")
        if any(output.iterdir()) and not overwrite:
            raise OutputExistsError(f"{output} is not empty; pass --overwrite to replace it")
        for stale in output.glob(".*.partial"):
            shutil.rmtree(stale, ignore_errors=True)
    output.mkdir(parents=True, exist_ok=True)


def run_batch(config: RunConfig, overwrite: bool = False, jobs: Optional[int] = None,
              scene_order: Optional[Sequence[int]] = None) -> RunReport:
    """Augment every scene of ``config.dataset`` into ``config.output``.

    Writes ``report.json`` and ``report.txt`` (deterministic) plus
    ``timings.json``. ``scene_order`` permutes processing order, for tests.
    """
    jobs = config.jobs if jobs is None else int(jobs)
    scenes = list_scenes(config.dataset)
    prepare_output(config.output, overwrite)
    if scene_order is not None:
        scenes = [scenes[i] for i in scene_order]
    tasks = [(s, config) for s in scenes]
    start = time.perf_counter()
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as ex:
            outcomes = list(ex.map(_task, tasks))
    else:
        outcomes = [_task(t) for t in tasks]
    wall = time.perf_counter() - start
    report = RunReport()
    for o in sorted(outcomes, key=lambda o: o.scene):
        report.add(o)
    out = Path(config.output)
    atomic_write_text(out / "report.json", dump_json(report.to_dict()))
    atomic_write_text(out / "report.txt", report.format_table())
    timing_doc = {"wall_seconds": wall, "jobs": jobs, "scenes": len(tasks),
                  "scenes_per_second": len(tasks) / wall if wall > 0 else None,
                  "stage_seconds": dict(sorted(report.timings.items()))}
    atomic_write_text(out / "timings.json", dump_json(timing_doc))
    return report
