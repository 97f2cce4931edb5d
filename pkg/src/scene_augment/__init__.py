"""Insert rendered 3D assets into multi-camera driving scenes, with labels kept consistent."""
from .geometry import CameraModel, Cuboid3D, RigidTransform, project, unproject
from .labels import LabelSet, RadialDistanceMap, match_cuboids, rdm_metrics
from .lighting import AnalyticHdrEstimator, EnvironmentMap, expand_hdr, fuse_envmap
from .panorama import Panorama, inpaint, stitch
from .pipeline import RunConfig, SceneAugmenter, gen_fixture, load_config, run_batch
from .placement import PlacementPolicy, place_assets
from .render import composite, postprocess, render_objects, render_shadows

__version__ = "0.1.0"

__all__ = [
    "AnalyticHdrEstimator", "CameraModel", "Cuboid3D", "EnvironmentMap", "LabelSet", "Panorama", "PlacementPolicy",
    "RadialDistanceMap", "RigidTransform", "RunConfig", "SceneAugmenter", "composite", "expand_hdr", "fuse_envmap",
    "gen_fixture", "inpaint", "load_config", "match_cuboids", "place_assets", "postprocess", "project",
    "rdm_metrics", "render_objects", "render_shadows", "run_batch", "stitch", "unproject",
]
