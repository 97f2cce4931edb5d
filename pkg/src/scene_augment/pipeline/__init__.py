"""Dataset I/O, configuration, per-scene orchestration and batch runs."""
from .config import ConfigError, RenderConfig, RunConfig, load_catalog, load_config
from .dataset import (DatasetIOError, SceneManifest, ValidationResult, list_scenes, load_images, load_manifest,
                      validate_input)
from .fixtures import KINDS, gen_fixture
from .run import (AugmentedScene, OutputExistsError, RunReport, SceneAugmenter, SceneRejectedError, augment_scene,
                  process_scene, run_batch, scene_rng, write_scene)

__all__ = [
    "AugmentedScene", "ConfigError", "DatasetIOError", "KINDS", "OutputExistsError", "RenderConfig", "RunConfig",
    "RunReport", "SceneAugmenter", "SceneManifest", "SceneRejectedError", "ValidationResult", "augment_scene",
    "gen_fixture", "list_scenes", "load_catalog", "load_config", "load_images", "load_manifest", "process_scene",
    "run_batch", "scene_rng", "validate_input", "write_scene",
]
