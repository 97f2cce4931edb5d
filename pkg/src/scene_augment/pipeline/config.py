"""Run configuration and asset catalog loading."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import tomli

from ..lighting import AnalyticHdrEstimator, HdrEstimator
from ..mesh import load_obj
from ..placement import CatalogEntry, Footprint, PlacementPolicy
from .dataset import DEFAULT_MIN_COVERAGE, DatasetIOError

# documented bounds for the per-scene post-processing draws
RANGE_BOUNDS = {
    "shadow_strength": (0.0, 1.0),
    "saturation": (0.0, 2.0),
    "blur_sigma": (0.0, 1.5),
    "noise_sigma": (0.0, 0.1),
}


class ConfigError(ValueError):
    """Configuration is readable but invalid."""


def _pair(v, name) -> Tuple[float, float]:
    try:
        lo, hi = (float(x) for x in v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a [lo, hi] pair") from exc
    return lo, hi


@dataclass
class RenderConfig:
    shadow_strength: Tuple[float, float] = (0.6, 1.0)
    saturation: Tuple[float, float] = (0.7, 1.3)
    blur_sigma: Tuple[float, float] = (0.0, 0.5)
    noise_sigma: Tuple[float, float] = (0.0, 0.004)
    panorama_size: Tuple[int, int] = (1024, 512)
    shadow_taps: int = 16
    shadow_cone_deg: float = 2.0

    def __post_init__(self):
        for name, (lo_b, hi_b) in RANGE_BOUNDS.items():
            lo, hi = _pair(getattr(self, name), name)
            if not lo_b <= lo <= hi <= hi_b:
                raise ConfigError(f"{name} range [{lo}, {hi}] must lie within [{lo_b}, {hi_b}]")
            setattr(self, name, (lo, hi))
        w, h = (int(x) for x in self.panorama_size)
        if w != 2 * h or h < 2:
            raise ConfigError("panorama_size must be [W, H] with W = 2H")
        self.panorama_size = (w, h)
        if self.shadow_taps < 1:
            raise ConfigError("shadow_taps must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "RenderConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown render keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in vars(self).items()}


@dataclass
class RunConfig:
    dataset: Path
    output: Path
    policy: PlacementPolicy
    catalog: Path
    estimator: dict = field(default_factory=lambda: {"kind": "analytic"})
    render: RenderConfig = field(default_factory=RenderConfig)
    seed: int = 0
    jobs: int = 1
    min_coverage: float = DEFAULT_MIN_COVERAGE
    ego_footprint: Tuple[Tuple[float, float], Tuple[float, float]] = ((1.4, 0.0), (2.6, 1.1))
    rdm_bins: int = 360
    debug_hdr: bool = False

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if int(self.jobs) < 1:
            raise ConfigError("jobs must be >= 1")
        if not 0 <= self.min_coverage <= 1:
            raise ConfigError("min_coverage must lie in [0, 1]")
        self.seed, self.jobs = int(self.seed), int(self.jobs)

    def make_estimator(self) -> HdrEstimator:
        params = dict(self.estimator)
        kind = params.pop("kind", "analytic")
        if kind != "analytic":
            raise ConfigError(f"unknown estimator {kind!r}")
        return AnalyticHdrEstimator(**params)

    def ego_obstacle(self) -> Optional[Footprint]:
        if self.ego_footprint is None:
            return None
        center, half = self.ego_footprint
        return Footprint(tuple(center), tuple(half), 0.0)

    @classmethod
    def from_dict(cls, d: dict, base: Path = Path(".")) -> "RunConfig":
        try:
            est = dict(d.get("estimator", {"kind": "analytic"}))
            if est.get("kind", "analytic") != "analytic":
                raise ConfigError(f"unknown estimator {est.get('kind')!r}")
            cfg = cls(
                dataset=(base / d["dataset"]).resolve(),
                output=(base / d["output"]).resolve(),
                policy=PlacementPolicy.from_dict(d["policy"]),
                catalog=(base / d["catalog"]).resolve(),
                estimator=est,
                render=RenderConfig.from_dict(d.get("render", {})),
                seed=d.get("seed", 0),
                jobs=d.get("jobs", 1),
                min_coverage=float(d.get("min_coverage", DEFAULT_MIN_COVERAGE)),
                ego_footprint=d.get("ego_footprint", ((1.4, 0.0), (2.6, 1.1))),
                rdm_bins=int(d.get("rdm_bins", 360)),
                debug_hdr=bool(d.get("debug_hdr", False)),
            )
            cfg.make_estimator()
        except KeyError as exc:
            raise ConfigError(f"missing config field {exc.args[0]!r}") from exc
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        return cfg

    def to_dict(self) -> dict:
        return {
            "dataset": str(self.dataset),
            "output": str(self.output),
            "policy": self.policy.to_dict(),
            "catalog": str(self.catalog),
            "estimator": dict(self.estimator),
            "render": self.render.to_dict(),
            "seed": self.seed,
            "jobs": self.jobs,
            "min_coverage": self.min_coverage,
            "ego_footprint": None if self.ego_footprint is None else [list(x) for x in self.ego_footprint],
            "rdm_bins": self.rdm_bins,
            "debug_hdr": self.debug_hdr,
        }


def load_config(path) -> RunConfig:
    """Read a RunConfig from a ``.toml`` or ``.json`` file; relative paths resolve against it."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DatasetIOError(f"{path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".toml":
            doc = tomli.loads(raw.decode("utf-8"))
        else:
            doc = json.loads(raw)
    except (tomli.TOMLDecodeError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: cannot parse config ({exc})") from exc
    return RunConfig.from_dict(doc, path.parent)


@lru_cache(maxsize=8)
def _load_catalog(path: str, mtime: float) -> Dict[str, Tuple[CatalogEntry, ...]]:
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetIOError(f"{p}: {exc}") from exc
    groups: Dict[str, List[CatalogEntry]] = {}
    for a in doc.get("assets", []):
        try:
            mesh = load_obj(p.parent / a["mesh"])
        except (OSError, ValueError) as exc:
            raise DatasetIOError(f"{p}: asset {a.get('id')}: {exc}") from exc
        entry = CatalogEntry(str(a["id"]), mesh, a.get("class", "object"), a.get("lock_state"))
        groups.setdefault(str(a["group"]), []).append(entry)
    return {g: tuple(v) for g, v in groups.items()}


def load_catalog(path) -> Dict[str, Tuple[CatalogEntry, ...]]:
    """Asset catalog JSON: ``{"assets": [{"id", "group", "mesh", "class", "lock_state"}]}``."""
    p = Path(path).resolve()
    try:
        mtime = p.stat().st_mtime
    except OSError as exc:
        raise DatasetIOError(f"{p}: {exc}") from exc
    return _load_catalog(str(p), mtime)


