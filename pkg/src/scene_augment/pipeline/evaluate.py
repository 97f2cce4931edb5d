"""Score prediction datasets against ground-truth datasets.

Both directories hold one sub-directory per scene with a ``manifest.json``
whose ``labels`` block follows the dataset schema. Prediction cuboids may carry
a ``score`` (default 1.0). Scenes are paired by directory name; a ground-truth
scene without predictions counts all its objects as missed.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from ..geometry import Cuboid3D
from ..labels import (DetectionAccumulator, FreespaceAccumulator, LabelSet, MatchCriteria, MetricsUndefinedError,
                      match_cuboids)
from .dataset import MANIFEST, DatasetIOError

TASKS = ("obstacle", "freespace")


def load_labels(scene_dir) -> Tuple[LabelSet, List[float]]:
    """Labels of one scene plus per-cuboid scores."""
    path = Path(scene_dir) / MANIFEST
    try:
        doc = json.loads(path.read_text())
        raw = doc.get("labels", {})
        labels = LabelSet.from_dict(raw)
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DatasetIOError(f"{path}: {exc}") from exc
    except (AttributeError, KeyError, TypeError, ValueError) as exc:
        raise DatasetIOError(f"{path}: malformed labels ({exc})") from exc
    scores = [float(c.get("score", 1.0)) for c in raw.get("cuboids", [])]
    return labels, scores


def _scene_dirs(root) -> Dict[str, Path]:
    root = Path(root)
    if not root.is_dir():
        raise DatasetIOError(f"{root}: directory not found")
    return {p.name: p for p in sorted(root.iterdir()) if p.is_dir() and (p / MANIFEST).exists()}


def _by_class(cuboids: List[Cuboid3D], scores: List[float], cls: str):
    idx = [i for i, c in enumerate(cuboids) if c.class_label == cls]
    return [cuboids[i] for i in idx], [scores[i] for i in idx]


def _finite(d: dict) -> dict:
    return {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in d.items()}


def evaluate(pred_dir, gt_dir, task: str, criteria: MatchCriteria = MatchCriteria(),
             threshold: float = 0.5, radius_limit: float = 10.0) -> dict:
    """Dataset-level metrics for ``task`` ("obstacle" or "freespace").

    Raises :class:`MetricsUndefinedError` when the ground truth holds nothing
    to score, and :class:`DatasetIOError` on unreadable input.
    """
    if task not in TASKS:
        raise ValueError(f"task must be one of {TASKS}")
    gts = _scene_dirs(gt_dir)
    preds = _scene_dirs(pred_dir)
    if not gts:
        raise MetricsUndefinedError(f"{gt_dir}: no scenes")
    missing = sorted(set(gts) - set(preds))
    extra = sorted(set(preds) - set(gts))

    if task == "freespace":
        acc = FreespaceAccumulator()
        for name, gdir in gts.items():
            g, _ = load_labels(gdir)
            p = load_labels(preds[name])[0].freespace if name in preds else None
            if p is None:
                p = type(g.freespace).unbounded(g.freespace.bins)
            acc.add(p, g.freespace, radius_limit)
        return {"task": task, "scenes": len(gts), "missing_predictions": missing, "unmatched_predictions": extra,
                "overall": _finite(acc.compute())}

    per_class: Dict[str, DetectionAccumulator] = {}
    for name, gdir in gts.items():
        g, _ = load_labels(gdir)
        p, ps = load_labels(preds[name]) if name in preds else (LabelSet(), [])
        classes = {c.class_label for c in g.cuboids} | {c.class_label for c in p.cuboids}
        for cls in sorted(classes):
            pc, sc = _by_class(p.cuboids, ps, cls)
            gc, _ = _by_class(g.cuboids, [1.0] * len(g.cuboids), cls)
            a = match_cuboids(pc, gc, criteria, sc)
            per_class[cls] = per_class.get(cls, DetectionAccumulator()).merge(DetectionAccumulator().add(a, sc))
    overall = DetectionAccumulator()
    for acc in per_class.values():
        overall = overall.merge(acc)
    classes = {}
    for cls, acc in sorted(per_class.items()):
        try:
            classes[cls] = _finite(acc.compute(threshold))
        except MetricsUndefinedError:
            classes[cls] = None  # predicted class absent from ground truth
    return {"task": task, "scenes": len(gts), "missing_predictions": missing, "unmatched_predictions": extra,
            "overall": _finite(overall.compute(threshold)), "per_class": classes}


def format_metrics(result: dict) -> str:
    rows = [("", result["overall"])] if result["task"] == "freespace" else \
        [("all", result["overall"])] + [(k, v) for k, v in result["per_class"].items()]
    keys = list(result["overall"])
    width = max([len(r[0]) for r in rows] + [5])
    head = "class".ljust(width) + "".join(f"  {k:>16}" for k in keys)
    lines = [head]
    for name, m in rows:
        cells = []
        for k in keys:
            v = None if m is None else m.get(k)
            cells.append(f"  {'-':>16}" if v is None else
                         f"  {v:>16.4f}" if isinstance(v, float) else f"  {v!s:>16}")
        lines.append((name or result["task"]).ljust(width) + "".join(cells))
    lines.append(f"scenes: {result['scenes']}, missing predictions: {len(result['missing_predictions'])}")
    return "\n".join(lines) + "\n"
