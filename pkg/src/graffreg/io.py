"""JSON feature, correspondence and result files.

Feature file::

    {"version": 1, "ambient_dim": 3,
     "items": [{"id": "L0", "kind": "line3d", "direction": [..], "anchor": [..]},
               {"id": "P0", "kind": "plane3d", "basis": [[..], [..]], "anchor": [..]},
               {"id": "X0", "kind": "point3d", "anchor": [..]}]}

Correspondence file: ``{"version": 1, "pairs": [["L0", "L7"], ...]}`` (or a
bare list of two-element id lists), target id first.

All floats are written with 17 significant digits so that files round-trip
exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import GraffError, RankDeficient, SchemaError
from .manifold import AffineSubspace, RigidTransform

FORMAT_VERSION = 1
KIND_DIMS = {"point3d": 0, "line3d": 1, "plane3d": 2}
DIM_KINDS = {v: k for k, v in KIND_DIMS.items()}


def format_float(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite number {x}")
    s = format(x + 0.0, ".17g")  # + 0.0 folds -0.0 into 0.0
    return s if ("." in s or "e" in s) else s + ".0"


def dumps(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """Deterministic JSON with 17-significant-digit floats and sorted keys."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), indent, _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        body = ",\n".join(f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in sorted(obj.items()))
        return "{\n" + body + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        body = ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj)
        return "[\n" + body + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


@dataclass
class FeatureSet:
    features: list[AffineSubspace]
    ids: list[str]
    ambient_dim: int = 3

    def index(self) -> dict[str, int]:
        return {fid: i for i, fid in enumerate(self.ids)}


def _load_json(path: str | Path) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc


def _vector(item: dict, key: str, n: int, fid: str) -> np.ndarray:
    try:
        v = np.asarray(item[key], dtype=float)
    except KeyError:
        raise SchemaError(f"item {fid!r} is missing {key!r}") from None
    except (TypeError, ValueError):
        raise SchemaError(f"item {fid!r}: {key!r} is not numeric") from None
    if v.shape[-1:] != (n,) or not np.all(np.isfinite(v)):
        raise SchemaError(f"item {fid!r}: {key!r} must hold finite {n}-vectors")
    return v


def parse_features(doc: Any) -> FeatureSet:
    if not isinstance(doc, dict) or "items" not in doc:
        raise SchemaError("feature file must be an object with an 'items' list")
    if doc.get("version", FORMAT_VERSION) != FORMAT_VERSION:
        raise SchemaError(f"unsupported feature file version {doc.get('version')!r}")
    n = doc.get("ambient_dim", 3)
    if n != 3:
        raise SchemaError(f"only ambient_dim 3 is supported, got {n!r}")
    feats, ids = [], []
    for pos, item in enumerate(doc["items"]):
        if not isinstance(item, dict):
            raise SchemaError(f"item {pos} is not an object")
        fid = str(item.get("id", pos))
        kind = item.get("kind")
        if kind not in KIND_DIMS:
            raise SchemaError(f"item {fid!r}: unknown kind {kind!r}")
        anchor = _vector(item, "anchor", n, fid)
        if kind == "line3d":
            raw = _vector(item, "direction", n, fid).reshape(n, 1)
        elif kind == "plane3d":
            raw = _vector(item, "basis", n, fid)
            if raw.shape != (2, n):
                raise SchemaError(f"item {fid!r}: 'basis' must hold two {n}-vectors")
            raw = raw.T
        else:
            raw = np.zeros((n, 0))
        try:
            feats.append(AffineSubspace.from_raw(raw, anchor))
        except RankDeficient as exc:
            raise RankDeficient(str(exc), item_id=fid) from None
        ids.append(fid)
    if len(set(ids)) != len(ids):
        raise SchemaError("feature ids must be unique")
    return FeatureSet(feats, ids, n)


def read_features(path: str | Path) -> FeatureSet:
    return parse_features(_load_json(path))


def feature_doc(features: Sequence[AffineSubspace], ids: Sequence[str] | None = None) -> dict:
    ids = list(ids) if ids is not None else [str(i) for i in range(len(features))]
    items = []
    for fid, f in zip(ids, features):
        kind = DIM_KINDS[f.dim_sub]
        item: dict[str, Any] = {"id": fid, "kind": kind, "anchor": f.displacement.tolist()}
        if kind == "line3d":
            item["direction"] = f.basis[:, 0].tolist()
        elif kind == "plane3d":
            item["basis"] = f.basis.T.tolist()
        items.append(item)
    return {"version": FORMAT_VERSION, "ambient_dim": 3, "items": items}


def write_features(path: str | Path, features: Sequence[AffineSubspace], ids: Sequence[str] | None = None) -> None:
    Path(path).write_text(dumps(feature_doc(features, ids)) + "\n", encoding="utf-8")


def parse_correspondences(doc: Any) -> list[tuple[str, str]]:
    pairs = doc.get("pairs") if isinstance(doc, dict) else doc
    if not isinstance(pairs, list):
        raise SchemaError("correspondence file must be a list of [target_id, source_id] pairs")
    out = []
    for row in pairs:
        if not isinstance(row, (list, tuple)) or len(row) != 2:
            raise SchemaError(f"correspondence {row!r} is not a two-element list")
        out.append((str(row[0]), str(row[1])))
    return out


def read_correspondences(path: str | Path) -> list[tuple[str, str]]:
    return parse_correspondences(_load_json(path))


def write_correspondences(path: str | Path, pairs: Sequence[tuple[str, str]]) -> None:
    doc = {"version": FORMAT_VERSION, "pairs": [list(p) for p in pairs]}
    Path(path).write_text(dumps(doc) + "\n", encoding="utf-8")


@dataclass
class ResultFile:
    rotation: np.ndarray
    translation: np.ndarray
    inlier_ids: list[list[str]]
    cost: dict[str, float]
    stats: dict = field(default_factory=dict)

    def to_doc(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "rotation": np.asarray(self.rotation).tolist(),
            "translation": np.asarray(self.translation).tolist(),
            "inlier_ids": [list(p) for p in self.inlier_ids],
            "cost": dict(self.cost),
            "stats": self.stats,
        }

    @property
    def transform(self) -> RigidTransform:
        return RigidTransform(self.rotation, self.translation)


def write_result(path: str | Path | None, result: ResultFile) -> str:
    text = dumps(result.to_doc()) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def read_result(path: str | Path) -> ResultFile:
    doc = _load_json(path)
    try:
        res = ResultFile(
            np.asarray(doc["rotation"], dtype=float),
            np.asarray(doc["translation"], dtype=float),
            [list(p) for p in doc["inlier_ids"]],
            dict(doc["cost"]),
            doc.get("stats", {}),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: malformed result file ({exc})") from None
    try:
        res.transform
    except (ValueError, GraffError) as exc:
        raise SchemaError(f"{path}: rotation is not in SO(3) ({exc})") from None
    return res
