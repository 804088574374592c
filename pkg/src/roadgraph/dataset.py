"""On-disk formats for datasets, priors, model parameters, and predictions.

All files are line-delimited JSON with a mandatory schema_version header so
any other implementation can read them; floats serialize at full precision.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .network import ModelConfig, ModelParameters, parameter_shapes
from .autodiff import Tensor
from .priors import PriorTable
from .scene import (
    ObjectNode,
    RelationshipEdge,
    RelationshipInterval,
    Scene,
    SceneGraph,
    ValidationError,
    validate_scene,
)
from .taxonomy import CLASS_ORDER, ObjectClass, RelationshipType, TYPE_ORDER

SCHEMA_VERSION = "1"


class SchemaError(ValueError):
    """The file's schema version or kind is not one this code understands."""


@dataclass
class Dataset:
    scenes: list[Scene] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [s.scene_id for s in self.scenes]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate scene_ids in dataset")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.scenes == other.scenes and self.meta == other.meta


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _node_to_json(n: ObjectNode) -> dict:
    return {
        "id": n.id, "object_class": n.obj_class.value,
        "x": n.x, "y": n.y, "vx": n.vx, "vy": n.vy, "ax": n.ax, "ay": n.ay,
        "yaw": n.yaw, "pitch": n.pitch, "roll": n.roll, "group_id": n.group_id,
    }


def _node_from_json(d: dict) -> ObjectNode:
    return ObjectNode(d["id"], ObjectClass(d["object_class"]),
                      d["x"], d["y"], d["vx"], d["vy"], d["ax"], d["ay"],
                      d["yaw"], d["pitch"], d["roll"], d["group_id"])


def _edge_to_json(e: RelationshipEdge) -> dict:
    return {"subject_id": e.subject_id, "object_id": e.object_id,
            "relation": e.rel.value, "confidence": e.confidence}


def _edge_from_json(d: dict) -> RelationshipEdge:
    return RelationshipEdge(d["subject_id"], d["object_id"],
                            RelationshipType(d["relation"]), d["confidence"])


def _scene_to_json(s: Scene) -> dict:
    return {
        "scene_id": s.scene_id,
        "frames": [
            {"frame_index": g.frame_index, "timestamp_s": g.timestamp_s,
             "nodes": [_node_to_json(n) for n in g.nodes],
             "edges": [_edge_to_json(e) for e in g.edges]}
            for g in s.frames
        ],
        "intervals": [
            {"subject_id": i.subject_id, "object_id": i.object_id,
             "relation": i.rel.value, "a": i.a, "b": i.b, "c": i.c, "d": i.d}
            for i in s.intervals
        ],
    }


def _scene_from_json(d: dict) -> Scene:
    frames = [
        SceneGraph(g["frame_index"], g["timestamp_s"],
                   [_node_from_json(n) for n in g["nodes"]],
                   [_edge_from_json(e) for e in g["edges"]])
        for g in d["frames"]
    ]
    intervals = [
        RelationshipInterval(i["subject_id"], i["object_id"],
                             RelationshipType(i["relation"]),
                             i["a"], i["b"], i["c"], i["d"])
        for i in d["intervals"]
    ]
    return Scene(d["scene_id"], frames, intervals)


def _check_header(header: dict, kind: str, path) -> None:
    if header.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(
            f"{path}: unsupported schema_version {header.get('schema_version')!r}, "
            f"expected {SCHEMA_VERSION!r}")
    if header.get("kind") != kind:
        raise SchemaError(f"{path}: expected kind {kind!r}, got {header.get('kind')!r}")


def save_dataset(d: Dataset, path) -> None:
    """Write one scene per line after a schema header."""
    lines = [_dump({"schema_version": SCHEMA_VERSION, "kind": "road_scene_dataset",
                    "meta": d.meta})]
    lines += [_dump(_scene_to_json(s)) for s in d.scenes]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_dataset(path) -> Dataset:
    """Parse, rebuild, and validate every scene; reject malformed files."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SchemaError(f"{path}: empty file")
    header = json.loads(lines[0])
    _check_header(header, "road_scene_dataset", path)
    scenes = [_scene_from_json(json.loads(ln)) for ln in lines[1:]]
    problems = []
    for scene in scenes:
        for v in validate_scene(scene):
            problems.append(str(v))
    if problems:
        shown = "; ".join(problems[:5])
        raise ValidationError(f"{path}: invalid scenes: {shown}")
    return Dataset(scenes, header.get("meta", {}))


def split_dataset(d: Dataset, test_fraction: float) -> tuple[Dataset, Dataset]:
    """Deterministic split: the last ceil(fraction * N) scenes become the test set."""
    if not d.scenes:
        raise ValueError("empty dataset")
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    n = len(d.scenes)
    n_test = int(math.ceil(test_fraction * n - 1e-9))
    n_test = max(1, min(n_test, n))
    split = n - n_test
    name = d.meta.get("name", "dataset")
    train = Dataset(d.scenes[:split], {**d.meta, "name": f"{name}/train",
                                       "scene_count": split})
    test = Dataset(d.scenes[split:], {**d.meta, "name": f"{name}/test",
                                      "scene_count": n_test})
    return train, test


# --- prior tables ----------------------------------------------------------


def save_prior_table(pt: PriorTable, path) -> None:
    entries = []
    for (ci, cj), probs in sorted(pt.table.items(),
                                  key=lambda kv: (kv[0][0].value, kv[0][1].value)):
        entries.append({
            "subject_class": ci.value,
            "object_class": cj.value,
            "probs": probs.tolist(),
            "counts": pt.counts[(ci, cj)].tolist(),
        })
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "prior_table",
        "smoothing_alpha": pt.smoothing_alpha,
        "classes": [c.value for c in CLASS_ORDER],
        "types": [t.value for t in TYPE_ORDER],
        "entries": entries,
    }
    Path(path).write_text(_dump(payload) + "\n", encoding="utf-8")


def load_prior_table(path) -> PriorTable:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    _check_header(payload, "prior_table", path)
    if payload["types"] != [t.value for t in TYPE_ORDER]:
        raise SchemaError(f"{path}: relationship type order does not match")
    table = {}
    counts = {}
    for entry in payload["entries"]:
        key = (ObjectClass(entry["subject_class"]), ObjectClass(entry["object_class"]))
        table[key] = np.array(entry["probs"])
        counts[key] = np.array(entry["counts"])
    return PriorTable(table=table, counts=counts,
                      smoothing_alpha=payload["smoothing_alpha"])


# --- model parameters ------------------------------------------------------


def save_model(params: ModelParameters, path) -> None:
    """Named flat arrays with shape headers; loadable without this package."""
    cfg = params.config
    header = {
        "schema_version": SCHEMA_VERSION, "kind": "model_parameters",
        "config": {"hidden_dim": cfg.hidden_dim, "num_layers": cfg.num_layers,
                   "init_scale": cfg.init_scale, "seed": cfg.seed,
                   "node_feat_dim": cfg.node_feat_dim,
                   "edge_feat_dim": cfg.edge_feat_dim,
                   "num_classes": cfg.num_classes},
    }
    lines = [_dump(header)]
    for name, tensor in params.items():
        lines.append(_dump({"name": name, "shape": list(tensor.data.shape),
                            "data": tensor.data.reshape(-1).tolist()}))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path) -> ModelParameters:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines()
             if ln.strip()]
    if not lines:
        raise SchemaError(f"{path}: empty file")
    header = json.loads(lines[0])
    _check_header(header, "model_parameters", path)
    cfg = ModelConfig(**header["config"])
    expected = parameter_shapes(cfg)
    tensors = {}
    for ln in lines[1:]:
        entry = json.loads(ln)
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in expected or expected[name] != shape:
            raise SchemaError(f"{path}: unexpected parameter {name} with shape {shape}")
        tensors[name] = Tensor(np.array(entry["data"]).reshape(shape),
                               requires_grad=True)
    missing = set(expected) - set(tensors)
    if missing:
        raise SchemaError(f"{path}: missing parameters {sorted(missing)}")
    return ModelParameters(cfg, tensors)


# --- prediction dumps ------------------------------------------------------


def save_predictions(rows: Iterable[tuple[str, int, list[RelationshipEdge]]],
                     path) -> None:
    """Per frame: ranked predicted edges with confidences."""
    lines = [_dump({"schema_version": SCHEMA_VERSION, "kind": "predictions"})]
    for scene_id, frame_index, edges in rows:
        lines.append(_dump({"scene_id": scene_id, "frame_index": frame_index,
                            "edges": [_edge_to_json(e) for e in edges]}))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_predictions(path) -> list[tuple[str, int, list[RelationshipEdge]]]:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines()
             if ln.strip()]
    header = json.loads(lines[0])
    _check_header(header, "predictions", path)
    out = []
    for ln in lines[1:]:
        d = json.loads(ln)
        out.append((d["scene_id"], d["frame_index"],
                    [_edge_from_json(e) for e in d["edges"]]))
    return out
