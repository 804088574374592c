"""Recall@K, pairwise accuracy, confusion matrices, and degree statistics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .scene import RelationshipEdge, SceneGraph
from .taxonomy import RelationshipType, type_index

PairClass = tuple[frozenset, RelationshipType]


def _ranked(pred: Sequence[RelationshipEdge]) -> list[RelationshipEdge]:
    return sorted(pred, key=lambda e: (-e.confidence, e.subject_id, e.object_id,
                                       type_index(e.rel)))


def _gt_matches(gt: Sequence[RelationshipEdge]) -> set[PairClass]:
    return {(frozenset((e.subject_id, e.object_id)), e.rel) for e in gt
            if e.rel is not RelationshipType.NO_RELATION}


def recall_at_k(pred: Sequence[RelationshipEdge], gt: Sequence[RelationshipEdge],
                k: int) -> Optional[float]:
    """Fraction of ground-truth relations found in the top-k predictions.

    A hit requires the same unordered pair and the same class.  Frames with
    no ground truth return None and are skipped by dataset averages.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    wanted = _gt_matches(gt)
    if not wanted:
        return None
    top = _ranked(pred)[:k]
    found = {(frozenset((e.subject_id, e.object_id)), e.rel) for e in top}
    return len(wanted & found) / len(wanted)


def pairwise_accuracy(pred: Sequence[RelationshipEdge], gt: Sequence[RelationshipEdge]
                      ) -> tuple[Optional[float], dict[RelationshipType, tuple[int, int]]]:
    """Accuracy over pairs that carry a real ground-truth relation.

    Only the argmax prediction per pair matters; a pair with no prediction
    counts as NO_RELATION (a miss).  Also returns per-class (correct, support).
    """
    predicted_class: dict[frozenset, RelationshipType] = {}
    for e in pred:
        predicted_class.setdefault(frozenset((e.subject_id, e.object_id)), e.rel)
    per_class: dict[RelationshipType, tuple[int, int]] = {}
    correct = 0
    total = 0
    for e in gt:
        if e.rel is RelationshipType.NO_RELATION:
            continue
        hit = predicted_class.get(frozenset((e.subject_id, e.object_id))) is e.rel
        got, support = per_class.get(e.rel, (0, 0))
        per_class[e.rel] = (got + int(hit), support + 1)
        correct += int(hit)
        total += 1
    if total == 0:
        return None, per_class
    return correct / total, per_class


@dataclass
class ConfusionMatrix:
    """Row-normalised gt-vs-predicted rates with per-row support counts."""

    row_labels: list[str]
    col_labels: list[str]
    rates: np.ndarray
    support: np.ndarray

    def to_csv(self) -> str:
        lines = ["gt_class,support," + ",".join(self.col_labels)]
        for i, label in enumerate(self.row_labels):
            cells = ",".join(repr(float(v)) for v in self.rates[i])
            lines.append(f"{label},{int(self.support[i])},{cells}")
        return "\n".join(lines) + "\n"


def confusion_matrix(frame_pairs: Sequence[tuple[Sequence[RelationshipEdge],
                                                 Sequence[RelationshipEdge]]],
                     merge_map: Optional[Mapping[RelationshipType, str]] = None
                     ) -> ConfusionMatrix:
    """Confusion of predicted classes against ground truth over many frames.

    Rows are ground-truth classes with nonzero support; columns include
    NO_RELATION for pairs the predictor left unlabelled.  merge_map folds
    classes together (on both axes) before counting.
    """
    merge_map = merge_map or {}

    def label_of(rel: RelationshipType) -> str:
        return merge_map.get(rel, rel.value)

    counts: dict[str, dict[str, int]] = {}
    for pred, gt in frame_pairs:
        predicted_class: dict[frozenset, RelationshipType] = {}
        for e in pred:
            predicted_class.setdefault(frozenset((e.subject_id, e.object_id)), e.rel)
        for e in gt:
            if e.rel is RelationshipType.NO_RELATION:
                continue
            got = predicted_class.get(frozenset((e.subject_id, e.object_id)),
                                      RelationshipType.NO_RELATION)
            row = counts.setdefault(label_of(e.rel), {})
            row[label_of(got)] = row.get(label_of(got), 0) + 1

    row_labels = sorted(counts)
    col_order = [label_of(t) for t in RelationshipType]
    col_labels = sorted(set(col_order), key=col_order.index)
    rates = np.zeros((len(row_labels), len(col_labels)))
    support = np.zeros(len(row_labels))
    for i, row in enumerate(row_labels):
        total = sum(counts[row].values())
        support[i] = total
        for j, col in enumerate(col_labels):
            rates[i, j] = counts[row].get(col, 0) / total
    return ConfusionMatrix(row_labels, col_labels, rates, support)


@dataclass
class DegreeStats:
    avg_edges_per_frame: float
    avg_degree: float


def degree_stats(graphs: Iterable[SceneGraph]) -> DegreeStats:
    """Mean edge count per frame and mean of 2|E|/|V| over non-empty frames."""
    edge_counts = []
    degrees = []
    for g in graphs:
        edge_counts.append(len(g.edges))
        if g.nodes:
            degrees.append(2.0 * len(g.edges) / len(g.nodes))
    avg_edges = float(np.mean(edge_counts)) if edge_counts else 0.0
    avg_degree = float(np.mean(degrees)) if degrees else 0.0
    return DegreeStats(avg_edges, avg_degree)


@dataclass
class EvalReport:
    """Aggregate evaluation results in the shape the reports print."""

    r_at: dict[int, float]
    pairwise_accuracy: float
    per_class: dict[RelationshipType, tuple[int, int]]
    confusion: ConfusionMatrix
    gt_stats: DegreeStats
    pred_stats: DegreeStats
    frames_evaluated: int
    frames_skipped: int
    meta: dict = field(default_factory=dict)

    def to_text(self) -> str:
        label = ", ".join(f"{k}={v}" for k, v in sorted(self.meta.items()))
        ks = sorted(self.r_at)
        method = f"edge-gru ({label})" if label else "edge-gru"
        width = max(44, len(method) + 2)
        header = "method".ljust(width) + "".join(f"R@{k}".rjust(9) for k in ks) \
            + "pairwise".rjust(12)
        row = method.ljust(width) \
            + "".join(f"{self.r_at[k]:9.3f}" for k in ks) \
            + f"{self.pairwise_accuracy:12.3f}"
        lines = [
            header,
            row,
            "",
            "R@K is averaged per frame over frames with ground truth; "
            "pairwise accuracy pools all related pairs.",
            f"frames evaluated: {self.frames_evaluated} "
            f"(skipped {self.frames_skipped} without ground truth)",
            f"avg edges/frame: gt {self.gt_stats.avg_edges_per_frame:.2f}, "
            f"predicted {self.pred_stats.avg_edges_per_frame:.2f}",
            f"avg degree:      gt {self.gt_stats.avg_degree:.2f}, "
            f"predicted {self.pred_stats.avg_degree:.2f}",
            "",
            "per-class recall (correct/support):",
        ]
        for rel in sorted(self.per_class, key=lambda r: r.value):
            got, support = self.per_class[rel]
            lines.append(f"  {rel.value:28s} {got:5d}/{support:<5d} = {got / support:.3f}")
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "r_at": {str(k): v for k, v in self.r_at.items()},
            "pairwise_accuracy": self.pairwise_accuracy,
            "per_class": {rel.value: [got, support]
                          for rel, (got, support) in self.per_class.items()},
            "avg_edges_per_frame": {"gt": self.gt_stats.avg_edges_per_frame,
                                    "predicted": self.pred_stats.avg_edges_per_frame},
            "avg_degree": {"gt": self.gt_stats.avg_degree,
                           "predicted": self.pred_stats.avg_degree},
            "frames_evaluated": self.frames_evaluated,
            "frames_skipped": self.frames_skipped,
            "meta": self.meta,
        }


def evaluate_frames(pred_graphs: Sequence[SceneGraph], gt_graphs: Sequence[SceneGraph],
                    ks: Sequence[int] = (15, 25),
                    merge_map: Optional[Mapping[RelationshipType, str]] = None,
                    meta: Optional[dict] = None) -> EvalReport:
    """Frame-averaged R@K plus corpus pairwise accuracy and confusion."""
    if len(pred_graphs) != len(gt_graphs):
        raise ValueError("prediction/ground-truth frame counts differ")
    recall_sums = {k: 0.0 for k in ks}
    scored = 0
    correct = 0
    total = 0
    per_class: dict[RelationshipType, tuple[int, int]] = {}
    for pred, gt in zip(pred_graphs, gt_graphs):
        frame_recalls = {k: recall_at_k(pred.edges, gt.edges, k) for k in ks}
        if any(v is not None for v in frame_recalls.values()):
            scored += 1
            for k, v in frame_recalls.items():
                recall_sums[k] += v
        _, classes = pairwise_accuracy(pred.edges, gt.edges)
        for rel, (got, support) in classes.items():
            old_got, old_support = per_class.get(rel, (0, 0))
            per_class[rel] = (old_got + got, old_support + support)
            correct += got
            total += support
    if total == 0:
        raise ValueError("no ground-truth related pairs to evaluate")
    confusion = confusion_matrix([(p.edges, g.edges) for p, g in zip(pred_graphs, gt_graphs)],
                                 merge_map)
    return EvalReport(
        r_at={k: (recall_sums[k] / scored if scored else 0.0) for k in ks},
        pairwise_accuracy=correct / total,
        per_class=per_class,
        confusion=confusion,
        gt_stats=degree_stats(gt_graphs),
        pred_stats=degree_stats(pred_graphs),
        frames_evaluated=scored,
        frames_skipped=len(gt_graphs) - scored,
        meta=meta or {},
    )
