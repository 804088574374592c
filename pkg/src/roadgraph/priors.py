"""Relationship co-occurrence statistics conditioned on ordered class pairs."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .scene import Scene
from .taxonomy import (
    CLASS_ORDER,
    NUM_RELATIONSHIP_TYPES,
    NO_RELATION_INDEX,
    ObjectClass,
    type_index,
    valid_relationships,
)

PairKey = tuple[ObjectClass, ObjectClass]


def _valid_mask(ci: ObjectClass, cj: ObjectClass) -> np.ndarray:
    mask = np.zeros(NUM_RELATIONSHIP_TYPES, dtype=bool)
    for rel in valid_relationships(ci, cj):
        mask[type_index(rel)] = True
    return mask


@dataclass
class PriorTable:
    """P(relationship | class_i, class_j) over all ordered class pairs.

    Types that are impossible for a class pair carry probability exactly 0;
    Laplace smoothing is restricted to the valid types.
    """

    table: dict[PairKey, np.ndarray] = field(default_factory=dict)
    counts: dict[PairKey, np.ndarray] = field(default_factory=dict)
    smoothing_alpha: float = 1.0

    def vector(self, ci: ObjectClass, cj: ObjectClass) -> np.ndarray:
        return self.table[(ci, cj)]

    def valid_mask(self, ci: ObjectClass, cj: ObjectClass) -> np.ndarray:
        return self.table[(ci, cj)] > 0.0

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PriorTable):
            return NotImplemented
        if self.smoothing_alpha != other.smoothing_alpha:
            return False
        if set(self.table) != set(other.table) or set(self.counts) != set(other.counts):
            return False
        return all(np.array_equal(self.table[k], other.table[k]) for k in self.table) and \
            all(np.array_equal(self.counts[k], other.counts[k]) for k in self.counts)


def prior_vector(pt: PriorTable, ci: ObjectClass, cj: ObjectClass) -> np.ndarray:
    """Stored probability vector for the ordered class pair."""
    return pt.vector(ci, cj)


def uniform_priors(alpha: float = 1.0) -> PriorTable:
    """Smoothing-only table: uniform over the valid types of each class pair."""
    if alpha <= 0:
        raise ValueError("alpha must be positive for a uniform table")
    counts = {(a, b): np.zeros(NUM_RELATIONSHIP_TYPES)
              for a in CLASS_ORDER for b in CLASS_ORDER}
    return PriorTable(table=_normalise(counts, alpha), counts=counts,
                      smoothing_alpha=alpha)


def _normalise(counts: dict[PairKey, np.ndarray], alpha: float) -> dict[PairKey, np.ndarray]:
    table: dict[PairKey, np.ndarray] = {}
    for key, vec in counts.items():
        mask = _valid_mask(*key)
        total = vec[mask].sum() + alpha * mask.sum()
        if total <= 0.0:
            raise ValueError(
                f"zero support with alpha=0 for class pair ({key[0].value}, {key[1].value})")
        probs = np.zeros(NUM_RELATIONSHIP_TYPES)
        probs[mask] = (vec[mask] + alpha) / total
        table[key] = probs
    return table


def compute_priors(train, alpha: float = 1.0) -> PriorTable:
    """Count relationship occurrence per candidate pair-frame over a dataset.

    A pair-frame with an active labelled interval contributes that type; a
    co-present pair without one contributes NO_RELATION.  Class pairs are
    keyed in canonical node-id order (lower id first), matching how candidate
    edges are built.  Accepts a Dataset or a plain list of scenes.
    """
    scenes: list[Scene] = getattr(train, "scenes", train)
    if not scenes:
        raise ValueError("empty dataset")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    counts: dict[PairKey, np.ndarray] = {
        (ca, cb): np.zeros(NUM_RELATIONSHIP_TYPES)
        for ca in CLASS_ORDER for cb in CLASS_ORDER
    }
    for scene in scenes:
        active_by_pair: dict[frozenset, list] = {}
        for itv in scene.intervals:
            active_by_pair.setdefault(itv.pair(), []).append(itv)
        for g in scene.frames:
            nodes = sorted(g.nodes, key=lambda n: n.id)
            for ni, nj in combinations(nodes, 2):
                idx = NO_RELATION_INDEX
                for itv in active_by_pair.get(frozenset((ni.id, nj.id)), ()):
                    if itv.active_at(g.frame_index):
                        idx = type_index(itv.rel)
                        break
                counts[(ni.obj_class, nj.obj_class)][idx] += 1.0
    return PriorTable(table=_normalise(counts, alpha), counts=counts, smoothing_alpha=alpha)
