"""Dense candidate graph over objects and its dual, where edges become nodes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .priors import PriorTable
from .scene import ObjectNode, SceneGraph

EDGE_FEATURE_DIM = 4 + 22  # (dx, dy, dvx, dvy) + prior vector


@dataclass
class CandidateEdge:
    """One unordered object pair, in canonical (lower id, higher id) order."""

    pair_index: int
    subject_id: int
    object_id: int
    feat: np.ndarray  # (26,)

    def distance(self) -> float:
        return math.hypot(self.feat[0], self.feat[1])


@dataclass
class DualGraph:
    """Bipartite view: object nodes plus one node per candidate edge.

    `incidence` maps each edge node to the positions of its two endpoints in
    `object_nodes`; `edge_adjacency` links edge nodes sharing an endpoint.
    """

    object_nodes: list[ObjectNode] = field(default_factory=list)
    edge_nodes: list[CandidateEdge] = field(default_factory=list)
    incidence: dict[int, tuple[int, int]] = field(default_factory=dict)
    edge_adjacency: dict[int, list[int]] = field(default_factory=dict)

    def n_objects(self) -> int:
        return len(self.object_nodes)

    def n_edges(self) -> int:
        return len(self.edge_nodes)


def _link(edges: list[CandidateEdge], incidence: dict[int, tuple[int, int]]
          ) -> dict[int, list[int]]:
    touching: dict[int, list[int]] = {}
    for e in edges:
        for pos in incidence[e.pair_index]:
            touching.setdefault(pos, []).append(e.pair_index)
    adjacency: dict[int, list[int]] = {}
    for e in edges:
        a, b = incidence[e.pair_index]
        seen = set(touching.get(a, ())) | set(touching.get(b, ()))
        seen.discard(e.pair_index)
        adjacency[e.pair_index] = sorted(seen)
    return adjacency


def build_dense(g: SceneGraph, pt: PriorTable) -> DualGraph:
    """One candidate edge per unordered node pair: n(n-1)/2 edge nodes.

    Features are position/velocity differences taken in canonical id order,
    concatenated with the prior vector for the ordered class pair.
    """
    nodes = sorted(g.nodes, key=lambda n: n.id)
    position = {n.id: k for k, n in enumerate(nodes)}
    edges: list[CandidateEdge] = []
    incidence: dict[int, tuple[int, int]] = {}
    for ni, nj in combinations(nodes, 2):
        feat = np.empty(EDGE_FEATURE_DIM)
        feat[0] = nj.x - ni.x
        feat[1] = nj.y - ni.y
        feat[2] = nj.vx - ni.vx
        feat[3] = nj.vy - ni.vy
        feat[4:] = pt.vector(ni.obj_class, nj.obj_class)
        idx = len(edges)
        edges.append(CandidateEdge(idx, ni.id, nj.id, feat))
        incidence[idx] = (position[ni.id], position[nj.id])
    return DualGraph(nodes, edges, incidence, _link(edges, incidence))


def prune_candidates(dg: DualGraph, max_dist: float = 60.0) -> DualGraph:
    """Drop candidate pairs farther apart than max_dist; rebuild adjacency.

    Pruned pairs are treated as NO_RELATION with confidence 1 downstream.
    """
    if max_dist <= 0:
        raise ValueError("max_dist must be positive")
    position = {n.id: k for k, n in enumerate(dg.object_nodes)}
    kept: list[CandidateEdge] = []
    incidence: dict[int, tuple[int, int]] = {}
    for e in dg.edge_nodes:
        if e.distance() > max_dist:
            continue
        idx = len(kept)
        kept.append(CandidateEdge(idx, e.subject_id, e.object_id, e.feat))
        incidence[idx] = (position[e.subject_id], position[e.object_id])
    return DualGraph(dg.object_nodes, kept, incidence, _link(kept, incidence))
