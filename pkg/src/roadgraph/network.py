"""Relationship prediction network on the dual graph.

Object and candidate-edge features pass through linear encoders; each edge
node then refines its hidden state through T rounds of gated message pooling
followed by a GRU update with one parameter set shared across all edge nodes
and rounds.  A linear head scores the 22 relationship classes per pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .dualgraph import DualGraph, EDGE_FEATURE_DIM, build_dense, prune_candidates
from .priors import PriorTable
from .scene import ObjectNode, RelationshipEdge, SceneGraph, collapse_groups
from .taxonomy import (
    NUM_RELATIONSHIP_TYPES,
    NO_RELATION_INDEX,
    RELATION_ENDPOINTS,
    RelationshipType,
    TYPE_ORDER,
    type_index,
)

NODE_FEATURE_DIM = 13  # one-hot(4) + x, y, vx, vy, ax, ay, yaw, pitch, roll
MASK_BIAS = -1e9  # additive logit mask; exp underflows to exactly 0


@dataclass
class ModelConfig:
    hidden_dim: int = 64
    num_layers: int = 4
    init_scale: float = 1.0
    seed: int = 0
    node_feat_dim: int = NODE_FEATURE_DIM
    edge_feat_dim: int = EDGE_FEATURE_DIM
    num_classes: int = NUM_RELATIONSHIP_TYPES

    def validate(self) -> None:
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if self.hidden_dim < 4:
            raise ValueError("hidden_dim must be >= 4")


def parameter_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    h = cfg.hidden_dim
    return {
        "W_v": (h, cfg.node_feat_dim),
        "b_v": (h,),
        "W_e": (h, cfg.edge_feat_dim),
        "b_e": (h,),
        "W_p1": (h, h),
        "W_p2": (h, h),
        "W_p3": (h, h),
        "w_g": (3, 3 * h),
        "W_xr": (h, h),
        "W_hr": (h, h),
        "W_xz": (h, h),
        "W_hz": (h, h),
        "W_xh": (h, h),
        "W_hh": (h, h),
        "W_l": (cfg.num_classes, h),
        "b_l": (cfg.num_classes,),
    }


@dataclass
class ModelParameters:
    """All learnable weights, stored as (out, in) matrices and bias vectors."""

    config: ModelConfig
    tensors: dict[str, Tensor] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def items(self) -> list[tuple[str, Tensor]]:
        return sorted(self.tensors.items())

    def values(self) -> list[Tensor]:
        return [t for _, t in self.items()]

    def zero_grads(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()


def init_parameters(cfg: ModelConfig) -> ModelParameters:
    """Uniform(-s, s) weights with s = init_scale / sqrt(fan_in); zero biases."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    tensors: dict[str, Tensor] = {}
    for name, shape in sorted(parameter_shapes(cfg).items()):
        if len(shape) == 1:
            data = np.zeros(shape)
        else:
            s = cfg.init_scale / np.sqrt(shape[1])
            data = rng.uniform(-s, s, size=shape)
        tensors[name] = Tensor(data, requires_grad=True)
    return ModelParameters(cfg, tensors)


def node_feature_vector(n: ObjectNode) -> np.ndarray:
    return np.array(n.one_hot() + n.kinematics())


@dataclass
class GraphArrays:
    """Constant matrices a dual graph contributes to one forward pass."""

    node_feats: np.ndarray      # (N, 13)
    edge_feats: np.ndarray      # (E, 26)
    sel_subject: np.ndarray     # (E, N) picks the lower-id endpoint
    sel_object: np.ndarray      # (E, N) picks the higher-id endpoint
    adjacency_mean: np.ndarray  # (E, E) row-averaged edge adjacency
    mask_bias: np.ndarray       # (E, 22) 0 on valid classes, MASK_BIAS otherwise
    pairs: list[tuple[int, int]]


def graph_arrays(dual: DualGraph) -> GraphArrays:
    n, e = dual.n_objects(), dual.n_edges()
    node_feats = np.zeros((max(n, 1), NODE_FEATURE_DIM))
    for k, node in enumerate(dual.object_nodes):
        node_feats[k] = node_feature_vector(node)
    edge_feats = np.zeros((e, EDGE_FEATURE_DIM))
    sel_s = np.zeros((e, max(n, 1)))
    sel_o = np.zeros((e, max(n, 1)))
    adj = np.zeros((e, e))
    mask = np.zeros((e, NUM_RELATIONSHIP_TYPES))
    pairs = []
    for edge in dual.edge_nodes:
        k = edge.pair_index
        edge_feats[k] = edge.feat
        si, oi = dual.incidence[k]
        sel_s[k, si] = 1.0
        sel_o[k, oi] = 1.0
        neighbours = dual.edge_adjacency.get(k, [])
        if neighbours:
            adj[k, neighbours] = 1.0 / len(neighbours)
        mask[k] = np.where(edge.feat[4:] > 0.0, 0.0, MASK_BIAS)
        pairs.append((edge.subject_id, edge.object_id))
    return GraphArrays(node_feats, edge_feats, sel_s, sel_o, adj, mask, pairs)


def _affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return ad.add(ad.matmul(x, ad.transpose(w)), b)


def gru_step(f_t: Tensor, h_prev: Tensor, params: ModelParameters) -> Tensor:
    """One gated update of every edge hidden state from its pooled message."""
    r = ad.sigmoid(ad.add(ad.matmul(f_t, ad.transpose(params["W_xr"])),
                          ad.matmul(h_prev, ad.transpose(params["W_hr"]))))
    z = ad.sigmoid(ad.add(ad.matmul(f_t, ad.transpose(params["W_xz"])),
                          ad.matmul(h_prev, ad.transpose(params["W_hz"]))))
    candidate = ad.tanh(ad.add(ad.matmul(f_t, ad.transpose(params["W_xh"])),
                               ad.matmul(ad.mul(r, h_prev), ad.transpose(params["W_hh"]))))
    ones = Tensor(np.ones_like(z.data))
    return ad.add(ad.mul(z, h_prev), ad.mul(ad.sub(ones, z), candidate))


def pool_messages(phi: Tensor, hidden: Tensor, arrays: GraphArrays,
                  params: ModelParameters) -> Tensor:
    """Gated blend of subject, object, and mean-neighbour-edge messages."""
    m1 = ad.matmul(ad.matmul(Tensor(arrays.sel_subject), phi), ad.transpose(params["W_p1"]))
    m2 = ad.matmul(ad.matmul(Tensor(arrays.sel_object), phi), ad.transpose(params["W_p2"]))
    m3 = ad.matmul(ad.matmul(Tensor(arrays.adjacency_mean), hidden),
                   ad.transpose(params["W_p3"]))
    gate_in = ad.concat([m1, m2, m3], axis=1)
    alpha = ad.softmax_rows(ad.matmul(gate_in, ad.transpose(params["w_g"])))
    ones_row = Tensor(np.ones((1, hidden.data.shape[1])))
    blended = None
    for column, message in enumerate((m1, m2, m3)):
        weight = ad.matmul(ad.slice_axis(alpha, 1, column, column + 1), ones_row)
        term = ad.mul(weight, message)
        blended = term if blended is None else ad.add(blended, term)
    return blended


def forward_from_arrays(arrays: GraphArrays, params: ModelParameters,
                        cfg: ModelConfig) -> Tensor:
    """Raw per-pair class logits (E, 22); requires an active tape."""
    phi = _affine(Tensor(arrays.node_feats), params["W_v"], params["b_v"])
    hidden = _affine(Tensor(arrays.edge_feats), params["W_e"], params["b_e"])
    for _ in range(cfg.num_layers):
        pooled = pool_messages(phi, hidden, arrays, params)
        hidden = gru_step(pooled, hidden, params)
    return _affine(hidden, params["W_l"], params["b_l"])


def forward(dual: DualGraph, params: ModelParameters, cfg: ModelConfig) -> np.ndarray:
    """Raw logits as a plain array; empty graphs give an empty result."""
    if dual.n_edges() == 0:
        return np.zeros((0, NUM_RELATIONSHIP_TYPES))
    with Tape():
        return forward_from_arrays(graph_arrays(dual), params, cfg).data.copy()


def masked_probabilities(logits: np.ndarray, mask_bias: np.ndarray) -> np.ndarray:
    """Softmax of masked logits: invalid classes get exactly zero mass."""
    z = logits + mask_bias
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _emit_edge(pair: tuple[int, int], rel: RelationshipType, confidence: float,
               class_of: dict[int, object]) -> RelationshipEdge:
    i, j = pair
    subj_class, _ = RELATION_ENDPOINTS[rel]
    if class_of[i] is subj_class:
        s, o = i, j
    elif class_of[j] is subj_class:
        s, o = j, i
    else:  # cannot happen for masked predictions
        s, o = i, j
    return RelationshipEdge(s, o, rel, confidence)


def predict(g: SceneGraph, pt: PriorTable, params: ModelParameters, cfg: ModelConfig,
            threshold: float | None = None, max_dist: float = 60.0) -> SceneGraph:
    """Predicted scene graph for one frame.

    Collapses groups, builds and prunes the dual graph, and keeps the argmax
    class per surviving pair with its masked softmax probability as the
    confidence.  NO_RELATION predictions (including pruned pairs) are omitted.
    Edges are returned ranked by confidence, ties broken deterministically.
    """
    collapsed = collapse_groups(g)
    dual = prune_candidates(build_dense(collapsed, pt), max_dist=max_dist)
    class_of = {n.id: n.obj_class for n in collapsed.nodes}
    edges: list[RelationshipEdge] = []
    if dual.n_edges() > 0:
        arrays = graph_arrays(dual)
        with Tape():
            logits = forward_from_arrays(arrays, params, cfg).data
        probs = masked_probabilities(logits, arrays.mask_bias)
        for k, pair in enumerate(arrays.pairs):
            best = int(np.argmax(probs[k]))
            if best == NO_RELATION_INDEX:
                continue
            confidence = float(probs[k, best])
            if threshold is not None and confidence < threshold:
                continue
            edges.append(_emit_edge(pair, TYPE_ORDER[best], confidence, class_of))
    edges.sort(key=lambda e: (-e.confidence, e.subject_id, e.object_id, type_index(e.rel)))
    return replace(collapsed, edges=edges)
