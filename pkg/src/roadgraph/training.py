"""Slope-weighted loss, optimizers, and the per-frame training loop."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import NumericError, Tape, Tensor
from .dualgraph import build_dense, prune_candidates
from .network import (
    GraphArrays,
    ModelConfig,
    ModelParameters,
    forward_from_arrays,
    graph_arrays,
    init_parameters,
    masked_probabilities,
)
from .priors import PriorTable
from .scene import RelationshipInterval, Scene, collapse_groups_with_mapping
from .taxonomy import NO_RELATION_INDEX, type_index

SLOPE_MODES = ("off", "paper", "continuous")


class TrainingDivergedError(ArithmeticError):
    """Training aborted because the loss stopped being finite."""


@dataclass
class TrainConfig:
    epochs: int = 10
    learning_rate: float = 1e-3
    optimizer: str = "adam"  # "adam" | "sgd_momentum"
    momentum: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    no_relation_downweight: float = 0.1
    slope_penalty: str = "continuous"  # "off" | "paper" | "continuous"
    seed: int = 0
    validation_fraction: float = 0.1
    max_pair_distance: float = 60.0

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.slope_penalty not in SLOPE_MODES:
            raise ValueError(f"slope_penalty must be one of {SLOPE_MODES}")
        if self.optimizer not in ("adam", "sgd_momentum"):
            raise ValueError("optimizer must be 'adam' or 'sgd_momentum'")


def _check_breakpoints(a: float, b: float, c: float, d: float) -> None:
    if not a <= b <= c <= d:
        raise ValueError(f"breakpoints must satisfy a <= b <= c <= d, got {(a, b, c, d)}")


def slope_weight_paper(x: float, a: float, b: float, c: float, d: float) -> float:
    """Piecewise loss weight with the 2/(d+c-a-b) ramp prefactor.

    Zero outside [a, d], one on the plateau [b, c); degenerate ramps (b == a
    or d == c) are empty, so no division by zero occurs.
    """
    _check_breakpoints(a, b, c, d)
    if x < a or x > d:
        return 0.0
    if b <= x < c:
        return 1.0
    if x < b:  # implies b > a
        return 2.0 / (d + c - a - b) * (x - a) / (b - a)
    if c < d:
        return 2.0 / (d + c - a - b) * (d - x) / (d - c)
    return 0.0  # degenerate end point x == c == d


def slope_weight_continuous(x: float, a: float, b: float, c: float, d: float) -> float:
    """Continuity repair of the piecewise weight: ramps run 0 -> 1 -> 0.

    Equals slope_weight_paper whenever d + c - a - b == 2.
    """
    _check_breakpoints(a, b, c, d)
    if x < a or x > d:
        return 0.0
    if b <= x < c:
        return 1.0
    if x < b:
        return (x - a) / (b - a)
    if c < d:
        return (d - x) / (d - c)
    return 0.0


def _pair_weight(itv: RelationshipInterval, frame: float, mode: str) -> float:
    if mode == "off":
        return 1.0
    fn = slope_weight_paper if mode == "paper" else slope_weight_continuous
    return fn(frame, itv.a, itv.b, itv.c, itv.d)


def _remap_intervals(intervals: list[RelationshipInterval],
                     mapping: dict[int, int]) -> list[RelationshipInterval]:
    out = []
    for itv in intervals:
        s = mapping.get(itv.subject_id, itv.subject_id)
        o = mapping.get(itv.object_id, itv.object_id)
        if s == o:
            continue  # interval internal to a collapsed group
        out.append(RelationshipInterval(s, o, itv.rel, itv.a, itv.b, itv.c, itv.d))
    return out


@dataclass
class FramePack:
    """Everything training needs for one frame, precomputed once."""

    arrays: GraphArrays
    targets: np.ndarray  # (E,) class indices
    weights: np.ndarray  # (E,) loss weights


def build_frame_pack(frame, intervals: list[RelationshipInterval], pt: PriorTable,
                     slope_mode: str, no_relation_downweight: float,
                     max_dist: float = 60.0) -> Optional[FramePack]:
    """Candidate arrays plus per-pair targets/weights; None if no candidates."""
    collapsed, mapping = collapse_groups_with_mapping(frame)
    dual = prune_candidates(build_dense(collapsed, pt), max_dist=max_dist)
    if dual.n_edges() == 0:
        return None
    remapped = _remap_intervals(intervals, mapping)
    by_pair: dict[frozenset, list[RelationshipInterval]] = {}
    for itv in remapped:
        by_pair.setdefault(itv.pair(), []).append(itv)

    arrays = graph_arrays(dual)
    x = float(frame.frame_index)
    targets = np.full(len(arrays.pairs), NO_RELATION_INDEX, dtype=np.int64)
    weights = np.full(len(arrays.pairs), no_relation_downweight)
    for k, (i, j) in enumerate(arrays.pairs):
        best_w = -1.0
        best_rel = None
        for itv in by_pair.get(frozenset((i, j)), ()):
            if not itv.covers(x):
                continue
            w = _pair_weight(itv, x, slope_mode)
            if w > best_w:
                best_w, best_rel = w, itv.rel
        if best_rel is not None:
            targets[k] = type_index(best_rel)
            weights[k] = best_w
    return FramePack(arrays, targets, weights)


def frame_loss_from_pack(pack: FramePack, params: ModelParameters,
                         cfg: ModelConfig) -> Tensor:
    """Weight-normalised cross entropy of the masked logits for one frame."""
    logits = forward_from_arrays(pack.arrays, params, cfg)
    masked = ad.add(logits, Tensor(pack.arrays.mask_bias))
    total_weight = float(pack.weights.sum())
    if total_weight <= 0.0:
        return ad.scale(ad.weighted_softmax_cross_entropy(
            masked, pack.targets, np.zeros_like(pack.weights)), 0.0)
    summed = ad.weighted_softmax_cross_entropy(masked, pack.targets, pack.weights)
    return ad.scale(summed, 1.0 / total_weight)


class AdamOptimizer:
    def __init__(self, params: ModelParameters, cfg: TrainConfig):
        self.lr = cfg.learning_rate
        self.beta1, self.beta2, self.eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
        self.step_count = 0
        self.m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self, params: ModelParameters) -> None:
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for name, t in params.items():
            g = t.grad
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            t.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class SgdMomentumOptimizer:
    def __init__(self, params: ModelParameters, cfg: TrainConfig):
        self.lr = cfg.learning_rate
        self.momentum = cfg.momentum
        self.velocity = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self, params: ModelParameters) -> None:
        for name, t in params.items():
            v = self.velocity[name]
            v *= self.momentum
            v += t.grad
            t.data -= self.lr * v


def make_optimizer(params: ModelParameters, cfg: TrainConfig):
    if cfg.optimizer == "adam":
        return AdamOptimizer(params, cfg)
    return SgdMomentumOptimizer(params, cfg)


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    val_pairwise_accuracy: float


@dataclass
class TrainingHistory:
    epochs: list[EpochStats] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["epoch,mean_loss,val_pairwise_accuracy"]
        for e in self.epochs:
            lines.append(f"{e.epoch},{e.mean_loss!r},{e.val_pairwise_accuracy!r}")
        return "\n".join(lines) + "\n"


def _validation_accuracy(packs: list[FramePack], params: ModelParameters,
                         cfg: ModelConfig) -> float:
    """Argmax accuracy over pairs whose target is a real relation."""
    correct = 0
    total = 0
    for pack in packs:
        related = pack.targets != NO_RELATION_INDEX
        if not related.any():
            continue
        with Tape():
            logits = forward_from_arrays(pack.arrays, params, cfg).data
        pred = masked_probabilities(logits, pack.arrays.mask_bias).argmax(axis=1)
        correct += int((pred[related] == pack.targets[related]).sum())
        total += int(related.sum())
    return correct / total if total else 0.0


def _scene_packs(scene: Scene, pt: PriorTable, tcfg: TrainConfig) -> list[FramePack]:
    packs = []
    for frame in scene.frames:
        pack = build_frame_pack(frame, scene.intervals, pt, tcfg.slope_penalty,
                                tcfg.no_relation_downweight, tcfg.max_pair_distance)
        if pack is not None:
            packs.append(pack)
    return packs


def train(train_scenes: list[Scene], pt: PriorTable, mcfg: ModelConfig,
          tcfg: TrainConfig) -> tuple[ModelParameters, TrainingHistory]:
    """Per-frame gradient steps over shuffled scenes; deterministic given seeds.

    The last `validation_fraction` of the scenes is held out and scored with
    pairwise accuracy after every epoch.
    """
    tcfg.validate()
    mcfg.validate()
    if not train_scenes:
        raise ValueError("empty dataset")

    n_val = int(np.ceil(tcfg.validation_fraction * len(train_scenes) - 1e-9))
    n_val = min(n_val, len(train_scenes) - 1)
    core = train_scenes[:len(train_scenes) - n_val]
    held_out = train_scenes[len(train_scenes) - n_val:]

    scene_packs = [_scene_packs(s, pt, tcfg) for s in core]
    val_packs = [p for s in held_out for p in _scene_packs(s, pt, tcfg)]

    params = init_parameters(mcfg)
    optimizer = make_optimizer(params, tcfg)
    shuffle_rng = np.random.default_rng(tcfg.seed)
    history = TrainingHistory()

    for epoch in range(tcfg.epochs):
        order = shuffle_rng.permutation(len(scene_packs))
        losses = []
        for scene_idx in order:
            for pack in scene_packs[scene_idx]:
                params.zero_grads()
                try:
                    with Tape() as tape:
                        loss = frame_loss_from_pack(pack, params, mcfg)
                        tape.backward(loss)
                    loss_value = loss.item()
                except NumericError as exc:
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch}: {exc}") from exc
                if not np.isfinite(loss_value):
                    raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
                optimizer.step(params)
                losses.append(loss_value)
        mean_loss = float(np.mean(losses)) if losses else 0.0
        val_acc = _validation_accuracy(val_packs, params, mcfg)
        history.epochs.append(EpochStats(epoch, mean_loss, val_acc))
    return params, history
