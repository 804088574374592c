"""Semantic relationship prediction between road objects on dual scene graphs."""

from .taxonomy import (
    ObjectClass,
    RelationshipType,
    valid_relationships,
)
from .scene import (
    ObjectNode,
    RelationshipEdge,
    RelationshipInterval,
    Scene,
    SceneGraph,
    collapse_groups,
    validate_scene,
)
from .priors import PriorTable, compute_priors, prior_vector
from .dualgraph import DualGraph, build_dense, prune_candidates
from .network import ModelConfig, ModelParameters, forward, init_parameters, predict
from .training import (
    TrainConfig,
    slope_weight_continuous,
    slope_weight_paper,
    train,
)
from .labeling import RuleThresholds, oracle_label
from .synth import GenConfig, generate_dataset, generate_scene, jitter_annotations
from .metrics import (
    EvalReport,
    confusion_matrix,
    degree_stats,
    evaluate_frames,
    pairwise_accuracy,
    recall_at_k,
)
from .dataset import Dataset, load_dataset, save_dataset, split_dataset
from .estimator import RelationshipPredictor

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DualGraph",
    "EvalReport",
    "GenConfig",
    "ModelConfig",
    "ModelParameters",
    "ObjectClass",
    "ObjectNode",
    "PriorTable",
    "RelationshipEdge",
    "RelationshipInterval",
    "RelationshipPredictor",
    "RelationshipType",
    "RuleThresholds",
    "Scene",
    "SceneGraph",
    "TrainConfig",
    "build_dense",
    "collapse_groups",
    "compute_priors",
    "confusion_matrix",
    "degree_stats",
    "evaluate_frames",
    "forward",
    "generate_dataset",
    "generate_scene",
    "init_parameters",
    "jitter_annotations",
    "load_dataset",
    "oracle_label",
    "pairwise_accuracy",
    "predict",
    "prior_vector",
    "prune_candidates",
    "recall_at_k",
    "save_dataset",
    "slope_weight_continuous",
    "slope_weight_paper",
    "split_dataset",
    "train",
    "valid_relationships",
    "validate_scene",
]
