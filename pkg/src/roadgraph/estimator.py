"""Scikit-learn style estimator wrapping the full train/predict pipeline."""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .metrics import evaluate_frames
from .network import ModelConfig, predict
from .priors import compute_priors
from .scene import Scene, SceneGraph, collapse_groups, validate_scene
from .training import TrainConfig, train


def check_scenes(scenes, require_intervals: bool = False) -> list[Scene]:
    """Validation helper: scenes must be a non-empty list of valid Scene objects."""
    if isinstance(scenes, Scene):
        scenes = [scenes]
    scenes = list(scenes)
    if not scenes:
        raise ValueError("expected at least one scene")
    for s in scenes:
        if not isinstance(s, Scene):
            raise TypeError(f"expected Scene, got {type(s).__name__}")
        problems = validate_scene(s)
        if problems:
            raise ValueError(f"invalid scene {s.scene_id}: {problems[0]}")
        if require_intervals and not s.intervals:
            raise ValueError(f"scene {s.scene_id} has no relationship intervals")
    return scenes


class RelationshipPredictor(BaseEstimator):
    """Predicts typed semantic relationships between road objects per frame.

    fit() learns co-occurrence priors and the message-passing network from
    labelled scenes; predict() emits a relationship-annotated scene graph for
    each input frame.  Follows the scikit-learn estimator protocol
    (constructor stores hyperparameters verbatim, fitted state carries a
    trailing underscore), so clone() and get_params()/set_params() work.
    """

    def __init__(self, hidden_dim: int = 64, num_layers: int = 4,
                 epochs: int = 10, learning_rate: float = 1e-3,
                 optimizer: str = "adam", slope_penalty: str = "continuous",
                 no_relation_downweight: float = 0.1, prior_alpha: float = 1.0,
                 max_pair_distance: float = 60.0, init_scale: float = 1.0,
                 validation_fraction: float = 0.1, seed: int = 0):
        self.hidden_dim = hidden_dim
        self.num_layers = num_layers
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.slope_penalty = slope_penalty
        self.no_relation_downweight = no_relation_downweight
        self.prior_alpha = prior_alpha
        self.max_pair_distance = max_pair_distance
        self.init_scale = init_scale
        self.validation_fraction = validation_fraction
        self.seed = seed

    def _model_config(self) -> ModelConfig:
        return ModelConfig(hidden_dim=self.hidden_dim, num_layers=self.num_layers,
                           init_scale=self.init_scale, seed=self.seed)

    def _train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, learning_rate=self.learning_rate,
                           optimizer=self.optimizer,
                           no_relation_downweight=self.no_relation_downweight,
                           slope_penalty=self.slope_penalty, seed=self.seed,
                           validation_fraction=self.validation_fraction,
                           max_pair_distance=self.max_pair_distance)

    def fit(self, X, y=None) -> "RelationshipPredictor":
        """Learn priors and network weights from labelled scenes."""
        scenes = check_scenes(X)
        self.priors_ = compute_priors(scenes, alpha=self.prior_alpha)
        self.params_, self.history_ = train(scenes, self.priors_,
                                            self._model_config(),
                                            self._train_config())
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "params_"):
            raise NotFittedError(
                "This RelationshipPredictor instance is not fitted yet; "
                "call fit() before predict().")

    def predict_frame(self, frame: SceneGraph) -> SceneGraph:
        self._check_fitted()
        return predict(frame, self.priors_, self.params_, self._model_config(),
                       max_dist=self.max_pair_distance)

    def predict(self, X) -> list[SceneGraph]:
        """Predicted scene graphs for frames, a scene, or a list of scenes."""
        self._check_fitted()
        if isinstance(X, SceneGraph):
            return [self.predict_frame(X)]
        frames = []
        for item in X:
            if isinstance(item, Scene):
                frames.extend(item.frames)
            else:
                frames.append(item)
        return [self.predict_frame(f) for f in frames]

    def score(self, X, y=None) -> float:
        """Mean pairwise accuracy over the scenes' frames."""
        scenes = check_scenes(X)
        frames = [f for s in scenes for f in s.frames]
        predicted = [self.predict_frame(f) for f in frames]
        truth = [collapse_groups(f) for f in frames]
        report = evaluate_frames(predicted, truth)
        return report.pairwise_accuracy
