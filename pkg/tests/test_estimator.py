import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from roadgraph.estimator import RelationshipPredictor, check_scenes
from roadgraph.scene import SceneGraph
from roadgraph.synth import GenConfig, generate_dataset


@pytest.fixture(scope="module")
def tiny_dataset():
    return generate_dataset(GenConfig(n_scenes=8, seed=20))


@pytest.fixture(scope="module")
def fitted(tiny_dataset):
    est = RelationshipPredictor(hidden_dim=12, num_layers=2, epochs=3, seed=1)
    return est.fit(tiny_dataset.scenes)


def test_get_params_set_params_round_trip():
    est = RelationshipPredictor(hidden_dim=48, epochs=7)
    params = est.get_params()
    assert params["hidden_dim"] == 48
    est.set_params(hidden_dim=24)
    assert est.hidden_dim == 24


def test_clone_produces_unfitted_copy(fitted):
    fresh = clone(fitted)
    assert fresh.get_params() == fitted.get_params()
    with pytest.raises(NotFittedError):
        fresh.predict(SceneGraph(0, 0.0, [], []))


def test_fit_returns_self_and_sets_state(tiny_dataset):
    est = RelationshipPredictor(hidden_dim=8, num_layers=1, epochs=1, seed=0)
    assert est.fit(tiny_dataset.scenes) is est
    assert hasattr(est, "params_") and hasattr(est, "priors_")
    assert len(est.history_.epochs) == 1


def test_predict_before_fit_raises(tiny_dataset):
    est = RelationshipPredictor()
    with pytest.raises(NotFittedError):
        est.predict(tiny_dataset.scenes)


def test_predict_returns_one_graph_per_frame(fitted, tiny_dataset):
    scene = tiny_dataset.scenes[0]
    outputs = fitted.predict([scene])
    assert len(outputs) == len(scene.frames)
    assert all(isinstance(g, SceneGraph) for g in outputs)


def test_score_is_a_ratio(fitted, tiny_dataset):
    score = fitted.score(tiny_dataset.scenes[:2])
    assert 0.0 <= score <= 1.0


def test_check_scenes_rejects_junk():
    with pytest.raises(ValueError):
        check_scenes([])
    with pytest.raises(TypeError):
        check_scenes([object()])
