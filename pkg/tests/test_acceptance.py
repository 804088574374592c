"""Acceptance suite: one test per release criterion, each printing PASS/FAIL.

Run with `pytest -s tests/test_acceptance.py` to see the per-criterion lines.
The learning thresholds in criterion 6 were validated once by a reference run
(pairwise 0.907, R@15 0.924, about three minutes) and frozen together with
every seed below.
"""

import json
import math
import time

import numpy as np
import pytest

from roadgraph.autodiff import gradient_check
from roadgraph.cli import main as cli_main
from roadgraph.dataset import Dataset, load_dataset, split_dataset
from roadgraph.dualgraph import build_dense, prune_candidates
from roadgraph.metrics import degree_stats, evaluate_frames, pairwise_accuracy, recall_at_k
from roadgraph.network import (
    ModelConfig,
    forward,
    graph_arrays,
    init_parameters,
    masked_probabilities,
    predict,
)
from roadgraph.priors import compute_priors, uniform_priors
from roadgraph.scene import ObjectNode, RelationshipEdge, SceneGraph, collapse_groups
from roadgraph.synth import GenConfig, generate_dataset, jitter_dataset
from roadgraph.taxonomy import (
    ObjectClass,
    RelationshipType,
    TYPE_ORDER,
    type_index,
    valid_relationships,
)
from roadgraph.training import (
    TrainConfig,
    build_frame_pack,
    frame_loss_from_pack,
    slope_weight_continuous,
    slope_weight_paper,
    train,
)


def _report(criterion: int, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {criterion:02d} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


def _random_frame(seed: int) -> SceneGraph:
    rng = np.random.default_rng(seed)
    classes = [ObjectClass.VEHICLE, ObjectClass.VEHICLE,
               ObjectClass.HUMAN, ObjectClass.TRAFFIC_SIGN]
    nodes = [ObjectNode(i, classes[i],
                        float(rng.uniform(-20, 20)), float(rng.uniform(-4, 6)),
                        vx=float(rng.uniform(-8, 8)), vy=float(rng.uniform(-2, 2)),
                        ax=float(rng.uniform(-2, 2)), yaw=float(rng.uniform(-3, 3)))
             for i in range(4)]
    return SceneGraph(0, 0.0, nodes, [])


def test_01_gradient_correctness():
    """Full-model gradients match central differences over 10 seeds, T=4."""
    start = time.monotonic()
    worst = 0.0
    pt = uniform_priors()
    for seed in range(10):
        rng = np.random.default_rng(1000 + seed)
        frame = _random_frame(seed)
        cfg = ModelConfig(hidden_dim=16, num_layers=4, seed=seed)
        params = init_parameters(cfg)
        pack = build_frame_pack(frame, [], pt, "off", 0.5)
        valid = pack.arrays.mask_bias == 0
        pack.targets[:] = [int(rng.choice(np.flatnonzero(valid[k])))
                           for k in range(len(pack.targets))]
        err = gradient_check(lambda: frame_loss_from_pack(pack, params, cfg),
                             params.values(), max_coords=150, seed=seed)
        worst = max(worst, err)
    elapsed = time.monotonic() - start
    _report(1, worst < 1e-4 and elapsed < 30.0,
            f"max relative gradient error {worst:.2e} over 10 seeds "
            f"in {elapsed:.1f}s (limits 1e-4, 30s)")


def test_02_graph_count_invariants():
    start = time.monotonic()
    pt = uniform_priors()
    ok = True
    for n in range(0, 51):
        nodes = [ObjectNode(i, ObjectClass.VEHICLE, float(3 * i), float(i % 2))
                 for i in range(n)]
        dual = build_dense(SceneGraph(0, 0.0, nodes, []), pt)
        expected = n * (n - 1) // 2
        ok &= dual.n_edges() == expected
        ok &= len(dual.incidence) == expected  # dual nodes == candidate edges
    elapsed = time.monotonic() - start
    _report(2, ok and elapsed < 5.0,
            f"n(n-1)/2 candidate edges for n in [0, 50] in {elapsed:.2f}s")


def test_03_prior_soundness_and_mask():
    ds = generate_dataset(GenConfig(n_scenes=25, seed=77))
    pt = compute_priors(ds)
    for (ci, cj), vec in pt.table.items():
        assert abs(vec.sum() - 1.0) <= 1e-9
        valid = {type_index(r) for r in valid_relationships(ci, cj)}
        assert all(vec[k] == 0.0 for k in range(22) if k not in valid)

    frames = [f for s in ds.scenes for f in s.frames]
    assert len(frames) >= 1000
    worst_leak = 0.0
    params = cfg = None
    for idx, frame in enumerate(frames[:1000]):
        if idx % 100 == 0:
            cfg = ModelConfig(hidden_dim=12, num_layers=2, seed=idx)
            params = init_parameters(cfg)
        dual = prune_candidates(build_dense(collapse_groups(frame), pt))
        if dual.n_edges() == 0:
            continue
        arrays = graph_arrays(dual)
        probs = masked_probabilities(forward(dual, params, cfg), arrays.mask_bias)
        classes = {n.id: n.obj_class for n in dual.object_nodes}
        for k, (i, j) in enumerate(arrays.pairs):
            valid = {type_index(r) for r in valid_relationships(classes[i], classes[j])}
            leak = probs[k, [c for c in range(22) if c not in valid]].sum()
            worst_leak = max(worst_leak, float(leak))
    _report(3, worst_leak < 1e-6,
            f"rows sum to 1±1e-9, invalid mass exactly 0 in the table, "
            f"worst post-mask leak {worst_leak:.1e} over 1000 frames")


def test_04_slope_weight_correctness():
    assert slope_weight_paper(1.0, 0, 2, 8, 10) == pytest.approx(0.0625, abs=1e-15)
    rng = np.random.default_rng(4)
    breakpoints = [(0.0, 2.0, 8.0, 10.0)]
    for _ in range(20):
        a = float(rng.uniform(0, 5))
        b = a + float(rng.uniform(0.05, 5))
        c = b + float(rng.uniform(0.05, 5))
        d = c + float(rng.uniform(0.05, 5))
        breakpoints.append((a, b, c, d))
    for a, b, c, d in breakpoints:
        pre = 2.0 / (d + c - a - b)
        for x in np.linspace(a, b, 1000, endpoint=False):
            assert slope_weight_paper(float(x), a, b, c, d) == pytest.approx(
                pre * (x - a) / (b - a), abs=1e-12)
            assert slope_weight_continuous(float(x), a, b, c, d) == pytest.approx(
                (x - a) / (b - a), abs=1e-12)
        for x in np.linspace(b, c, 1000, endpoint=False):
            assert slope_weight_paper(float(x), a, b, c, d) == 1.0
        for x in np.linspace(c, d, 1000, endpoint=True)[1:]:
            assert slope_weight_paper(float(x), a, b, c, d) == pytest.approx(
                pre * (d - x) / (d - c), abs=1e-12)
            assert slope_weight_continuous(float(x), a, b, c, d) == pytest.approx(
                (d - x) / (d - c), abs=1e-12)
        # continuity of the repaired variant at the inner breakpoints
        for point in (b, c):
            lo = slope_weight_continuous(point - 1e-9, a, b, c, d)
            hi = slope_weight_continuous(point + 1e-9, a, b, c, d)
            assert abs(hi - lo) <= 1e-6
    # the two variants agree whenever the printed prefactor equals one
    for x in np.linspace(-1.0, 4.0, 400):
        a, b, c, d = 0.5, 1.5, 1.8, 2.2  # d + c - a - b == 2
        assert slope_weight_paper(float(x), a, b, c, d) == pytest.approx(
            slope_weight_continuous(float(x), a, b, c, d), abs=1e-12)
    _report(4, True, "piecewise values, continuity, and prefactor agreement checked")


def _naive_top_k(pred, k):
    remaining = list(pred)
    picked = []
    while remaining and len(picked) < k:
        best = remaining[0]
        for cand in remaining[1:]:
            key_b = (-best.confidence, best.subject_id, best.object_id,
                     TYPE_ORDER.index(best.rel))
            key_c = (-cand.confidence, cand.subject_id, cand.object_id,
                     TYPE_ORDER.index(cand.rel))
            if key_c < key_b:
                best = cand
        picked.append(best)
        remaining.remove(best)
    return picked


def _naive_metrics(pred, gt, k):
    wanted = [g for g in gt if g.rel is not RelationshipType.NO_RELATION]
    if not wanted:
        return None, None
    top = _naive_top_k(pred, k)
    recall_hits = sum(
        1 for g in wanted
        if any({p.subject_id, p.object_id} == {g.subject_id, g.object_id}
               and p.rel is g.rel for p in top))
    acc_hits = 0
    for g in wanted:
        match = next((p for p in pred
                      if {p.subject_id, p.object_id} == {g.subject_id, g.object_id}),
                     None)
        acc_hits += int(match is not None and match.rel is g.rel)
    return recall_hits / len(wanted), acc_hits / len(wanted)


def test_05_metric_oracle_equivalence():
    rng = np.random.default_rng(55)
    rels = [RelationshipType.FOLLOWING, RelationshipType.SAME_LANE,
            RelationshipType.APPROACHING, RelationshipType.PASSING_BY]
    checked = 0
    for _ in range(500):
        n = int(rng.integers(2, 7))
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        gt = [RelationshipEdge(i, j, rels[int(rng.integers(0, len(rels)))])
              for i, j in pairs if rng.random() < 0.5]
        pred = [RelationshipEdge(i, j, rels[int(rng.integers(0, len(rels)))],
                                 float(np.round(rng.uniform(0, 1), 2)))
                for i, j in pairs if rng.random() < 0.7]
        k = int(rng.integers(1, 9))
        naive_recall, naive_acc = _naive_metrics(pred, gt, k)
        assert recall_at_k(pred, gt, k) == naive_recall
        assert pairwise_accuracy(pred, gt)[0] == naive_acc
        checked += 1
    _report(5, checked == 500,
            "recall@K and pairwise accuracy equal brute-force enumeration "
            "on 500 random frames")


# Frozen desk-scale configuration, validated once by the reference run.
DESK_SEED = 1234
DESK_MODEL = ModelConfig(hidden_dim=32, num_layers=4, seed=DESK_SEED)
DESK_TRAIN = TrainConfig(epochs=8, seed=DESK_SEED)


def _desk_scale_run():
    ds = generate_dataset(GenConfig(n_scenes=220, seed=DESK_SEED))
    train_ds, test_ds = split_dataset(ds, 1.0 / 11.0)
    assert (len(train_ds.scenes), len(test_ds.scenes)) == (200, 20)
    pt = compute_priors(train_ds)
    params, history = train(train_ds.scenes, pt, DESK_MODEL, DESK_TRAIN)
    predicted, truth = [], []
    for scene in test_ds.scenes:
        for frame in scene.frames:
            predicted.append(predict(frame, pt, params, DESK_MODEL))
            truth.append(collapse_groups(frame))
    return evaluate_frames(predicted, truth), history


@pytest.fixture(scope="module")
def desk_scale():
    start = time.monotonic()
    report, history = _desk_scale_run()
    return report, history, time.monotonic() - start


def test_06_desk_scale_learning(desk_scale):
    report, history, elapsed = desk_scale
    ok = (report.pairwise_accuracy >= 0.85 and report.r_at[15] >= 0.80
          and elapsed < 600.0)
    _report(6, ok,
            f"200/20 scenes: pairwise {report.pairwise_accuracy:.3f} (>=0.85), "
            f"R@15 {report.r_at[15]:.3f} (>=0.80), runtime {elapsed:.0f}s (<600s)")


# The jitter ablation uses scenarios with mid-scene relationship transitions:
# boundary subjectivity is meaningless for relations that span the whole
# episode (their jitter windows clamp onto the scene edges, where the ramp
# frames are in fact correctly labelled).
SLOPE_TREND_MIX = {"approaching": 0.3, "crossing": 0.3,
                   "overtaking": 0.2, "passing_by": 0.2}


def _slope_trend_run(seed: int, slope: str) -> float:
    train_ds = generate_dataset(GenConfig(
        n_scenes=40, seed=seed, scenario_weights=dict(SLOPE_TREND_MIX)))
    test_ds = generate_dataset(GenConfig(
        n_scenes=30, seed=seed + 5000, scenario_weights=dict(SLOPE_TREND_MIX)))
    jittered = jitter_dataset(train_ds, seed=seed + 1000)  # 3-7 frame gaps
    pt = compute_priors(jittered)
    mcfg = ModelConfig(hidden_dim=24, num_layers=4, seed=seed)
    tcfg = TrainConfig(epochs=5, slope_penalty=slope, seed=seed)
    params, _ = train(jittered.scenes, pt, mcfg, tcfg)
    predicted, truth = [], []
    for scene in test_ds.scenes:
        for frame in scene.frames:
            predicted.append(predict(frame, pt, params, mcfg))
            truth.append(collapse_groups(frame))
    return evaluate_frames(predicted, truth).pairwise_accuracy


def test_07_slope_penalty_trend():
    with_slope = [_slope_trend_run(seed, "continuous") for seed in range(5)]
    without = [_slope_trend_run(seed, "off") for seed in range(5)]
    mean_on, mean_off = float(np.mean(with_slope)), float(np.mean(without))
    _report(7, mean_on >= mean_off,
            f"jittered training, 5 seeds: mean pairwise {mean_on:.4f} with the "
            f"slope penalty vs {mean_off:.4f} without")


@pytest.fixture(scope="module")
def small_workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    data = root / "d.rsgd"
    priors = root / "d.rsgp"
    assert cli_main(["gen-data", "--scenes", "11", "--seed", "42",
                     "--out", str(data)]) == 0
    assert cli_main(["priors", "--train", str(data), "--out", str(priors)]) == 0
    return root, data, priors


def test_08_depth_sweep_runs(small_workspace, capsys):
    root, data, priors = small_workspace
    fraction = str(1.0 / 11.0)
    reports = {}
    seconds = {}
    for layers in (1, 2, 3, 4, 5, 6):
        started = time.monotonic()
        model = root / f"depth{layers}.rsgm"
        report = root / f"depth{layers}"
        assert cli_main(["train", "--data", str(data), "--priors", str(priors),
                         "--epochs", "1", "--layers", str(layers),
                         "--hidden-dim", "12", "--seed", "42",
                         "--test-fraction", fraction,
                         "--out", str(model)]) == 0
        assert cli_main(["eval", "--data", str(data), "--model", str(model),
                         "--priors", str(priors), "--test-fraction", fraction,
                         "--slope-label", "continuous",
                         "--report", str(report)]) == 0
        payload = json.loads((root / f"depth{layers}.json").read_text())
        reports[layers] = payload
        seconds[layers] = time.monotonic() - started
    capsys.readouterr()
    ok = all(set(reports[n]["r_at"]) == {"15", "25"}
             and reports[n]["meta"]["layers"] == n for n in reports)
    timing = ", ".join(f"T={n}: {seconds[n]:.1f}s" for n in sorted(seconds))
    _report(8, ok, f"depth sweep 1..6 produced comparable reports "
                   f"(wall time measured, not asserted: {timing})")


def test_09_determinism_of_experiments(small_workspace, capsys):
    root, data, priors = small_workspace
    fraction = str(1.0 / 11.0)
    outputs = []
    for tag in ("first", "second"):
        data2 = root / f"det-{tag}.rsgd"
        model = root / f"det-{tag}.rsgm"
        report = root / f"det-{tag}"
        assert cli_main(["gen-data", "--scenes", "11", "--seed", "42",
                         "--out", str(data2)]) == 0
        assert cli_main(["train", "--data", str(data2), "--priors", str(priors),
                         "--epochs", "2", "--layers", "2", "--hidden-dim", "12",
                         "--seed", "9", "--test-fraction", fraction,
                         "--out", str(model)]) == 0
        assert cli_main(["eval", "--data", str(data2), "--model", str(model),
                         "--priors", str(priors), "--test-fraction", fraction,
                         "--report", str(report)]) == 0
        outputs.append((data2.read_bytes(), model.read_bytes(),
                        (root / f"det-{tag}.json").read_bytes()))
    capsys.readouterr()
    ok = outputs[0] == outputs[1]
    _report(9, ok, "re-running the echoed config reproduced dataset, model, "
                   "and report byte-for-byte")


def test_10_conservatism_statistic(desk_scale):
    report, _, _ = desk_scale
    gt, pred = report.gt_stats, report.pred_stats
    line = (f"avg degree: gt {gt.avg_degree:.2f} vs predicted "
            f"{pred.avg_degree:.2f}; avg edges/frame: gt "
            f"{gt.avg_edges_per_frame:.2f} vs predicted "
            f"{pred.avg_edges_per_frame:.2f}")
    rendered = report.to_text()
    ok = (gt.avg_degree > 0 and pred.avg_degree > 0
          and "avg degree" in rendered and "predicted" in rendered)
    _report(10, ok, line)
