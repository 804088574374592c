import json

import pytest

from roadgraph.cli import main

FRACTION = 1.0 / 11.0


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A tiny generated dataset with priors and a trained model."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "d.rsgd"
    priors = root / "d.rsgp"
    model = root / "d.rsgm"
    assert main(["gen-data", "--scenes", "11", "--seed", "4",
                 "--out", str(data)]) == 0
    assert main(["priors", "--train", str(data), "--out", str(priors)]) == 0
    assert main(["train", "--data", str(data), "--priors", str(priors),
                 "--epochs", "2", "--layers", "2", "--hidden-dim", "12",
                 "--seed", "3", "--test-fraction", str(FRACTION),
                 "--out", str(model),
                 "--history", str(root / "hist.csv")]) == 0
    return {"root": root, "data": data, "priors": priors, "model": model}


def test_gen_data_echoes_config_and_prints_stats(tmp_path, capsys):
    out_path = tmp_path / "x.rsgd"
    code, out, _ = run(capsys, "gen-data", "--scenes", "3", "--seed", "1",
                       "--out", str(out_path))
    assert code == 0
    header = json.loads(out.splitlines()[0])
    assert header["command"] == "gen-data"
    assert header["config"]["n_scenes"] == 3
    assert "relationship marginals" in out
    assert out_path.exists()


def test_gen_data_same_seed_gives_identical_bytes(tmp_path, capsys):
    a, b = tmp_path / "a.rsgd", tmp_path / "b.rsgd"
    assert main(["gen-data", "--scenes", "3", "--seed", "8", "--out", str(a)]) == 0
    assert main(["gen-data", "--scenes", "3", "--seed", "8", "--out", str(b)]) == 0
    capsys.readouterr()
    assert a.read_bytes() == b.read_bytes()


def test_gen_data_zero_scenes_is_a_validation_error(tmp_path, capsys):
    code, _, err = run(capsys, "gen-data", "--scenes", "0",
                       "--out", str(tmp_path / "x.rsgd"))
    assert code == 2
    assert "validation error" in err


def test_gen_data_reads_config_file_with_overrides(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"n_scenes": 5, "seed": 11,
                                    "n_humans": [0, 2]}))
    out_path = tmp_path / "c.rsgd"
    code, out, _ = run(capsys, "gen-data", "--config", str(cfg_path),
                       "--scenes", "2", "--out", str(out_path))
    assert code == 0
    header = json.loads(out.splitlines()[0])
    assert header["config"]["n_scenes"] == 2  # flag overrides the file
    assert header["config"]["seed"] == 11     # file value kept
    from roadgraph.dataset import load_dataset
    assert len(load_dataset(out_path).scenes) == 2


def test_gen_data_jitter_flag(tmp_path, capsys):
    out_path = tmp_path / "j.rsgd"
    code, _, _ = run(capsys, "gen-data", "--scenes", "2", "--seed", "2",
                     "--jitter", "3", "7", "--out", str(out_path))
    assert code == 0
    from roadgraph.dataset import load_dataset
    ds = load_dataset(out_path)
    assert ds.meta["jitter"]["max_gap"] == 7.0


def test_priors_round_trips_and_rows_sum_to_one(workspace, capsys):
    from roadgraph.dataset import load_prior_table
    from roadgraph.priors import compute_priors
    from roadgraph.dataset import load_dataset
    table = load_prior_table(workspace["priors"])
    recomputed = compute_priors(load_dataset(workspace["data"]))
    assert table == recomputed


def test_priors_alpha_zero_without_support_fails(tmp_path, capsys):
    data = tmp_path / "mini.rsgd"
    assert main(["gen-data", "--scenes", "2", "--seed", "5",
                 "--out", str(data)]) == 0
    capsys.readouterr()
    code, _, err = run(capsys, "priors", "--train", str(data), "--alpha", "0",
                       "--out", str(tmp_path / "p.rsgp"))
    assert code == 2
    assert "zero support with alpha=0" in err


def test_train_missing_priors_file_is_explicit(workspace, capsys):
    code, _, err = run(capsys, "train", "--data", str(workspace["data"]),
                       "--priors", str(workspace["root"] / "absent.rsgp"),
                       "--epochs", "1", "--out", str(workspace["root"] / "x.rsgm"))
    assert code == 2
    assert "priors file not found" in err


def test_eval_prints_table_and_writes_reports(workspace, capsys):
    report = workspace["root"] / "rep"
    code, out, _ = run(capsys, "eval", "--data", str(workspace["data"]),
                       "--model", str(workspace["model"]),
                       "--priors", str(workspace["priors"]),
                       "--test-fraction", str(FRACTION),
                       "--slope-label", "continuous",
                       "--report", str(report))
    assert code == 0
    assert "R@15" in out and "R@25" in out and "pairwise" in out
    assert "slope=continuous" in out and "layers=2" in out
    assert (workspace["root"] / "rep.txt").exists()
    assert (workspace["root"] / "rep.json").exists()
    assert (workspace["root"] / "rep_confusion.csv").exists()
    assert (workspace["root"] / "rep_predictions.rsgj").exists()


def test_eval_oracle_stub_is_perfect(workspace, capsys):
    code, out, _ = run(capsys, "eval", "--data", str(workspace["data"]),
                       "--oracle", "--test-fraction", "0.5")
    assert code == 0
    report = [ln for ln in out.splitlines() if ln.startswith("edge-gru")][0]
    values = report.split()[-3:]
    assert [float(v) for v in values] == [1.0, 1.0, 1.0]


def test_eval_oracle_with_tiny_prune_radius_matches_surviving_fraction(workspace, capsys):
    from roadgraph.cli import _oracle_predict
    from roadgraph.dataset import load_dataset, split_dataset
    from roadgraph.scene import collapse_groups

    dataset = load_dataset(workspace["data"])
    scenes = split_dataset(dataset, 0.5)[1].scenes
    max_dist = 14.0
    per_frame = []
    for scene in scenes:
        for frame in scene.frames:
            gt = collapse_groups(frame).edges
            if not gt:
                continue
            pred = _oracle_predict(frame, max_dist).edges
            kept = {(frozenset((e.subject_id, e.object_id)), e.rel) for e in pred}
            hits = sum(1 for e in gt
                       if (frozenset((e.subject_id, e.object_id)), e.rel) in kept)
            per_frame.append(hits / len(gt))
    expected = sum(per_frame) / len(per_frame)
    assert expected < 1.0  # the tiny radius must actually prune something

    code, out, _ = run(capsys, "eval", "--data", str(workspace["data"]),
                       "--oracle", "--test-fraction", "0.5",
                       "--k", "1000", "--max-dist", str(max_dist))
    assert code == 0
    row = [ln for ln in out.splitlines() if ln.startswith("edge-gru")][0]
    r_at_1000 = float(row.split()[-2])
    # with k beyond every candidate list, recall equals the fraction of
    # ground-truth pairs that survive pruning
    assert r_at_1000 == pytest.approx(expected, abs=5e-4)


def test_gradcheck_passes_and_exits_zero(capsys):
    code, out, _ = run(capsys, "gradcheck", "--layers", "4", "--seed", "0")
    assert code == 0
    error = float(out.splitlines()[-1].split()[-1])
    assert error < 1e-4


def test_gradcheck_single_layer_is_tighter(capsys):
    code, out, _ = run(capsys, "gradcheck", "--layers", "1", "--seed", "1")
    assert code == 0
    error = float(out.splitlines()[-1].split()[-1])
    assert error < 1e-5


def test_usage_error_exits_one(capsys):
    code, _, err = run(capsys, "gen-data")  # --out is required
    assert code == 1
    assert "usage error" in err


def test_rerunning_echoed_train_config_reproduces_the_model(workspace, capsys):
    root = workspace["root"]
    model2 = root / "again.rsgm"
    assert main(["train", "--data", str(workspace["data"]),
                 "--priors", str(workspace["priors"]),
                 "--epochs", "2", "--layers", "2", "--hidden-dim", "12",
                 "--seed", "3", "--test-fraction", str(FRACTION),
                 "--out", str(model2)]) == 0
    capsys.readouterr()
    assert model2.read_bytes() == workspace["model"].read_bytes()
