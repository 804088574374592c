"""Command-line front end: gen-data, priors, train, eval, gradcheck.

Every command echoes its effective configuration as JSON so a run can be
reproduced exactly.  Exit codes: 0 success, 1 usage error, 2 validation
error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .autodiff import NumericError, gradient_check
from .dataset import (
    Dataset,
    SchemaError,
    load_dataset,
    load_model,
    load_prior_table,
    save_dataset,
    save_model,
    save_predictions,
    save_prior_table,
    split_dataset,
)
from .dualgraph import build_dense, prune_candidates
from .metrics import evaluate_frames
from .network import (
    ModelConfig,
    graph_arrays,
    init_parameters,
    predict,
)
from .priors import compute_priors, uniform_priors
from .scene import RelationshipEdge, SceneGraph, ObjectNode, ValidationError, collapse_groups
from .synth import (
    GenConfig,
    InfeasibleConfigError,
    generate_dataset,
    jitter_dataset,
    marginal_stats,
)
from .taxonomy import ObjectClass, RelationshipType
from .training import (
    TrainConfig,
    TrainingDivergedError,
    build_frame_pack,
    frame_loss_from_pack,
    train,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits 2 by default; the contract is 1
        raise UsageError(message)


def _echo_config(command: str, config: dict) -> None:
    print(json.dumps({"command": command, "config": config}, sort_keys=True))


def _load_file_config(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _merged(file_cfg: dict, overrides: dict) -> dict:
    merged = dict(file_cfg)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return merged


def _gen_config(cfg: dict) -> GenConfig:
    fields = dict(cfg)
    ranges = {}
    for key in ("n_vehicles", "n_humans", "n_obstacles", "n_signs"):
        if key in fields:
            lo, hi = fields[key]
            ranges[key] = (int(lo), int(hi))
    fields.update(ranges)
    return GenConfig(**fields)


def _cmd_gen_data(args) -> int:
    cfg_dict = _merged(_load_file_config(args.config), {
        "n_scenes": args.scenes, "duration_s": args.duration, "hz": args.hz,
        "seed": args.seed,
    })
    jitter = args.jitter
    gen_cfg = _gen_config(cfg_dict)
    echo = {**cfg_dict, "out": args.out, "jitter": jitter}
    _echo_config("gen-data", echo)
    dataset = generate_dataset(gen_cfg)
    if jitter is not None:
        lo, hi = jitter
        dataset = jitter_dataset(dataset, gen_cfg.seed, lo, hi)
    save_dataset(dataset, args.out)
    stats = marginal_stats(dataset.scenes)
    total = sum(stats.values())
    print(f"scenes: {len(dataset.scenes)}")
    print(f"frames: {dataset.meta['frame_count']}")
    print(f"intervals: {dataset.meta['interval_count']}")
    print("relationship marginals (labelled pair-frames):")
    for rel, n in sorted(stats.items(), key=lambda kv: -kv[1]):
        print(f"  {rel.value:28s} {n:7d}  {n / max(total, 1):.3f}")
    return EXIT_OK


def _cmd_priors(args) -> int:
    _echo_config("priors", {"train": args.train, "alpha": args.alpha, "out": args.out})
    dataset = load_dataset(args.train)
    table = compute_priors(dataset, alpha=args.alpha)
    save_prior_table(table, args.out)
    print("P(relationship | class pair):")
    for (ci, cj), probs in sorted(table.table.items(),
                                  key=lambda kv: (kv[0][0].value, kv[0][1].value)):
        cells = ", ".join(
            f"{rel.value}={probs[k]:.3f}"
            for k, rel in enumerate(RelationshipType) if probs[k] > 0)
        print(f"  ({ci.value}, {cj.value}): {cells}  [sum={probs.sum():.9f}]")
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg_dict = _merged(_load_file_config(args.config), {
        "epochs": args.epochs, "learning_rate": args.learning_rate,
        "slope_penalty": args.slope, "seed": args.seed,
        "hidden_dim": args.hidden_dim, "num_layers": args.layers,
        "test_fraction": args.test_fraction,
    })
    cfg_dict.setdefault("epochs", 10)
    cfg_dict.setdefault("test_fraction", 0.1)
    echo = {**cfg_dict, "data": args.data, "priors": args.priors,
            "out": args.out, "history": args.history}
    _echo_config("train", echo)
    if not Path(args.priors).exists():
        raise ValidationError(f"priors file not found: {args.priors}")
    dataset = load_dataset(args.data)
    table = load_prior_table(args.priors)
    frac = cfg_dict["test_fraction"]
    train_scenes = dataset.scenes
    if frac > 0:
        train_scenes = split_dataset(dataset, frac)[0].scenes
    mcfg = ModelConfig(hidden_dim=cfg_dict.get("hidden_dim", 64),
                       num_layers=cfg_dict.get("num_layers", 4),
                       init_scale=cfg_dict.get("init_scale", 1.0),
                       seed=cfg_dict.get("seed", 0))
    tcfg = TrainConfig(epochs=cfg_dict["epochs"],
                       learning_rate=cfg_dict.get("learning_rate", 1e-3),
                       optimizer=cfg_dict.get("optimizer", "adam"),
                       no_relation_downweight=cfg_dict.get("no_relation_downweight", 0.1),
                       slope_penalty=cfg_dict.get("slope_penalty", "continuous"),
                       seed=cfg_dict.get("seed", 0))
    params, history = train(train_scenes, table, mcfg, tcfg)
    save_model(params, args.out)
    if args.history:
        Path(args.history).write_text(history.to_csv(), encoding="utf-8")
    for stats in history.epochs:
        print(f"epoch {stats.epoch}: loss {stats.mean_loss:.6f} "
              f"val_pairwise {stats.val_pairwise_accuracy:.4f}")
    return EXIT_OK


def _oracle_predict(frame: SceneGraph, max_dist: float) -> SceneGraph:
    """Perfect-oracle stub: echo the ground truth for unpruned pairs."""
    collapsed = collapse_groups(frame)
    dual = prune_candidates(build_dense(collapsed, uniform_priors()), max_dist=max_dist)
    surviving = {frozenset((e.subject_id, e.object_id)) for e in dual.edge_nodes}
    edges = [RelationshipEdge(e.subject_id, e.object_id, e.rel, 1.0)
             for e in collapsed.edges
             if frozenset((e.subject_id, e.object_id)) in surviving]
    return SceneGraph(collapsed.frame_index, collapsed.timestamp_s,
                      collapsed.nodes, edges)


def _cmd_eval(args) -> int:
    ks = [int(k) for k in args.k.split(",")]
    echo = {"data": args.data, "model": args.model, "priors": args.priors,
            "k": ks, "test_fraction": args.test_fraction, "report": args.report,
            "max_pair_distance": args.max_dist, "oracle": args.oracle}
    _echo_config("eval", echo)
    dataset = load_dataset(args.data)
    scenes = dataset.scenes
    if args.test_fraction > 0:
        scenes = split_dataset(dataset, args.test_fraction)[1].scenes

    meta = {"k": ",".join(str(k) for k in ks)}
    if args.oracle:
        predict_frame = lambda f: _oracle_predict(f, args.max_dist)  # noqa: E731
        meta.update({"model": "oracle"})
    else:
        if not Path(args.priors or "").exists():
            raise ValidationError(f"priors file not found: {args.priors}")
        params = load_model(args.model)
        table = load_prior_table(args.priors)
        mcfg = params.config
        meta.update({"layers": mcfg.num_layers, "hidden": mcfg.hidden_dim,
                     "slope": args.slope_label or "unspecified"})
        predict_frame = lambda f: predict(  # noqa: E731
            f, table, params, mcfg, max_dist=args.max_dist)

    rows = []
    predicted, truth = [], []
    for scene in scenes:
        for frame in scene.frames:
            p = predict_frame(frame)
            predicted.append(p)
            truth.append(collapse_groups(frame))
            rows.append((scene.scene_id, frame.frame_index, p.edges))
    report = evaluate_frames(predicted, truth, ks=ks, meta=meta)
    print(report.to_text())
    if args.report:
        base = Path(args.report)
        base.with_suffix(".txt").write_text(report.to_text(), encoding="utf-8")
        base.with_suffix(".json").write_text(
            json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n",
            encoding="utf-8")
        Path(str(base) + "_confusion.csv").write_text(report.confusion.to_csv(),
                                                      encoding="utf-8")
        save_predictions(rows, str(base) + "_predictions.rsgj")
    return EXIT_OK


def _random_gradcheck_scene(seed: int) -> SceneGraph:
    rng = np.random.default_rng(seed)
    classes = [ObjectClass.VEHICLE, ObjectClass.VEHICLE,
               ObjectClass.HUMAN, ObjectClass.TRAFFIC_SIGN]
    nodes = []
    for i, cls in enumerate(classes):
        nodes.append(ObjectNode(
            id=i, obj_class=cls,
            x=float(rng.uniform(-20, 20)), y=float(rng.uniform(-4, 6)),
            vx=float(rng.uniform(-5, 5)), vy=float(rng.uniform(-1, 1)),
            ax=float(rng.uniform(-1, 1)), ay=float(rng.uniform(-0.3, 0.3)),
            yaw=float(rng.uniform(-3.0, 3.0))))
    return SceneGraph(0, 0.0, nodes, [])


def _cmd_gradcheck(args) -> int:
    _echo_config("gradcheck", {"layers": args.layers, "seed": args.seed,
                               "hidden_dim": args.hidden_dim})
    rng = np.random.default_rng(args.seed)
    frame = _random_gradcheck_scene(args.seed)
    mcfg = ModelConfig(hidden_dim=args.hidden_dim, num_layers=args.layers,
                       seed=args.seed)
    params = init_parameters(mcfg)
    pt = uniform_priors()
    targets = rng.integers(0, 22, size=6)
    pack = build_frame_pack(frame, [], pt, "off", 0.5)
    pack.targets[:] = [t if pack.arrays.mask_bias[k, t] == 0 else 21
                       for k, t in enumerate(targets)]
    error = gradient_check(lambda: frame_loss_from_pack(pack, params, mcfg),
                           params.values(), seed=args.seed)
    print(f"max relative gradient error: {error:.3e}")
    threshold = 1e-4
    if error > threshold:
        print(f"FAIL: exceeds {threshold}")
        return EXIT_NUMERIC
    return EXIT_OK


def _build_parser() -> _Parser:
    parser = _Parser(prog="roadgraph",
                     description="Road-object relationship prediction pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--config", help="JSON config file with GenConfig fields")
    p.add_argument("--scenes", type=int, default=None)
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--hz", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jitter", type=float, nargs=2, metavar=("MIN", "MAX"),
                   default=None, help="annotator jitter gap range in frames")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_gen_data)

    p = sub.add_parser("priors", help="compute the co-occurrence prior table")
    p.add_argument("--train", required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_priors)

    p = sub.add_parser("train", help="train the relationship network")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--data", required=True)
    p.add_argument("--priors", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--hidden-dim", type=int, default=None)
    p.add_argument("--slope", choices=("off", "paper", "continuous"), default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--test-fraction", type=float, default=None,
                   help="trailing fraction of scenes excluded from training")
    p.add_argument("--out", required=True)
    p.add_argument("--history", help="CSV training-history output path")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model")
    p.add_argument("--data", required=True)
    p.add_argument("--model")
    p.add_argument("--priors")
    p.add_argument("--oracle", action="store_true",
                   help="score a perfect-oracle stub instead of a model")
    p.add_argument("--k", default="15,25")
    p.add_argument("--test-fraction", type=float, default=0.1)
    p.add_argument("--max-dist", type=float, default=60.0)
    p.add_argument("--slope-label", help="ablation label recorded in the report")
    p.add_argument("--report", help="output path prefix for report files")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full loss")
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--hidden-dim", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, SchemaError, InfeasibleConfigError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericError, TrainingDivergedError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
