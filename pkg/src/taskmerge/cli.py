"""Command-line entry point: ``taskmerge <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import features, gbdt
from .baseline import NaiveModel, fit_naive, save_naive
from .evaluate import (
    AXES,
    DEFAULT_TAU,
    SweepError,
    SweepSpec,
    cast_axis_value,
    evaluate,
    load_predictor,
    rmse,
    sweep,
    write_sweep_csv,
)
from .oracle import DEFAULT_SEED, OracleConfig, generate_dataset, load_config, synth_video
from .sim import MergePolicy, makespan_table, run_sim, write_trace
from .workload import PARAMETERS, Kind, Operation, TranscodeTask, VideoMeta, read_workload, write_workload

DEFAULTS = gbdt.Hyperparams()


def _add_seed(p):
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="random seed (default: %(default)s)")


def _add_oracle(p):
    p.add_argument("--config", type=Path, help="oracle config file (flat JSON); --seed and noise flags override it")
    p.add_argument("--vic-noise", type=float, help="VIC phase noise sigma (default: 0.05)")
    p.add_argument("--codec-noise", type=float, help="codec phase noise sigma (default: 0.25)")


def _add_hyperparams(p):
    p.add_argument("--trees", type=int, default=DEFAULTS.num_trees, help="number of trees M (default: %(default)s)")
    p.add_argument("--learning-rate", type=float, default=DEFAULTS.learning_rate,
                   help="learning rate L (default: %(default)s)")
    p.add_argument("--max-depth", type=int, default=DEFAULTS.max_depth, help="maximum tree depth D (default: %(default)s)")
    p.add_argument("--min-split", type=int, default=DEFAULTS.min_samples_split,
                   help="minimum samples to split a node S (default: %(default)s)")
    p.add_argument("--min-leaf", type=int, default=DEFAULTS.min_samples_leaf,
                   help="minimum samples per leaf J (default: %(default)s)")


def _add_split(p):
    p.add_argument("--split-fraction", type=float, default=0.8,
                   help="training share of the data (default: %(default)s)")


def _hyperparams(args) -> gbdt.Hyperparams:
    return gbdt.Hyperparams(args.trees, args.learning_rate, args.max_depth, args.min_split, args.min_leaf)


def _oracle_config(args) -> OracleConfig:
    cfg = load_config(args.config) if args.config else OracleConfig()
    changes = {"rng_seed": args.seed}
    if args.vic_noise is not None:
        changes["vic_noise_sigma"] = args.vic_noise
    if args.codec_noise is not None:
        changes["codec_noise_sigma"] = args.codec_noise
    return cfg.replace(**changes)


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taskmerge",
        description="Predict and simulate execution-time savings from merging similar video tasks.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen", help="generate a labeled dataset from the execution-time oracle")
    p.add_argument("--videos", type=int, default=100, help="number of synthetic segments (default: %(default)s)")
    p.add_argument("--cases", type=int, default=50, help="merge cases per segment (default: %(default)s)")
    p.add_argument("--out", type=Path, required=True, help="output dataset CSV")
    _add_seed(p)
    _add_oracle(p)

    p = sub.add_parser("train", help="train a saving predictor on a dataset CSV")
    p.add_argument("--data", type=Path, required=True, help="dataset CSV")
    p.add_argument("--out", type=Path, required=True, help="output model file")
    p.add_argument("--kind", choices=("gbdt", "naive"), default="gbdt", help="model kind (default: %(default)s)")
    p.add_argument("--test-out", type=Path, help="also write the held-out test rows to this CSV")
    _add_hyperparams(p)
    _add_split(p)
    _add_seed(p)

    p = sub.add_parser("predict", help="predict savings for a feature row or a dataset CSV")
    p.add_argument("--model", type=Path, required=True, help="model file")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--features", help="comma-separated feature row: " + ",".join(features.FEATURE_NAMES))
    group.add_argument("--data", type=Path, help="dataset CSV; one prediction per row")
    p.add_argument("--out", type=Path, help="write predictions here instead of stdout")

    p = sub.add_parser("eval", help="score a model on a dataset CSV")
    p.add_argument("--model", type=Path, required=True, help="model file")
    p.add_argument("--data", type=Path, required=True, help="dataset CSV to score")
    p.add_argument("--tau", type=float, default=DEFAULT_TAU, help="accuracy tolerance (default: %(default)s)")
    p.add_argument("--naive", type=Path, help="lookup-table model file to compare against")
    p.add_argument("--naive-data", type=Path, help="fit a lookup-table baseline on this CSV for comparison")
    p.add_argument("--out", type=Path, help="write the JSON report here as well")

    p = sub.add_parser("sweep", help="train over a hyperparameter grid and report train/test RMSE")
    p.add_argument("--data", type=Path, required=True, help="dataset CSV")
    p.add_argument("--out", type=Path, required=True, help="output sweep CSV")
    p.add_argument("--axis", choices=sorted(AXES), required=True, help="swept hyperparameter")
    p.add_argument("--values", type=_floats, required=True, help="comma-separated axis values")
    p.add_argument("--series", choices=sorted(AXES), help="optional second hyperparameter, one curve per value")
    p.add_argument("--series-values", type=_floats, default=[], help="comma-separated series values")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default: %(default)s)")
    _add_hyperparams(p)
    _add_split(p)
    _add_seed(p)

    p = sub.add_parser("simulate", help="simulate merge-aware scheduling of a workload file")
    p.add_argument("--data", "--workload", dest="workload", type=Path, required=True, help="workload file")
    p.add_argument("--policy", choices=("never", "always", "threshold"), default="always",
                   help="merge policy (default: %(default)s)")
    p.add_argument("--threshold", type=float, default=0.0,
                   help="minimum predicted saving for the threshold policy (default: %(default)s)")
    p.add_argument("--model", type=Path, help="predictor model file (required by --policy threshold)")
    p.add_argument("--workers", type=int, default=1, help="identical workers (default: %(default)s)")
    p.add_argument("--out", type=Path, help="write the per-group trace CSV here")
    _add_seed(p)
    _add_oracle(p)

    p = sub.add_parser("workload", help="synthesize a workload file of transcoding requests")
    p.add_argument("--videos", type=int, default=20, help="number of segments (default: %(default)s)")
    p.add_argument("--tasks", type=int, default=200, help="number of tasks (default: %(default)s)")
    p.add_argument("--out", type=Path, required=True, help="output workload file")
    _add_seed(p)

    p = sub.add_parser("makespan", help="merged vs sequential time for 2..5 parameters of one VIC kind")
    p.add_argument("--kind", choices=[k.value for k in Kind if k.is_vic], default="bitrate",
                   help="VIC operation kind (default: %(default)s)")
    p.add_argument("--duration", type=float, default=2.0, help="segment duration in seconds (default: %(default)s)")
    p.add_argument("--size", type=float, default=1000.0, help="segment size in KB (default: %(default)s)")
    _add_seed(p)
    _add_oracle(p)
    return parser


def cmd_gen(args) -> None:
    cfg = _oracle_config(args)
    ds = generate_dataset(args.videos, args.cases, cfg)
    features.write_csv(ds, args.out)
    print(f"wrote {len(ds)} rows to {args.out}")


def cmd_train(args) -> None:
    ds = features.read_csv(args.data)
    train_set, test_set = features.split(ds, args.split_fraction, args.seed)
    start = time.perf_counter()
    if args.kind == "gbdt":
        model = gbdt.train(train_set, _hyperparams(args))
        gbdt.save_model(model, args.out)
    else:
        model = fit_naive(train_set)
        save_naive(model, args.out)
    elapsed = time.perf_counter() - start
    if args.test_out:
        features.write_csv(test_set, args.test_out)
    print(json.dumps({
        "model": str(args.out),
        "kind": args.kind,
        "train_rows": len(train_set),
        "test_rows": len(test_set),
        "train_rmse": rmse(model.predict(train_set.X), train_set.y),
        "test_rmse": rmse(model.predict(test_set.X), test_set.y),
        "seconds": round(elapsed, 3),
    }, indent=2))


def cmd_predict(args) -> None:
    model = load_predictor(args.model)
    if args.features is not None:
        X = np.array([_floats(args.features)])
    else:
        X = features.read_csv(args.data).X
    preds = model.predict(X)
    lines = "".join(f"{p!r}\n" for p in preds.tolist())
    if args.out:
        args.out.write_text(lines)
    else:
        sys.stdout.write(lines)


def cmd_eval(args) -> None:
    model = load_predictor(args.model)
    data = features.read_csv(args.data)
    result = {"model": evaluate(model, data, args.tau).as_dict()}
    naive: NaiveModel | None = None
    if args.naive:
        naive = load_predictor(args.naive)
    elif args.naive_data:
        naive = fit_naive(features.read_csv(args.naive_data))
    if naive is not None:
        result["naive"] = evaluate(naive, data, args.tau).as_dict()
    text = json.dumps(result, indent=2)
    if args.out:
        args.out.write_text(text + "\n")
    print(text)


def cmd_sweep(args) -> None:
    ds = features.read_csv(args.data)
    train_set, test_set = features.split(ds, args.split_fraction, args.seed)
    values = [cast_axis_value(args.axis, v) for v in args.values]
    series_values = [cast_axis_value(args.series, v) for v in args.series_values] if args.series else args.series_values
    spec = SweepSpec(args.axis, values, _hyperparams(args), args.series, series_values)
    rows = sweep(spec, train_set, test_set, jobs=args.jobs)
    write_sweep_csv(rows, args.out)
    print(f"wrote {len(rows)} sweep rows to {args.out}")


def cmd_simulate(args) -> None:
    tasks = read_workload(args.workload)
    if args.policy == "threshold":
        if args.model is None:
            raise ValueError("--policy threshold requires --model")
        policy = MergePolicy.threshold(args.threshold)
    else:
        policy = MergePolicy(args.policy)
    predictor = load_predictor(args.model) if args.model else None
    report = run_sim(tasks, policy, predictor, _oracle_config(args), args.workers)
    if args.out:
        write_trace(report, args.out)
    print(report.to_json())


def cmd_workload(args) -> None:
    rng = np.random.default_rng(args.seed)
    videos = [synth_video(rng, f"seg{i:05d}") for i in range(args.videos)]
    ops = [Operation(k, p) for k, params in PARAMETERS.items() for p in params]
    tasks = []
    for i in range(args.tasks):
        video = videos[rng.integers(len(videos))]
        tasks.append(TranscodeTask(f"t{i:06d}", video, ops[rng.integers(len(ops))]))
    write_workload(tasks, args.out)
    print(f"wrote {len(tasks)} tasks to {args.out}")


def cmd_makespan(args) -> None:
    video = VideoMeta("segment", args.duration, args.size, 30.0, 1280, 720)
    table = makespan_table(video, Kind(args.kind), _oracle_config(args))
    print("degree,merged_s,sequential_s,saving_pct")
    for k, (merged, seq) in table.items():
        print(f"{k},{merged:.6f},{seq:.6f},{(seq - merged) / seq * 100:.2f}")


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "workload": cmd_workload,
    "makespan": cmd_makespan,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (ValueError, OSError, SweepError) as exc:
        print(f"taskmerge {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
