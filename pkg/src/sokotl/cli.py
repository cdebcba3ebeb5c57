"""Command-line front end tying generation, training, transfer and analysis
into reproducible runs.

Every artifact-producing subcommand writes a manifest.json next to its
output listing the exact files created and the effective merged
configuration. Failures exit nonzero after printing a one-line JSON error
record to stderr. The output root defaults to $SOKOTL_OUT, falling back to
./sokotl_out.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import (engine, evalharness, experiments, levels, net, planner,
               textures, trainer, transfer, verify)

CONFIG_SCHEMA_VERSION = 1


def _args_dict(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def _out_root(value) -> Path:
    if value:
        return Path(value)
    return Path(os.environ.get("SOKOTL_OUT", "sokotl_out"))


RUN_MANIFEST = "run_manifest.json"


def _write_manifest(out_dir: Path, command: str, config: dict,
                    artifacts) -> Path:
    # distinct from the manifest.json a stored level set carries
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "command": command,
        "config": config,
        "artifacts": sorted(str(a) for a in artifacts),
    }
    path = out_dir / RUN_MANIFEST
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _relative_files(out_dir: Path):
    return [p.relative_to(out_dir) for p in sorted(out_dir.rglob("*"))
            if p.is_file() and p.name != RUN_MANIFEST]


def _parse_seeds(spec: str) -> tuple:
    """"5" means seeds 0..4; "0,3,9" (or "3,") means exactly those."""
    if "," in spec:
        return tuple(int(s) for s in spec.split(",") if s.strip() != "")
    return tuple(range(int(spec)))


def _print(payload: dict):
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_levels(args) -> int:
    constraints = levels.GenConstraints(
        wall_density=args.wall_density,
        min_len=args.min_len,
        max_len=args.max_len,
        node_budget=args.node_budget,
        attempts_per_level=args.attempts,
    )
    lset = levels.generate(args.seed, args.boxes, args.count, constraints)
    out_dir = _out_root(args.out)
    if args.split:
        n_train, n_test = (int(x) for x in args.split.split(","))
        train_set, test_set = levels.split(lset, n_train, n_test, args.seed)
        levels.save_level_set(train_set, out_dir / "train")
        levels.save_level_set(test_set, out_dir / "test")
    else:
        levels.save_level_set(lset, out_dir)
    _write_manifest(out_dir, "gen-levels", _args_dict(args),
                    _relative_files(out_dir))
    lengths = [l.optimal_length for l in lset.levels]
    _print({
        "out": str(out_dir),
        "count": len(lset),
        "boxes": args.boxes,
        "seed": args.seed,
        "optimal_length": {"min": min(lengths), "max": max(lengths)},
    })
    return 0


def _pick_level(lset: levels.LevelSet, args) -> levels.Level:
    if args.id is not None:
        for level in lset.levels:
            if level.id == args.id:
                return level
        raise KeyError(f"no level with id {args.id!r}")
    return lset.levels[args.index]


def cmd_solve(args) -> int:
    lset = levels.load_level_set(args.levels)
    level = _pick_level(lset, args)
    result = planner.solve_optimal(level, args.node_budget)
    _print({
        "id": level.id,
        "status": result.status,
        "length": result.length,
        "actions": list(result.actions) if result.actions is not None else None,
        "nodes_expanded": result.nodes_expanded,
        "implementation": planner.IMPLEMENTATION,
    })
    return 0


def cmd_stats(args) -> int:
    lset = levels.load_level_set(args.levels)
    counts, summary = planner.length_histogram(lset.levels)
    _print({"count": len(lset), "box_count": lset.box_count,
            "histogram": counts, "summary": summary})
    return 0


def cmd_pretrain_sl(args) -> int:
    lset = levels.load_level_set(args.levels)
    out_dir = _out_root(args.out)
    dataset = transfer.make_pretext_dataset(
        lset.levels, args.samples, args.seed, palette=args.palette
    )
    transfer.save_pretext_dataset(dataset, out_dir)
    result = transfer.pretrain_locator(
        dataset, args.seed, max_epochs=args.max_epochs,
        batch_size=args.batch_size,
    )
    result.params.source_task = "prediction"
    ckpt = net.save_checkpoint(result.params, out_dir / "locator.ckpt",
                               source_task="prediction")
    report = {
        "epochs_run": result.epochs_run,
        "holdout_accuracy": result.holdout_accuracy,
        "history": result.history,
        "n_samples": len(dataset),
        "checkpoint": str(ckpt),
    }
    with open(out_dir / "pretrain.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(out_dir, "pretrain-sl", _args_dict(args),
                    _relative_files(out_dir))
    _print(report)
    return 0


def _resolve_experiment(args) -> experiments.ExperimentConfig:
    if args.config:
        config = experiments.load_config(args.config)
        if args.experiment and args.experiment != config.abbreviation:
            raise experiments.ExperimentError(
                f"--experiment {args.experiment!r} contradicts config file "
                f"{config.abbreviation!r}"
            )
    elif args.experiment:
        config = experiments.parse_experiment(args.experiment)
    else:
        task = args.task or "1box"
        config = experiments.ExperimentConfig(
            abbreviation=f"scratch_{task}", source_task="none",
            target_task=task, k="none",
        )
    return experiments.with_overrides(
        config,
        seeds=_parse_seeds(args.seeds) if args.seeds else None,
        budget_steps=args.budget_steps,
    )


def _run_training(args, require_source: bool) -> int:
    config = _resolve_experiment(args)
    is_transfer = config.k != "none" and config.source_task != "none"
    if require_source and not is_transfer:
        raise experiments.ExperimentError(
            "transfer-train needs a transfer experiment (k != none)"
        )
    source = None
    if is_transfer:
        if not args.source_checkpoint:
            raise experiments.ExperimentError(
                f"{config.abbreviation} transplants {config.k} from a "
                f"{config.source_task} checkpoint; pass --source-checkpoint"
            )
        source = net.load_checkpoint(args.source_checkpoint)

    train_set = levels.load_level_set(args.levels)
    eval_set = levels.load_level_set(args.eval_levels) if args.eval_levels \
        else train_set
    palette = args.palette or config.palette
    out_dir = _out_root(args.out) / config.abbreviation
    hp = config.hyper
    tcfg = trainer.TrainConfig(
        total_steps=config.budget_steps,
        n_envs=hp.n_envs,
        rollout_steps=hp.rollout_steps,
        gamma=hp.gamma,
        lr=hp.lr,
        rmsprop_alpha=hp.rmsprop_alpha,
        rmsprop_eps=hp.rmsprop_eps,
        entropy_coef=hp.entropy_coef,
        value_coef=hp.value_coef,
        max_grad_norm=args.max_grad_norm,
        eval_every=args.eval_every,
        eval_episodes_per_level=args.episodes_per_level,
        eval_mode=args.eval_mode,
        palette=palette,
        deterministic=args.deterministic,
        stop_at_solved=args.stop_at_solved,
    )

    metrics_paths = []
    summary = []
    for seed in config.seeds:
        init_params = transfer.apply_transfer(source, config.k, seed) \
            if source is not None else None
        result = trainer.train(
            train_set.levels, eval_set.levels, out_dir / f"seed{seed}",
            seed, tcfg, init_params=init_params,
            task_name=config.target_task,
        )
        metrics_paths.append(result.metrics_path)
        summary.append({
            "seed": seed,
            "env_steps": result.env_steps,
            "final_solved_ratio":
                result.eval_history[-1][1] if result.eval_history else None,
            "early_stopped": result.early_stopped,
        })

    artifacts_note = {}
    if len(metrics_paths) >= 2 and not any(s["early_stopped"] for s in summary):
        agg = evalharness.aggregate_files(metrics_paths)
        evalharness.write_aggregate(agg, out_dir / "aggregate.csv")
        evalharness.plot_curves({config.abbreviation: agg},
                                out_dir / "curve.svg")
    elif len(metrics_paths) >= 2:
        # early stops leave unequal step grids; per-seed CSVs remain usable
        artifacts_note["aggregate_skipped"] = "early stop desynced step grids"

    merged = json.loads(config.to_json())
    merged.update(_args_dict(args))
    merged.update(artifacts_note)
    _write_manifest(out_dir, "train", merged, _relative_files(out_dir))
    _print({"experiment": config.abbreviation, "out": str(out_dir),
            "runs": summary})
    return 0


def cmd_train(args) -> int:
    return _run_training(args, require_source=False)


def cmd_transfer_train(args) -> int:
    return _run_training(args, require_source=True)


def cmd_eval(args) -> int:
    params = net.load_checkpoint(args.checkpoint)
    lset = levels.load_level_set(args.levels)
    result = evalharness.evaluate(
        params, lset.levels, args.seed,
        episodes_per_level=args.episodes_per_level,
        mode=args.eval_mode, palette=args.palette,
    )
    _print({
        "checkpoint": str(args.checkpoint),
        "episodes": result.n_episodes,
        "solved_ratio": result.solved_ratio,
        "mean_return": result.mean_return,
        "mode": args.eval_mode,
    })
    return 0


def cmd_aggregate(args) -> int:
    paths = []
    for item in args.runs.split(","):
        p = Path(item)
        paths.append(p / "metrics.csv" if p.is_dir() else p)
    agg = evalharness.aggregate_files(paths, args.field)
    out = Path(args.out)
    evalharness.write_aggregate(agg, out)
    _print({"out": str(out), "n_runs": agg.n_runs,
            "points": len(agg.env_steps),
            "final_mean": agg.mean[-1], "final_ci": agg.ci_halfwidth[-1]})
    return 0


def cmd_plot(args) -> int:
    curves = {}
    for item in args.curves.split(","):
        label, _, path = item.partition("=")
        if not path:
            raise ValueError(f"--curves items are label=path, got {item!r}")
        curves[label] = evalharness.read_aggregate(path)
    out = evalharness.plot_curves(curves, args.out, title=args.title,
                                  ylabel=args.ylabel)
    _print({"out": str(out), "curves": list(curves)})
    return 0


def cmd_dump_features(args) -> int:
    params = net.load_checkpoint(args.checkpoint)
    lset = levels.load_level_set(args.levels)
    level = _pick_level(lset, args)
    state = engine.reset(level)
    if args.walk_steps:
        rng = np.random.default_rng(
            np.random.SeedSequence([args.seed, transfer.WALK_STREAM_NS])
        )
        for _ in range(args.walk_steps):
            state, out = engine.step(state, int(rng.integers(4)))
            if out.done:
                state = engine.reset(level)
    out_dir = _out_root(args.out)
    evalharness.dump_feature_maps(params, state, out_dir, args.palette)
    _write_manifest(out_dir, "dump-features", _args_dict(args),
                    _relative_files(out_dir))
    _print({"out": str(out_dir), "level": level.id})
    return 0


def cmd_verify(args) -> int:
    ok = verify.run_all(sys.stdout)
    print("verify: all checks passed" if ok else "verify: FAILURES above")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# argument wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sokotl",
        description="Sokoban transfer-learning lab: level generation, "
                    "pixel A2C training, layer transplants, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-levels", help="generate a solvable level set")
    p.add_argument("--boxes", type=int, required=True, choices=(1, 2, 3))
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out")
    p.add_argument("--wall-density", type=float, default=0.15)
    p.add_argument("--min-len", type=int, default=3)
    p.add_argument("--max-len", type=int, default=60)
    p.add_argument("--node-budget", type=int, default=planner.DEFAULT_NODE_BUDGET)
    p.add_argument("--attempts", type=int, default=400)
    p.add_argument("--split", help="N_TRAIN,N_TEST disjoint subsets")
    p.set_defaults(func=cmd_gen_levels)

    p = sub.add_parser("solve", help="optimal plan for one stored level")
    p.add_argument("--levels", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--id")
    p.add_argument("--node-budget", type=int, default=planner.DEFAULT_NODE_BUDGET)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("stats", help="optimal-length histogram of a level set")
    p.add_argument("--levels", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("pretrain-sl", help="train the agent-position "
                                           "classifier on random-walk states")
    p.add_argument("--levels", required=True)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--max-epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--palette", default="base", choices=textures.PALETTES)
    p.set_defaults(func=cmd_pretrain_sl)

    for name, func, needs_source in (
        ("train", cmd_train, False),
        ("transfer-train", cmd_transfer_train, True),
    ):
        p = sub.add_parser(
            name,
            help="train policies (transfer modes transplant source layers)"
            if name == "train" else
            "train with transplanted frozen layers from a source checkpoint",
        )
        p.add_argument("--levels", required=True)
        p.add_argument("--eval-levels")
        p.add_argument("--experiment", required=needs_source,
                       help="abbreviation like s1t3k2 or s1t1fc_game2")
        p.add_argument("--task", choices=experiments.TASKS,
                       help="from-scratch target when no --experiment given")
        p.add_argument("--config", help="experiment JSON (flags override)")
        p.add_argument("--source-checkpoint")
        p.add_argument("--seeds", help="count like 5, or list like 0,3,9")
        p.add_argument("--budget-steps", type=int)
        p.add_argument("--out")
        p.add_argument("--eval-every", type=int, default=1000)
        p.add_argument("--episodes-per-level", type=int, default=1,
                       help="eval episodes per test level per eval point")
        p.add_argument("--eval-mode", default="sample",
                       choices=evalharness.EVAL_MODES)
        p.add_argument("--max-grad-norm", type=float,
                       help="global-norm gradient clip; off when absent")
        p.add_argument("--palette", choices=textures.PALETTES)
        p.add_argument("--deterministic", action="store_true")
        p.add_argument("--stop-at-solved", type=float)
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a level set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--levels", required=True)
    p.add_argument("--episodes-per-level", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eval-mode", default="sample",
                   choices=evalharness.EVAL_MODES)
    p.add_argument("--palette", default="base", choices=textures.PALETTES)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("aggregate", help="combine per-seed metrics CSVs")
    p.add_argument("--runs", required=True,
                   help="comma list of run dirs or metrics.csv paths")
    p.add_argument("--out", required=True)
    p.add_argument("--field", default="solved_ratio")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("plot", help="learning curves from aggregate CSVs")
    p.add_argument("--curves", required=True,
                   help="comma list of label=aggregate.csv")
    p.add_argument("--out", required=True)
    p.add_argument("--title")
    p.add_argument("--ylabel", default="solved ratio")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("dump-features", help="conv feature maps for a state")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--levels", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--id")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--walk-steps", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--palette", default="base", choices=textures.PALETTES)
    p.set_defaults(func=cmd_dump_features)

    p = sub.add_parser("verify", help="run the invariant suite")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        record = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
