"""Command-line front end.

    clstream synth   --classes 10 --per-class 20 --dim 16 --seed 7 -o train.manifest
    clstream build   --dataset train.manifest --config ci.toml -o ci.scenario
    clstream inspect ci.scenario
    clstream dump    --scenario ci.scenario --task 0 -o task0.manifest
    clstream metrics predictions.log

Exit status is 0 on success, 1 on user or input errors (the diagnostic on
stderr names the error class) and 2 on internal failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import traceback
from typing import Sequence

from .dataset import SynthSpec, load_manifest, parse_shape, synth_dataset, write_manifest
from .errors import ScenarioError
from .metrics import load_prediction_log, logger_from_log, report
from .scenario import build_scenario, get_taskset, load_scenario, load_scenario_config, write_scenario


class UsageError(ScenarioError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits 2 by default; usage errors are user errors
        raise UsageError(message)


def cmd_synth(args: argparse.Namespace) -> int:
    shape = parse_shape(args.image_shape) if args.image_shape else None
    spec = SynthSpec(
        nb_classes=args.classes,
        per_class=args.per_class,
        feature_dim=args.dim,
        seed=args.seed,
        class_separation=args.separation,
        image_shape=shape,
        nb_sessions=args.sessions,
    )
    write_manifest(synth_dataset(spec, args.split, inline=not args.lazy), args.output)
    return 0


def cmd_build(args: argparse.Namespace) -> int:
    dataset = load_manifest(args.dataset)
    spec = load_scenario_config(args.config, dataset.image_shape)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    scenario = build_scenario(dataset, spec)
    write_scenario(scenario, args.output, args.dataset)
    return 0


def cmd_inspect(args: argparse.Namespace) -> int:
    dataset = load_manifest(args.dataset) if args.dataset else None
    scenario = load_scenario(args.scenario, dataset)
    ds = scenario.dataset
    policy = scenario.spec.label_policy
    print(f"scenario: {scenario.spec.kind} over {ds.name} ({ds.split}, {len(ds)} samples)")
    print(f"tasks: {scenario.nb_tasks}, classes: {scenario.nb_classes}")
    print(f"task labels: {'exposed' if policy.exposes(ds.split) else 'hidden'}")
    for task in scenario.tasks:
        classes = ",".join(map(str, task.classes))
        new = ",".join(map(str, task.new_classes)) or "-"
        print(
            f"task {task.task_id}: size {len(task.indices)}, classes [{classes}], "
            f"new [{new}], transform {task.transform.describe()}"
        )
    return 0


def cmd_dump(args: argparse.Namespace) -> int:
    dataset = load_manifest(args.dataset) if args.dataset else None
    scenario = load_scenario(args.scenario, dataset)
    write_manifest(get_taskset(scenario, args.task).to_manifest(), args.output)
    return 0


def cmd_metrics(args: argparse.Namespace) -> int:
    text = report(logger_from_log(load_prediction_log(args.log)))
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="clstream", description="Continual-learning scenario engine.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic Gaussian dataset manifest")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--separation", type=float, default=4.0, help="minimum distance between class means")
    p.add_argument("--image-shape", help="HxW, must multiply to --dim")
    p.add_argument("--sessions", type=int, help="assign meta_id = draw %% SESSIONS")
    p.add_argument("--split", choices=("train", "test"), default="train")
    p.add_argument("--lazy", action="store_true", help="store generator coordinates instead of vectors")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build", help="materialize a scenario from a dataset and a TOML config")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=_seed, help="override the config seed")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("inspect", help="summarize a scenario manifest")
    p.add_argument("scenario")
    p.add_argument("--dataset", help="dataset manifest (default: path recorded in the scenario)")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("dump", help="write one task, transformed, as a dataset manifest")
    p.add_argument("--scenario", required=True)
    p.add_argument("--task", type=int, required=True)
    p.add_argument("--dataset", help="dataset manifest (default: path recorded in the scenario)")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_dump)

    p = sub.add_parser("metrics", help="compute the metric report of a prediction log")
    p.add_argument("log")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
        return 1
    except (OSError, UnicodeDecodeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
